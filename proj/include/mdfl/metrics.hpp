#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mdfl {

/// Rows are true classes, columns predictions (0-based class index = label - 1).
using Confusion = std::vector<std::vector<long>>;

struct MetricsReport {
  Confusion confusion;
  double oa = 0.0;
  double aa = 0.0;
  double kappa = 0.0;
  std::vector<std::optional<double>> per_class;  // recall; empty for classes absent from the test set
  std::vector<std::string> warnings;
  long total = 0;
};

/// OA = trace/total, AA = mean recall over classes present, kappa = (p_o - p_e)/(1 - p_e).
MetricsReport compute_metrics(const Confusion& confusion);

/// Labels are 1..K.
MetricsReport metrics_from_labels(std::span<const std::uint16_t> truth, std::span<const std::uint16_t> predicted,
                                  std::size_t classes);

/// {"oa","aa","kappa","confusion","per_class"}; absent classes are null.
std::string metrics_json(const MetricsReport& report);

}  // namespace mdfl
