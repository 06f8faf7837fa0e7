#include "mdfl/metrics.hpp"

#include <nlohmann/json.hpp>

#include "mdfl/errors.hpp"

namespace mdfl {

MetricsReport compute_metrics(const Confusion& confusion) {
  const std::size_t k = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != k) throw ValidationError("confusion matrix must be square");
  }
  MetricsReport r;
  r.confusion = confusion;
  std::vector<long> rows(k, 0), cols(k, 0);
  long trace = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const long v = confusion[i][j];
      if (v < 0) throw ValidationError("negative confusion entry");
      rows[i] += v;
      cols[j] += v;
      r.total += v;
    }
    trace += confusion[i][i];
  }
  if (r.total == 0) throw ValidationError("empty confusion matrix");
  const double n = static_cast<double>(r.total);
  r.oa = static_cast<double>(trace) / n;

  double recall_sum = 0;
  std::size_t present = 0;
  r.per_class.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (rows[i] == 0) {
      r.warnings.push_back("class " + std::to_string(i + 1) + " has no test samples; excluded from AA");
      continue;
    }
    r.per_class[i] = static_cast<double>(confusion[i][i]) / static_cast<double>(rows[i]);
    recall_sum += *r.per_class[i];
    ++present;
  }
  r.aa = recall_sum / static_cast<double>(present);

  double pe = 0;
  for (std::size_t i = 0; i < k; ++i) pe += static_cast<double>(rows[i]) * static_cast<double>(cols[i]);
  pe /= n * n;
  r.kappa = pe < 1.0 ? (r.oa - pe) / (1.0 - pe) : (r.oa >= 1.0 ? 1.0 : 0.0);
  return r;
}

MetricsReport metrics_from_labels(std::span<const std::uint16_t> truth, std::span<const std::uint16_t> predicted,
                                  std::size_t classes) {
  if (truth.size() != predicted.size()) throw ValidationError("truth and prediction lengths differ");
  Confusion c(classes, std::vector<long>(classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 1 || truth[i] > classes || predicted[i] < 1 || predicted[i] > classes) {
      throw ValidationError("label outside 1.." + std::to_string(classes));
    }
    ++c[truth[i] - 1][predicted[i] - 1];
  }
  return compute_metrics(c);
}

std::string metrics_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["oa"] = r.oa;
  j["aa"] = r.aa;
  j["kappa"] = r.kappa;
  j["confusion"] = r.confusion;
  auto per = nlohmann::ordered_json::array();
  for (const auto& v : r.per_class) per.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr));
  j["per_class"] = per;
  return j.dump(2) + "\n";
}

}  // namespace mdfl
