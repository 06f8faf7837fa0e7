#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdfl/config.hpp"
#include "mdfl/scene.hpp"

namespace mdfl {

enum class Sweep { single_steps, no_freq, no_frm, all };
Sweep parse_sweep(const std::string& name);

struct AblationVariant {
  std::string name;  // "fused", "step_<t>", "no_freq", "no_frm"
  RunConfig config;
  std::optional<std::size_t> single_step;
};

/// The reference run first, then one variant per switch. Only the switch
/// differs from `base`.
std::vector<AblationVariant> ablation_variants(const RunConfig& base, Sweep sweep);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double oa = 0, aa = 0, kappa = 0;
};

struct AblationReport {
  std::vector<AblationRow> runs;  // one per (variant, seed)
  std::vector<AblationRow> means;  // one per variant, seed field unused
  std::optional<double> mean_oa(const std::string& variant) const;
};

/// Runs every variant for every seed on the same scene. Encoders are shared
/// between variants whose pretraining inputs coincide (no_frm reuses the
/// reference encoders).
AblationReport run_ablation(const Scene& raw, const RunConfig& base, Sweep sweep, const std::vector<std::uint64_t>& seeds,
                            std::ostream* progress = nullptr);

/// variant,seed,oa,aa,kappa per run followed by variant,mean,... rows.
std::string ablation_csv(const AblationReport& report);
/// step,seed,oa,fused_oa: single-step accuracy against the fused reference.
std::string single_step_curve_csv(const AblationReport& report, const RunConfig& base);

}  // namespace mdfl
