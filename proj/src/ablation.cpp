#include "mdfl/ablation.hpp"

#include <map>
#include <ostream>
#include <sstream>
#include <iomanip>

#include "mdfl/errors.hpp"
#include "mdfl/pipeline.hpp"

namespace mdfl {

Sweep parse_sweep(const std::string& name) {
  if (name == "single_steps") return Sweep::single_steps;
  if (name == "no_freq") return Sweep::no_freq;
  if (name == "no_frm") return Sweep::no_frm;
  if (name == "all") return Sweep::all;
  throw ValidationError("unknown sweep '" + name + "' (expected single_steps, no_freq, no_frm or all)");
}

std::vector<AblationVariant> ablation_variants(const RunConfig& base, Sweep sweep) {
  std::vector<AblationVariant> out{{"fused", base, std::nullopt}};
  if (sweep == Sweep::single_steps || sweep == Sweep::all) {
    for (auto t : base.ablation.fuse_steps) {
      auto c = base;
      c.ablation.fuse_steps = {t};
      out.push_back({"step_" + std::to_string(t), c, t});
    }
  }
  if (sweep == Sweep::no_freq || sweep == Sweep::all) {
    auto c = base;
    c.ablation.use_freq_parser = false;
    out.push_back({"no_freq", c, std::nullopt});
  }
  if (sweep == Sweep::no_frm || sweep == Sweep::all) {
    auto c = base;
    c.ablation.use_frm = false;
    out.push_back({"no_frm", c, std::nullopt});
  }
  return out;
}

std::optional<double> AblationReport::mean_oa(const std::string& variant) const {
  for (const auto& m : means) {
    if (m.variant == variant) return m.oa;
  }
  return std::nullopt;
}

AblationReport run_ablation(const Scene& raw, const RunConfig& base, Sweep sweep, const std::vector<std::uint64_t>& seeds,
                            std::ostream* progress) {
  if (seeds.empty()) throw ValidationError("ablation needs at least one seed");
  const auto variants = ablation_variants(base, sweep);
  AblationReport report;
  for (auto seed : seeds) {
    std::map<std::pair<std::vector<std::size_t>, bool>, std::pair<Encoder<float>, Encoder<float>>> encoders;
    for (const auto& v : variants) {
      auto cfg = v.config;
      cfg.seed = seed;
      if (progress) *progress << "ablation: variant " << v.name << " seed " << seed << '\n' << std::flush;
      const auto data = prepare_data(cfg, raw);
      const auto key = std::pair{cfg.ablation.fuse_steps, cfg.ablation.use_freq_parser};
      auto it = encoders.find(key);
      if (it == encoders.end()) {
        auto e1 = train_diffusion(data, cfg, Modality::hsi).encoder;
        auto e2 = train_diffusion(data, cfg, Modality::lidar).encoder;
        it = encoders.emplace(key, std::pair{std::move(e1), std::move(e2)}).first;
      }
      auto cls = train_classifier(data, cfg, it->second.first, it->second.second);
      const auto m = evaluate(cls.model, data);
      report.runs.push_back({v.name, seed, m.oa, m.aa, m.kappa});
      if (progress) *progress << "ablation: " << v.name << " seed " << seed << " oa " << m.oa << '\n' << std::flush;
    }
  }
  for (const auto& v : variants) {
    AblationRow mean{v.name, 0, 0, 0, 0};
    for (const auto& r : report.runs) {
      if (r.variant != v.name) continue;
      mean.oa += r.oa;
      mean.aa += r.aa;
      mean.kappa += r.kappa;
    }
    const double n = static_cast<double>(seeds.size());
    mean.oa /= n;
    mean.aa /= n;
    mean.kappa /= n;
    report.means.push_back(mean);
  }
  return report;
}

std::string ablation_csv(const AblationReport& report) {
  std::ostringstream out;
  out << std::setprecision(9) << "variant,seed,oa,aa,kappa\n";
  for (const auto& r : report.runs) out << r.variant << ',' << r.seed << ',' << r.oa << ',' << r.aa << ',' << r.kappa << '\n';
  for (const auto& r : report.means) out << r.variant << ",mean," << r.oa << ',' << r.aa << ',' << r.kappa << '\n';
  return out.str();
}

std::string single_step_curve_csv(const AblationReport& report, const RunConfig& base) {
  std::ostringstream out;
  out << std::setprecision(9) << "step,seed,oa,fused_oa\n";
  std::map<std::uint64_t, double> fused;
  for (const auto& r : report.runs) {
    if (r.variant == "fused") fused[r.seed] = r.oa;
  }
  for (auto t : base.ablation.fuse_steps) {
    const std::string name = "step_" + std::to_string(t);
    for (const auto& r : report.runs) {
      if (r.variant == name) out << t << ',' << r.seed << ',' << r.oa << ',' << fused[r.seed] << '\n';
    }
  }
  return out.str();
}

}  // namespace mdfl
