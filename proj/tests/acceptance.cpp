// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance [--out DIR] [--only N,...]
//   [--ablation-epochs N] [--ablation-seeds a,b,c]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mdfl/ablation.hpp"
#include "mdfl/backbone.hpp"
#include "mdfl/dft.hpp"
#include "mdfl/diffusion.hpp"
#include "mdfl/fusion_head.hpp"
#include "mdfl/grad_check.hpp"
#include "mdfl/metrics.hpp"
#include "mdfl/ops.hpp"
#include "mdfl/pipeline.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mdfl;
using mdfl::testing::random_tensor;
using VarSpan = std::span<const Var<double>>;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTol = 1e-3;
constexpr double kGradBudgetS = 120;
constexpr double kMarginalBudgetS = 60;
constexpr std::size_t kMarginalDraws = 100000;
constexpr std::size_t kPosteriorChains = 1000000;
constexpr double kHandTol = 5e-5;  // "to 4 decimals"
constexpr double kFreqTol = 1e-5;
constexpr double kParsevalTol = 1e-4;
constexpr double kKappaSweepTol = 1e-12;
constexpr double kDeskOa = 0.95, kDeskKappa = 0.90, kDeskBudgetS = 15 * 60;
constexpr std::uint64_t kSceneSeed = 1, kRunSeed = 1;

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---- criterion 1 ------------------------------------------------------------

void perturb(Encoder<double>& e, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& b : e.blocks) {
    b.conv2_w.value = Tensor<double>::randn(b.conv2_w.value.shape(), rng, 0.2);
    b.freq.value = Tensor<double>::uniform(b.freq.value.shape(), rng, -1.0, 1.0);
  }
  e.attn.wo.value = Tensor<double>::randn(e.attn.wo.value.shape(), rng, 0.3);
  e.head_w.value = Tensor<double>::randn(e.head_w.value.shape(), rng, 0.3);
}

// Fractional offsets away from the integer kinks of bilinear sampling.
FrmParams<double> random_frm(std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = FrmParams<double>::init(width, rng, "");
  for (auto* o : {&p.fd, &p.fl}) {
    o->offset_w.value = Tensor<double>::randn(o->offset_w.value.shape(), rng, 0.03);
    o->offset_b.value = Tensor<double>::uniform({2}, rng, 0.2, 0.3);
  }
  p.fb_b.value = Tensor<double>::randn({width}, rng, 0.1);
  return p;
}

EncoderConfig small_encoder(std::size_t in, std::size_t width, std::size_t heads, std::size_t patch) {
  EncoderConfig c;
  c.in_channels = in;
  c.width = width;
  c.depth = 2;
  c.heads = heads;
  c.patch = patch;
  return c;
}

Outcome criterion1() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::string worst_name;
  std::size_t cases = 0;
  auto check = [&](const std::string& name, const GradCheckFn& f, std::vector<Tensor<double>> in,
                   ParamList<double> params = {}) {
    const auto r = grad_check(name, f, std::move(in), std::move(params));
    ++cases;
    if (r.max_rel_error > worst || worst_name.empty()) {
      worst = std::max(worst, r.max_rel_error);
      worst_name = name + " " + r.worst;
    }
  };
  for (std::uint64_t v = 0; v < 3; ++v) {
    const std::size_t h = 2 + v, w = 3 + v % 2, c = 1 + v;
    check("matmul", [](VarSpan in) { return matmul(in[0], in[1]); },
          {random_tensor({2 + v, 3}, 10 + v), random_tensor({3, 1 + 2 * v}, 20 + v)});
    check("conv1x1", [](VarSpan in) { return conv2d_1x1(in[0], in[1], in[2]); },
          {random_tensor({h, w, c}, 30 + v), random_tensor({c, 3}, 40 + v), random_tensor({3}, 50 + v)});
    check("conv3x3", [](VarSpan in) { return conv2d_3x3(in[0], in[1], in[2]); },
          {random_tensor({h, w, c}, 60 + v), random_tensor({3, 3, c, 2}, 70 + v), random_tensor({2}, 80 + v)});
    check("sigmoid", [](VarSpan in) { return sigmoid(in[0]); }, {random_tensor({3 + v, 2}, 90 + v, -4, 4)});
    check("softmax", [](VarSpan in) { return softmax_lastdim(in[0]); }, {random_tensor({2 + v, 5}, 100 + v, -3, 3)});
    check("fft_ifft", [](VarSpan in) { return ifft2d(complex_mul(fft2d(in[0]), in[1])); },
          {random_tensor({3 + v, 2 + 2 * v, 2}, 110 + v), random_tensor({3 + v, 2 + 2 * v, 2, 2}, 120 + v)});

    const std::size_t n = 3 + v, heads = v == 0 ? 1 : 2;
    check("attention",
          [&](VarSpan in) {
            auto qkv = qkv_project(in[0], in[1], in[2], in[3]);
            return multihead_attention(qkv.q, qkv.k, qkv.v, heads, in[4]);
          },
          {random_tensor({1 + v % 2, n, 4}, 130 + v), random_tensor({4, 4}, 140 + v), random_tensor({4, 4}, 150 + v),
           random_tensor({4, 4}, 160 + v), random_tensor({4, 4}, 170 + v)});

    const std::size_t p = 3 + 2 * v;
    check("freq_parse", [](VarSpan in) { return freq_parse(in[0], in[1]); },
          {random_tensor({1 + v % 2, p, p, 2}, 180 + v), random_tensor({p, p / 2 + 1, 2, 2}, 190 + v)});

    std::mt19937_64 rng(200 + v);
    auto enc = Encoder<double>::init(small_encoder(2, 2 + v, 1, p), rng, "");
    perturb(enc, 210 + v);
    auto& b = enc.blocks[0];
    check("residual_block", [&](VarSpan in) { return residual_block(in[0], b); },
          {random_tensor({1, p, p, 2 + v}, 220 + v)}, {&b.conv1_w, &b.conv1_b, &b.conv2_w, &b.conv2_b, &b.freq});

    auto frm = random_frm(2 + v % 2, 230 + v);
    check("frm_fuse", [&](VarSpan in) { return frm_fuse(in[0], in[1], frm); },
          {random_tensor({1, h + 1, h + 2, 2 + v % 2}, 240 + v), random_tensor({1, h + 1, h + 2, 2 + v % 2}, 250 + v)},
          frm.params());

    auto oc = random_frm(2 + v, 260 + v);
    check("offset_conv1x1", [&](VarSpan in) { return offset_conv1x1(in[0], oc.fd); },
          {random_tensor({1, 4 + v, 3 + v, 2 + v}, 270 + v)},
          {&oc.fd.offset_w, &oc.fd.offset_b, &oc.fd.w, &oc.fd.b});

    const std::size_t ep = 3 + 2 * v, ein = 2 + 2 * v;
    std::mt19937_64 erng(280 + v);
    auto full = Encoder<double>::init(small_encoder(ein, 4, 2, ep), erng, "");
    perturb(full, 290 + v);
    const auto target = random_tensor({1, ep, ep, ein}, 300 + v);
    check("encode+decode",
          [&](VarSpan in) {
            return denoise_loss(decode_head(encode(in[0], full).deep, full), in[0].tape().constant(target));
          },
          {random_tensor({1, ep, ep, ein}, 310 + v)}, full.params());
  }
  const double secs = since(t0);
  return {worst < kGradTol && secs < kGradBudgetS,
          std::to_string(cases) + " checks, max rel err " + fmt(worst, 3) + " (" + worst_name + "), " + fmt(secs, 3) +
              " s"};
}

// ---- criterion 2 ------------------------------------------------------------

Outcome criterion2() {
  const auto t0 = Clock::now();
  const auto s = build_schedule();
  Outcome o;
  std::size_t checks = 0;
  for (std::size_t t : {50u, 100u, 200u, 400u}) {
    for (double x0 : {-0.4, 0.3, 1.0}) {
      const auto r = mdfl::testing::forward_marginal(
          [&](double x, double e) { return forward_noise(Tensor<double>({1}, x), t, Tensor<double>({1}, e), s)[0]; },
          x0, s.alpha_bar[t], kMarginalDraws, t * 31 + 7);
      checks += 2;
      if (!r.mean.ok() || !r.var.ok()) {
        o.pass = false;
        o.detail += "t=" + std::to_string(t) + " x0=" + fmt(x0) + " off; ";
      }
    }
  }
  const double secs = since(t0);
  o.pass = o.pass && secs < kMarginalBudgetS;
  o.detail += std::to_string(checks) + " moment checks, " + fmt(secs, 3) + " s";
  return o;
}

// ---- criterion 3 ------------------------------------------------------------

Outcome criterion3() {
  Outcome o;
  const auto s = build_schedule();
  const double z0 = 0.6;
  for (std::size_t t : {2u, 10u}) {
    for (double bucket : {-1.0, 0.0, 1.0}) {
      const auto post = posterior_params(Tensor<double>({1}, z0), Tensor<double>({1}, 0.0), t, s);
      const auto mu = [&](double zt) {
        return posterior_params(Tensor<double>({1}, z0), Tensor<double>({1}, zt), t, s).mean[0];
      };
      const auto r = mdfl::testing::posterior_oracle(s, z0, t, bucket, mu, post.var, kPosteriorChains, 100 * t + 3);
      if (!r.residual_mean.ok() || !r.residual_var.ok()) {
        o.pass = false;
        o.detail += "t=" + std::to_string(t) + " bucket " + fmt(bucket) + " outside 3 SE; ";
      }
    }
  }
  const auto hand = NoiseSchedule::linear(2, 0.1, 0.2);
  const double c0 = posterior_params(Tensor<double>({1}, 1.0), Tensor<double>({1}, 0.0), 2, hand).mean[0];
  const double ct = posterior_params(Tensor<double>({1}, 0.0), Tensor<double>({1}, 1.0), 2, hand).mean[0];
  const double var = posterior_params(Tensor<double>({1}, 1.0), Tensor<double>({1}, 0.0), 2, hand).var;
  const bool hand_ok =
      std::abs(c0 - 0.6776) < kHandTol && std::abs(ct - 0.3194) < kHandTol && std::abs(var - 0.0714) < kHandTol;
  o.pass = o.pass && hand_ok;
  o.detail += "MC oracle at t=2,10 with 1e6 chains; hand T=2 coefficients " + fmt(c0) + " / " + fmt(ct) + ", var " +
              fmt(var);
  return o;
}

// ---- criterion 4 ------------------------------------------------------------

Outcome criterion4() {
  double id_err = 0, dc_err = 0, parseval_err = 0;
  for (std::size_t p : {7u, 6u, 5u}) {
    const std::size_t c = 3;
    const auto x = random_tensor({2, p, p, c}, 400 + p);
    Tensor<double> ident({p, p / 2 + 1, c, 2}), dc({p, p / 2 + 1, c, 2});
    for (std::size_t i = 0; i < ident.size(); i += 2) ident[i] = 1.0;
    for (std::size_t ch = 0; ch < c; ++ch) dc.at({0, 0, ch, 0}) = 1.0;
    Tape<double> tape;
    const auto same = freq_parse(tape.constant(x), tape.constant(ident)).value();
    const auto mean = freq_parse(tape.constant(x), tape.constant(dc)).value();
    id_err = std::max(id_err, max_abs_diff(same, x));
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::vector<double> plane(p * p);
        for (std::size_t i = 0; i < p * p; ++i) plane[i] = x[(b * p * p + i) * c + ch];
        const double want = mdfl::testing::naive_dft2(plane, p, p)[0].real() / static_cast<double>(p * p);
        for (std::size_t i = 0; i < p * p; ++i) dc_err = std::max(dc_err, std::abs(mean[(b * p * p + i) * c + ch] - want));
      }
    }
    const auto m = fft2d(x);
    double energy = 0, spec = 0;
    for (auto v : x.data()) energy += v * v;
    for (std::size_t i = 0; i < m.size(); ++i) spec += m.real[i] * m.real[i] + m.imag[i] * m.imag[i];
    parseval_err = std::max(parseval_err, std::abs(spec / static_cast<double>(p * p) / energy - 1.0));
  }
  return {id_err < kFreqTol && dc_err < kFreqTol && parseval_err < kParsevalTol,
          "identity " + fmt(id_err, 2) + ", DC " + fmt(dc_err, 2) + ", Parseval rel " + fmt(parseval_err, 2)};
}

// ---- criterion 5 ------------------------------------------------------------

Outcome criterion5() {
  const auto r = compute_metrics({{50, 10}, {5, 35}});
  const bool hand = std::abs(r.oa - 0.85) < kHandTol && std::abs(r.aa - 0.8542) < kHandTol &&
                    std::abs(r.kappa - 0.6939) < kHandTol;
  std::mt19937_64 rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng() % 7;
    Confusion c(k, std::vector<long>(k));
    for (auto& row : c) {
      for (auto& v : row) v = static_cast<long>(rng() % 60);
    }
    c[0][0] += 1;
    worst = std::max(worst, std::abs(compute_metrics(c).kappa - mdfl::testing::kappa_oracle(c)));
  }
  return {hand && worst <= kKappaSweepTol, "hand OA " + fmt(r.oa) + " AA " + fmt(r.aa) + " kappa " + fmt(r.kappa) +
                                               "; 1000-matrix sweep max diff " + fmt(worst, 2)};
}

// ---- criteria 6 and 8 -------------------------------------------------------

RunConfig desk_config() {
  RunConfig cfg;
  cfg.seed = kRunSeed;
  cfg.width = 16;
  cfg.depth = 2;
  cfg.heads = 2;
  cfg.diffusion_epochs = 100;
  cfg.classifier_epochs = 100;
  return cfg;
}

struct DeskRun {
  MetricsReport metrics;
  std::string json;
  double secs = 0;
};

DeskRun desk_run() {
  const auto t0 = Clock::now();
  const auto cfg = desk_config();
  const auto data = prepare_data(cfg, synth_scene(SynthSpec{}, kSceneSeed));
  auto out = run_pipeline(data, cfg);
  DeskRun r{out.metrics, metrics_json(out.metrics), 0};
  r.secs = since(t0);
  return r;
}

// ---- criterion 7 ------------------------------------------------------------

Outcome criterion7(const std::filesystem::path& out_dir, std::size_t epochs, const std::vector<std::uint64_t>& seeds) {
  auto cfg = desk_config();
  cfg.diffusion_epochs = epochs;
  cfg.classifier_epochs = epochs;
  const auto t0 = Clock::now();
  const auto report = run_ablation(synth_scene(SynthSpec{}, kSceneSeed), cfg, Sweep::all, seeds, &std::cerr);
  std::filesystem::create_directories(out_dir);
  std::ofstream(out_dir / "ablation_all.csv") << ablation_csv(report);
  std::ofstream(out_dir / "single_step_curve.csv") << single_step_curve_csv(report, cfg);

  Outcome o;
  const double fused = report.mean_oa("fused").value();
  std::string beaten;
  for (auto t : cfg.ablation.fuse_steps) {
    const std::string name = "step_" + std::to_string(t);
    const double single = report.mean_oa(name).value();
    if (single > fused) {
      o.pass = false;
      beaten += " " + name + "=" + fmt(single);
    }
  }
  const double no_freq = report.mean_oa("no_freq").value(), no_frm = report.mean_oa("no_frm").value();
  o.detail = "fused mean OA " + fmt(fused) + (beaten.empty() ? " >= every single step" : "; beaten by" + beaten) +
             " | diagnostics: no_freq " + fmt(no_freq) + (no_freq <= fused ? " (not higher)" : " (higher)") +
             ", no_frm " + fmt(no_frm) + (no_frm <= fused ? " (not higher)" : " (higher)") + "; " +
             std::to_string(seeds.size()) + " seeds x " + std::to_string(epochs) + " epochs, " + fmt(since(t0), 4) +
             " s, csv in " + (out_dir / "ablation_all.csv").string();
  return o;
}

std::vector<std::uint64_t> parse_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) out.push_back(std::stoull(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::filesystem::path out_dir = "acceptance_out";
  std::vector<std::uint64_t> only;
  std::size_t ablation_epochs = 30;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3};
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i], value = argv[i + 1];
    if (key == "--out") out_dir = value;
    else if (key == "--only") only = parse_list(value);
    else if (key == "--ablation-epochs") ablation_epochs = std::stoul(value);
    else if (key == "--ablation-seeds") ablation_seeds = parse_list(value);
    else {
      std::cerr << "unknown option " << key << "\n";
      return 2;
    }
  }
  auto wanted = [&](std::uint64_t n) { return only.empty() || std::find(only.begin(), only.end(), n) != only.end(); };

  int failures = 0;
  auto print = [&](int n, const Outcome& o) {
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
    failures += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };

  if (wanted(1)) print(1, guarded(criterion1));
  if (wanted(2)) print(2, guarded(criterion2));
  if (wanted(3)) print(3, guarded(criterion3));
  if (wanted(4)) print(4, guarded(criterion4));
  if (wanted(5)) print(5, guarded(criterion5));

  std::optional<DeskRun> first;
  if (wanted(6) || wanted(8)) {
    print(6, guarded([&] {
      first = desk_run();
      const auto& m = first->metrics;
      return Outcome{m.oa >= kDeskOa && m.kappa >= kDeskKappa && first->secs < kDeskBudgetS,
                     "OA " + fmt(m.oa) + " kappa " + fmt(m.kappa) + " in " + fmt(first->secs, 4) + " s"};
    }));
  }
  if (wanted(7)) print(7, guarded([&] { return criterion7(out_dir, ablation_epochs, ablation_seeds); }));
  if (wanted(8)) {
    print(8, guarded([&] {
      if (!first) return Outcome{false, "criterion 6 run missing"};
      const auto second = desk_run();
      const bool same = second.json == first->json;
      return Outcome{same, same ? "metrics JSON identical (" + std::to_string(first->json.size()) + " bytes)"
                                : "metrics JSON differs between runs"};
    }));
  }
  std::cout << (failures ? std::to_string(failures) + " criterion(s) failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
