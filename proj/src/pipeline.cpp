#include "mdfl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "mdfl/errors.hpp"
#include "mdfl/ops.hpp"
#include "mdfl/optim.hpp"
#include "mdfl/rng.hpp"

namespace mdfl {

namespace {

constexpr std::uint64_t kInitKey = 10, kFusionInitKey = 20, kPixelNoiseKey = 30;
constexpr std::uint64_t kDiffusionStage = 1, kClassifierStage = 2;
constexpr std::size_t kEvalChunk = 256;

Tensor<float> gather_rows(const Tensor<float>& t, std::span<const std::size_t> idx) {
  Shape s = t.shape();
  const std::size_t row = t.size() / s[0];
  s[0] = idx.size();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(t.ptr() + idx[i] * row, row, out.ptr() + i * row);
  }
  return out;
}

void put_rows(Tensor<float>& dst, std::size_t first, const Tensor<float>& src) {
  std::copy_n(src.ptr(), src.size(), dst.ptr() + first * (dst.size() / dst.dim(0)));
}

// draw 0 is the evaluation noise; classifier epochs with resampling use draw epoch + 1.
std::vector<std::uint64_t> pixel_seeds(std::uint64_t seed, std::span<const PixelCoord> coords, std::uint64_t draw = 0) {
  std::vector<std::uint64_t> out;
  out.reserve(coords.size());
  for (const auto& c : coords) {
    out.push_back(draw == 0 ? derive_seed({seed, kPixelNoiseKey, c.row, c.col})
                            : derive_seed({seed, kPixelNoiseKey, c.row, c.col, draw}));
  }
  return out;
}

const Tensor<float>& modality_patches(const PatchBatch& b, Modality m) {
  return m == Modality::hsi ? b.patches1 : b.patches2;
}

std::size_t modality_channels(const Scene& s, Modality m) {
  return m == Modality::hsi ? s.hsi.dim(2) : s.lidar.dim(2);
}

/// Fixed per-pixel noise so features of a pixel never depend on its batch.
Tensor<float> pixel_inputs(const PatchBatch& b, Modality m, const PreparedData& data, const RunConfig& cfg,
                           std::uint64_t draw = 0) {
  return fuse_steps(modality_patches(b, m), cfg.ablation.fuse_steps, data.sched, pixel_seeds(cfg.seed, b.coords, draw))
      .data;
}


Checkpoint base_checkpoint(const PreparedData& data, const RunConfig& cfg, std::string stage) {
  Checkpoint c;
  c.stage = std::move(stage);
  c.config = cfg;
  c.rng_seed = cfg.seed;
  c.hsi_channels = data.scene.hsi.dim(2);
  c.lidar_channels = data.scene.lidar.dim(2);
  c.num_classes = data.scene.num_classes;
  return c;
}

void require_resumable(const Checkpoint& c, const RunConfig& cfg, const std::string& stage, const std::string& modality,
                       const std::filesystem::path& path) {
  if (c.stage != stage || c.modality != modality) {
    throw ValidationError("checkpoint " + path.string() + " holds stage '" + c.stage + "', expected '" + stage + "'");
  }
  if (!(c.config == cfg)) throw ValidationError("checkpoint " + path.string() + " was written with a different config");
}

void report(std::ostream* out, const std::string& what, const LogRow& row, std::size_t epochs) {
  if (!out) return;
  *out << what << " epoch " << row.epoch + 1 << "/" << epochs << " lr " << row.lr << " loss " << row.loss;
  if (row.train_oa) *out << " train_oa " << *row.train_oa;
  *out << '\n' << std::flush;
}

bool should_report(std::size_t epoch, std::size_t epochs, const RunConfig& cfg) {
  return (epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == epochs;
}

}  // namespace

void DivergenceGuard::observe(double loss, std::size_t epoch, const char* stage) {
  if (!std::isfinite(loss)) {
    throw TrainingError(std::string(stage) + ": non-finite loss at epoch " + std::to_string(epoch));
  }
  if (!initial_) initial_ = loss;
  run_ = loss > 10.0 * *initial_ ? run_ + 1 : 0;
  if (run_ >= 20) {
    throw TrainingError(std::string(stage) + " diverged: loss " + std::to_string(loss) + " has exceeded 10x the initial " +
                        std::to_string(*initial_) + " for 20 consecutive epochs (epoch " + std::to_string(epoch) + ")");
  }
}

void DivergenceGuard::replay(const std::vector<LogRow>& log, const char* stage) {
  for (const auto& r : log) observe(r.loss, r.epoch, stage);
}

const char* modality_name(Modality m) { return m == Modality::hsi ? "hsi" : "lidar"; }

PreparedData prepare_data(const RunConfig& config, const Scene& raw) {
  config.validate();
  validate_scene(raw);
  PreparedData d;
  d.scene = normalize_bands(raw);
  d.split = split_samples(d.scene, config.train_fraction, config.seed);
  d.sched = NoiseSchedule::linear(config.T, config.beta_start, config.beta_end);
  return d;
}

PreparedData prepare_data(const RunConfig& config) {
  if (config.scene.empty()) throw ValidationError("config: 'scene' is required");
  return prepare_data(config, load_scene(config.scene));
}

EncoderConfig encoder_config(const RunConfig& c, std::size_t channels) {
  EncoderConfig e;
  e.in_channels = channels * c.ablation.fuse_steps.size();
  e.width = c.width;
  e.depth = c.depth;
  e.heads = c.heads;
  e.patch = c.patch;
  e.use_freq_parser = c.ablation.use_freq_parser;
  return e;
}

bool loss_trend_ok(const std::vector<LogRow>& log) {
  const std::size_t w = std::max<std::size_t>(1, log.size() / 10);
  if (log.size() < 2 * w) return true;
  auto window_mean = [&](std::size_t first) {
    double s = 0;
    for (std::size_t i = first; i < first + w; ++i) s += log[i].loss;
    return s / static_cast<double>(w);
  };
  return window_mean(log.size() - w) <= window_mean(log.size() - 2 * w);
}

DiffusionResult train_diffusion(const PreparedData& data, const RunConfig& cfg, Modality modality,
                                const RunControl& control) {
  const std::uint64_t mkey = static_cast<std::uint64_t>(modality);
  const std::string name = modality_name(modality);
  std::mt19937_64 init_rng(derive_seed({cfg.seed, kInitKey, mkey}));
  DiffusionResult result;
  result.encoder =
      Encoder<float>::init(encoder_config(cfg, modality_channels(data.scene, modality)), init_rng, name + ".");
  auto& enc = result.encoder;
  Adam<float> adam(enc.params(), {.weight_decay = cfg.weight_decay});

  std::size_t start = 0;
  if (control.resume && !control.checkpoint.empty() && std::filesystem::exists(control.checkpoint)) {
    const auto c = load_checkpoint(control.checkpoint);
    require_resumable(c, cfg, "diffusion", name, control.checkpoint);
    restore_params(c, enc.params());
    restore_adam(c, adam);
    start = c.epoch;
    result.log = c.log;
  }

  const auto& coords = data.split.train;
  const auto patches = extract_patches(data.scene, coords, cfg.patch);
  const auto& x0_all = modality_patches(patches, modality);
  const std::size_t n = coords.size(), steps = cfg.ablation.fuse_steps.size();
  DivergenceGuard guard;
  guard.replay(result.log, "diffusion");

  std::size_t ran = 0;
  for (std::size_t epoch = start; epoch < cfg.diffusion_epochs; ++epoch) {
    if (control.stop_after && ran == control.stop_after) break;
    std::mt19937_64 rng(derive_seed({cfg.seed, kDiffusionStage, mkey, epoch}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at(epoch, cfg.lr, cfg.sched_step, cfg.sched_gamma);
    double total = 0;
    for (std::size_t first = 0; first < n; first += cfg.batch) {
      const std::span<const std::size_t> idx(order.data() + first, std::min(cfg.batch, n - first));
      const auto x0 = gather_rows(x0_all, idx);
      const auto fused = fuse_steps(x0, cfg.ablation.fuse_steps, data.sched, rng);
      Tape<float> tape;
      adam.zero_grad();
      auto out = decode_head(encode(tape.constant(fused.data), enc).deep, enc);
      auto loss = denoise_loss(out, tape.constant(replicate_channels(x0, steps)));
      tape.backward(loss);
      adam.step(lr);
      total += static_cast<double>(loss.value()[0]) * static_cast<double>(idx.size());
    }
    const LogRow row{epoch, lr, total / static_cast<double>(n), std::nullopt};
    guard.observe(row.loss, epoch, "diffusion");
    result.log.push_back(row);
    ++ran;
    if (should_report(epoch, cfg.diffusion_epochs, cfg)) report(control.progress, "diffusion " + name, row, cfg.diffusion_epochs);

    const bool last = epoch + 1 == cfg.diffusion_epochs;
    const bool stopping = control.stop_after && ran == control.stop_after;
    if (!control.checkpoint.empty() && ((epoch + 1) % cfg.checkpoint_every == 0 || last || stopping)) {
      auto c = base_checkpoint(data, cfg, "diffusion");
      c.modality = name;
      c.epoch = epoch + 1;
      c.complete = last;
      c.log = result.log;
      store_params(c, enc.params());
      store_adam(c, adam);
      save_checkpoint(c, control.checkpoint);
    }
  }
  result.complete = result.log.size() == cfg.diffusion_epochs;
  if (adam.skipped()) result.warnings.push_back(std::to_string(adam.skipped()) + " optimizer steps skipped (non-finite gradients)");
  if (result.complete && !loss_trend_ok(result.log)) {
    result.warnings.push_back("diffusion " + name + ": loss rose over the final tenth of training");
  }
  return result;
}

namespace {

struct FeatureBank {
  Tensor<float> shallow1, deep1, shallow2, deep2;  // [N,p,p,w]
};

FeatureBank compute_features(TrainedModel& m, const PreparedData& data, std::span<const PixelCoord> coords,
                             std::uint64_t draw = 0) {
  const auto& cfg = m.config;
  const Shape s{coords.size(), cfg.patch, cfg.patch, cfg.width};
  FeatureBank bank{Tensor<float>(s), Tensor<float>(s), Tensor<float>(s), Tensor<float>(s)};
  for (std::size_t first = 0; first < coords.size(); first += kEvalChunk) {
    const auto chunk = coords.subspan(first, std::min(kEvalChunk, coords.size() - first));
    const auto patches = extract_patches(data.scene, chunk, cfg.patch, true);
    Tape<float> tape;
    const auto f1 = encode(tape.constant(pixel_inputs(patches, Modality::hsi, data, cfg, draw)), m.hsi);
    const auto f2 = encode(tape.constant(pixel_inputs(patches, Modality::lidar, data, cfg, draw)), m.lidar);
    put_rows(bank.shallow1, first, f1.shallow.value());
    put_rows(bank.deep1, first, f1.deep.value());
    put_rows(bank.shallow2, first, f2.shallow.value());
    put_rows(bank.deep2, first, f2.deep.value());
  }
  return bank;
}

std::size_t argmax_row(const Tensor<float>& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  const float* p = logits.ptr() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

void store_model(Checkpoint& c, TrainedModel& m) {
  store_params(c, m.hsi.params());
  store_params(c, m.lidar.params());
  store_params(c, m.fusion.params());
}

}  // namespace

ClassifierResult train_classifier(const PreparedData& data, const RunConfig& cfg, Encoder<float> hsi,
                                  Encoder<float> lidar, const RunControl& control) {
  for (auto [enc, m] : {std::pair{&hsi, Modality::hsi}, std::pair{&lidar, Modality::lidar}}) {
    const auto expected = encoder_config(cfg, modality_channels(data.scene, m));
    if (enc->config.in_channels != expected.in_channels || enc->config.width != expected.width ||
        enc->config.depth != expected.depth) {
      throw ValidationError(std::string(modality_name(m)) + " encoder does not match the config and scene");
    }
  }
  ClassifierResult result;
  auto& model = result.model;
  model.config = cfg;
  model.hsi = std::move(hsi);
  model.lidar = std::move(lidar);
  std::mt19937_64 init_rng(derive_seed({cfg.seed, kFusionInitKey}));
  model.fusion = FusionModel<float>::init(cfg.width, cfg.patch, cfg.hidden, data.scene.num_classes,
                                          cfg.ablation.use_frm, init_rng);
  model.fusion.head.tau = cfg.tau;

  ParamList<float> trainable = model.fusion.params();
  if (cfg.fine_tune) {
    for (auto* p : model.hsi.encoder_params()) trainable.push_back(p);
    for (auto* p : model.lidar.encoder_params()) trainable.push_back(p);
  }
  Adam<float> adam(trainable, {.weight_decay = cfg.weight_decay});

  std::size_t start = 0;
  if (control.resume && !control.checkpoint.empty() && std::filesystem::exists(control.checkpoint)) {
    const auto c = load_checkpoint(control.checkpoint);
    require_resumable(c, cfg, "classifier", "", control.checkpoint);
    restore_params(c, model.hsi.params());
    restore_params(c, model.lidar.params());
    restore_params(c, model.fusion.params());
    restore_adam(c, adam);
    start = c.epoch;
    result.log = c.log;
  }

  const auto& coords = data.split.train;
  const std::size_t n = coords.size();
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = data.scene.labels.at(coords[i].row, coords[i].col) - 1u;

  FeatureBank bank;
  Tensor<float> inputs1, inputs2;
  const auto patches = extract_patches(data.scene, coords, cfg.patch);
  auto draw_inputs = [&](std::uint64_t draw) {
    if (cfg.fine_tune) {
      inputs1 = pixel_inputs(patches, Modality::hsi, data, cfg, draw);
      inputs2 = pixel_inputs(patches, Modality::lidar, data, cfg, draw);
    } else {
      bank = compute_features(model, data, coords, draw);
    }
  };
  if (!cfg.resample_noise) draw_inputs(0);

  DivergenceGuard guard;
  guard.replay(result.log, "classifier");
  std::size_t ran = 0;
  for (std::size_t epoch = start; epoch < cfg.classifier_epochs; ++epoch) {
    if (control.stop_after && ran == control.stop_after) break;
    std::mt19937_64 rng(derive_seed({cfg.seed, kClassifierStage, epoch}));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    if (cfg.resample_noise) draw_inputs(epoch + 1);
    const double lr = lr_at(epoch, cfg.lr, cfg.sched_step, cfg.sched_gamma);
    double total = 0;
    std::size_t correct = 0;
    for (std::size_t first = 0; first < n; first += cfg.batch) {
      const std::span<const std::size_t> idx(order.data() + first, std::min(cfg.batch, n - first));
      std::vector<std::size_t> batch_labels;
      for (auto i : idx) batch_labels.push_back(labels[i]);
      Tape<float> tape;
      adam.zero_grad();
      EncoderFeatures<float> f1, f2;
      if (cfg.fine_tune) {
        f1 = encode(tape.constant(gather_rows(inputs1, idx)), model.hsi);
        f2 = encode(tape.constant(gather_rows(inputs2, idx)), model.lidar);
      } else {
        f1 = {tape.constant(gather_rows(bank.shallow1, idx)), tape.constant(gather_rows(bank.deep1, idx))};
        f2 = {tape.constant(gather_rows(bank.shallow2, idx)), tape.constant(gather_rows(bank.deep2, idx))};
      }
      auto logits = fusion_logits(f1, f2, model.fusion);
      auto loss = cross_entropy(logits, std::span<const std::size_t>(batch_labels));
      for (std::size_t i = 0; i < idx.size(); ++i) correct += argmax_row(logits.value(), i) == batch_labels[i];
      tape.backward(loss);
      adam.step(lr);
      total += static_cast<double>(loss.value()[0]) * static_cast<double>(idx.size());
    }
    const LogRow row{epoch, lr, total / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
    guard.observe(row.loss, epoch, "classifier");
    result.log.push_back(row);
    ++ran;
    if (should_report(epoch, cfg.classifier_epochs, cfg)) report(control.progress, "classifier", row, cfg.classifier_epochs);

    const bool last = epoch + 1 == cfg.classifier_epochs;
    const bool stopping = control.stop_after && ran == control.stop_after;
    if (!control.checkpoint.empty() && ((epoch + 1) % cfg.checkpoint_every == 0 || last || stopping)) {
      auto c = base_checkpoint(data, cfg, "classifier");
      c.epoch = epoch + 1;
      c.complete = last;
      c.log = result.log;
      store_model(c, model);
      store_adam(c, adam);
      save_checkpoint(c, control.checkpoint);
    }
  }
  result.complete = result.log.size() == cfg.classifier_epochs;
  if (adam.skipped()) result.warnings.push_back(std::to_string(adam.skipped()) + " optimizer steps skipped (non-finite gradients)");
  return result;
}

std::vector<std::uint16_t> predict(TrainedModel& model, const PreparedData& data, std::span<const PixelCoord> coords) {
  const auto& cfg = model.config;
  std::vector<std::uint16_t> out;
  out.reserve(coords.size());
  for (std::size_t first = 0; first < coords.size(); first += kEvalChunk) {
    const auto chunk = coords.subspan(first, std::min(kEvalChunk, coords.size() - first));
    const auto patches = extract_patches(data.scene, chunk, cfg.patch, true);
    Tape<float> tape;
    const auto f1 = encode(tape.constant(pixel_inputs(patches, Modality::hsi, data, cfg)), model.hsi);
    const auto f2 = encode(tape.constant(pixel_inputs(patches, Modality::lidar, data, cfg)), model.lidar);
    const auto logits = fusion_logits(f1, f2, model.fusion);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back(static_cast<std::uint16_t>(argmax_row(logits.value(), i) + 1));
    }
  }
  return out;
}

MetricsReport evaluate(TrainedModel& model, const PreparedData& data) {
  const auto& test = data.split.test;
  if (test.empty()) throw ValidationError("evaluate: the test split is empty");
  const auto predicted = predict(model, data, test);
  std::vector<std::uint16_t> truth;
  truth.reserve(test.size());
  for (const auto& c : test) truth.push_back(data.scene.labels.at(c.row, c.col));
  return metrics_from_labels(truth, predicted, data.scene.num_classes);
}

LabelMap predict_map(TrainedModel& model, const PreparedData& data) {
  std::vector<PixelCoord> all;
  for (std::size_t r = 0; r < data.scene.height(); ++r) {
    for (std::size_t c = 0; c < data.scene.width(); ++c) all.push_back({r, c});
  }
  return LabelMap{data.scene.height(), data.scene.width(), predict(model, data, all)};
}

void check_scene_matches(const Checkpoint& c, const Scene& s) {
  const std::size_t c1 = s.hsi.dim(2), c2 = s.lidar.dim(2);
  if (c.hsi_channels != c1 || c.lidar_channels != c2 || c.num_classes != s.num_classes) {
    throw ValidationError("checkpoint expects hsi_channels=" + std::to_string(c.hsi_channels) +
                          " lidar_channels=" + std::to_string(c.lidar_channels) + " classes=" +
                          std::to_string(c.num_classes) + " but scene has hsi_channels=" + std::to_string(c1) +
                          " lidar_channels=" + std::to_string(c2) + " classes=" + std::to_string(s.num_classes));
  }
}

Encoder<float> encoder_from_checkpoint(const Checkpoint& c, Modality m) {
  if (c.stage == "diffusion" && c.modality != modality_name(m)) {
    throw ValidationError("checkpoint holds the " + c.modality + " encoder, not " + modality_name(m));
  }
  std::mt19937_64 rng(0);
  const std::size_t channels = m == Modality::hsi ? c.hsi_channels : c.lidar_channels;
  auto enc = Encoder<float>::init(encoder_config(c.config, channels), rng, std::string(modality_name(m)) + ".");
  restore_params(c, enc.params());
  return enc;
}

TrainedModel model_from_checkpoint(const Checkpoint& c) {
  if (c.stage != "classifier") throw ValidationError("expected a classifier checkpoint, got stage '" + c.stage + "'");
  TrainedModel m;
  m.config = c.config;
  m.hsi = encoder_from_checkpoint(c, Modality::hsi);
  m.lidar = encoder_from_checkpoint(c, Modality::lidar);
  std::mt19937_64 rng(0);
  m.fusion = FusionModel<float>::init(c.config.width, c.config.patch, c.config.hidden, c.num_classes,
                                      c.config.ablation.use_frm, rng);
  m.fusion.head.tau = c.config.tau;
  restore_params(c, m.fusion.params());
  return m;
}

RunOutcome run_pipeline(const PreparedData& data, const RunConfig& config, std::ostream* progress) {
  RunControl control;
  control.progress = progress;
  auto d1 = train_diffusion(data, config, Modality::hsi, control);
  auto d2 = train_diffusion(data, config, Modality::lidar, control);
  auto cls = train_classifier(data, config, std::move(d1.encoder), std::move(d2.encoder), control);
  RunOutcome out;
  out.model = std::move(cls.model);
  out.metrics = evaluate(out.model, data);
  out.diffusion_log_hsi = std::move(d1.log);
  out.diffusion_log_lidar = std::move(d2.log);
  out.classifier_log = std::move(cls.log);
  return out;
}

}  // namespace mdfl
