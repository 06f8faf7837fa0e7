#include "mdfl/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "mdfl/errors.hpp"

namespace mdfl {

using nlohmann::ordered_json;

void RunConfig::validate() const {
  auto positive = [](bool ok, const char* name) {
    if (!ok) throw ValidationError(std::string("config: ") + name + " must be positive");
  };
  positive(lr > 0, "lr");
  positive(weight_decay >= 0, "weight_decay (non-negative)");
  positive(sched_step > 0, "sched_step");
  positive(sched_gamma > 0 && sched_gamma <= 1, "sched_gamma (in (0,1])");
  positive(batch > 0, "batch");
  positive(T > 0, "T");
  positive(beta_start > 0 && beta_end >= beta_start && beta_end < 1, "beta_start <= beta_end < 1");
  positive(patch > 0, "patch");
  if (patch % 2 == 0) throw ValidationError("config: patch must be odd");
  positive(train_fraction > 0 && train_fraction < 1, "train_fraction (in (0,1))");
  positive(width > 0 && heads > 0 && hidden > 0, "width, heads and hidden");
  if (width % heads != 0) throw ValidationError("config: width must be divisible by heads");
  if (depth < 2) throw ValidationError("config: depth must be >= 2");
  if (!(tau > 0 && tau < 1)) throw ValidationError("config: tau must lie in (0,1)");
  positive(checkpoint_every > 0, "checkpoint_every");
  const auto& steps = ablation.fuse_steps;
  if (steps.empty()) throw ValidationError("config: ablation.fuse_steps must not be empty");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] > T) {
      throw ValidationError("config: fuse step " + std::to_string(steps[i]) + " exceeds T=" + std::to_string(T));
    }
    if (i > 0 && steps[i] <= steps[i - 1]) throw ValidationError("config: fuse_steps must be strictly ascending");
  }
}

namespace {

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["scene"] = c.scene;
  j["output"] = c.output;
  j["seed"] = c.seed;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["sched_step"] = c.sched_step;
  j["sched_gamma"] = c.sched_gamma;
  j["batch"] = c.batch;
  j["diffusion_epochs"] = c.diffusion_epochs;
  j["classifier_epochs"] = c.classifier_epochs;
  j["T"] = c.T;
  j["beta_start"] = c.beta_start;
  j["beta_end"] = c.beta_end;
  j["patch"] = c.patch;
  j["train_fraction"] = c.train_fraction;
  j["width"] = c.width;
  j["depth"] = c.depth;
  j["heads"] = c.heads;
  j["hidden"] = c.hidden;
  j["tau"] = c.tau;
  j["fine_tune"] = c.fine_tune;
  j["resample_noise"] = c.resample_noise;
  j["checkpoint_every"] = c.checkpoint_every;
  j["ablation"] = {{"use_freq_parser", c.ablation.use_freq_parser},
                   {"use_frm", c.ablation.use_frm},
                   {"fuse_steps", c.ablation.fuse_steps}};
  return j;
}

template <typename V>
void take(const ordered_json& j, const char* key, V& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<V, std::size_t> || std::is_same_v<V, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw ValidationError("");
    } else if constexpr (std::is_same_v<V, double>) {
      if (!it->is_number()) throw ValidationError("");
    } else if constexpr (std::is_same_v<V, bool>) {
      if (!it->is_boolean()) throw ValidationError("");
    } else if constexpr (std::is_same_v<V, std::string>) {
      if (!it->is_string()) throw ValidationError("");
    }
    out = it->get<V>();
  } catch (const std::exception&) {
    throw ValidationError(std::string("config: key '") + key + "' has the wrong type (" + it->type_name() + ")");
  }
}

void reject_unknown(const ordered_json& j, const ordered_json& reference, const std::string& where) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : j.items()) {
    if (!reference.contains(key)) unknown.push_back(where + key);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw ValidationError("config: unknown key(s): " + list);
  }
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  const auto reference = to_json(RunConfig{});
  reject_unknown(j, reference, "");
  RunConfig c;
  take(j, "scene", c.scene);
  take(j, "output", c.output);
  take(j, "seed", c.seed);
  take(j, "lr", c.lr);
  take(j, "weight_decay", c.weight_decay);
  take(j, "sched_step", c.sched_step);
  take(j, "sched_gamma", c.sched_gamma);
  take(j, "batch", c.batch);
  take(j, "diffusion_epochs", c.diffusion_epochs);
  take(j, "classifier_epochs", c.classifier_epochs);
  take(j, "T", c.T);
  take(j, "beta_start", c.beta_start);
  take(j, "beta_end", c.beta_end);
  take(j, "patch", c.patch);
  take(j, "train_fraction", c.train_fraction);
  take(j, "width", c.width);
  take(j, "depth", c.depth);
  take(j, "heads", c.heads);
  take(j, "hidden", c.hidden);
  take(j, "tau", c.tau);
  take(j, "fine_tune", c.fine_tune);
  take(j, "resample_noise", c.resample_noise);
  take(j, "checkpoint_every", c.checkpoint_every);
  if (auto it = j.find("ablation"); it != j.end()) {
    if (!it->is_object()) throw ValidationError("config: 'ablation' must be an object");
    reject_unknown(*it, reference["ablation"], "ablation.");
    take(*it, "use_freq_parser", c.ablation.use_freq_parser);
    take(*it, "use_frm", c.ablation.use_frm);
    if (auto s = it->find("fuse_steps"); s != it->end()) {
      if (!s->is_array()) throw ValidationError("config: ablation.fuse_steps must be a list");
      c.ablation.fuse_steps.clear();
      for (const auto& v : *s) {
        if (!v.is_number_unsigned()) throw ValidationError("config: ablation.fuse_steps entries must be integers >= 0");
        c.ablation.fuse_steps.push_back(v.get<std::size_t>());
      }
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

std::vector<ConfigKeyDoc> config_key_docs() {
  const auto d = to_json(RunConfig{});
  auto show = [&](const char* key) { return d[key].dump(); };
  return {
      {"scene", show("scene"), "scene directory (hsi.mdt, lidar.mdt, labels.mdt, meta.json)"},
      {"output", show("output"), "run directory for checkpoints, logs and metrics"},
      {"seed", show("seed"), "master seed for split, init, batching and noise"},
      {"lr", show("lr"), "base Adam learning rate"},
      {"weight_decay", show("weight_decay"), "decoupled weight decay"},
      {"sched_step", show("sched_step"), "epochs between learning-rate decays"},
      {"sched_gamma", show("sched_gamma"), "learning-rate decay factor"},
      {"batch", show("batch"), "patches per optimizer step"},
      {"diffusion_epochs", show("diffusion_epochs"), "epochs of denoising pretraining per modality"},
      {"classifier_epochs", show("classifier_epochs"), "epochs of classifier training"},
      {"T", show("T"), "diffusion steps in the noise schedule"},
      {"beta_start", show("beta_start"), "first beta of the linear schedule"},
      {"beta_end", show("beta_end"), "last beta of the linear schedule"},
      {"patch", show("patch"), "odd patch side length"},
      {"train_fraction", show("train_fraction"), "per-class fraction of labelled pixels used for training"},
      {"width", show("width"), "encoder feature width"},
      {"depth", show("depth"), "residual blocks per encoder"},
      {"heads", show("heads"), "attention heads"},
      {"hidden", show("hidden"), "classifier MLP hidden units"},
      {"tau", show("tau"), "threshold for binary class maps"},
      {"fine_tune", show("fine_tune"), "also update encoders during classifier training"},
      {"resample_noise", show("resample_noise"), "redraw diffusion noise every classifier epoch"},
      {"checkpoint_every", show("checkpoint_every"), "epochs between checkpoints"},
      {"ablation.use_freq_parser", d["ablation"]["use_freq_parser"].dump(), "enable the learnable frequency filter"},
      {"ablation.use_frm", d["ablation"]["use_frm"].dump(), "enable feature reuse fusion"},
      {"ablation.fuse_steps", d["ablation"]["fuse_steps"].dump(), "diffusion steps stacked as encoder input"},
  };
}

}  // namespace mdfl
