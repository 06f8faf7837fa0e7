#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mdfl {

struct AblationSwitches {
  bool use_freq_parser = true;
  bool use_frm = true;
  std::vector<std::size_t> fuse_steps{0, 50, 100, 200, 400};
  bool operator==(const AblationSwitches&) const = default;
};

/// Everything a training run depends on. Serialized verbatim into every
/// checkpoint. Defaults are desk scale; optimizer constants follow the
/// reference recipe.
struct RunConfig {
  std::string scene;   // scene directory
  std::string output;  // run directory for checkpoints, logs and metrics
  std::uint64_t seed = 0;

  double lr = 1e-3;
  double weight_decay = 5e-3;
  std::size_t sched_step = 50;
  double sched_gamma = 0.9;
  std::size_t batch = 64;
  std::size_t diffusion_epochs = 100;
  std::size_t classifier_epochs = 100;

  std::size_t T = 500;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  std::size_t patch = 7;
  double train_fraction = 0.1;

  std::size_t width = 16;
  std::size_t depth = 2;
  std::size_t heads = 2;
  std::size_t hidden = 64;
  double tau = 0.5;

  bool fine_tune = false;
  bool resample_noise = false;
  std::size_t checkpoint_every = 10;

  AblationSwitches ablation;

  /// Throws ValidationError naming the first offending field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Strict parse: unknown keys are rejected by name, missing keys take defaults.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Complete document including defaults, 2-space indented.
std::string config_to_json(const RunConfig& config);

/// Key / default / meaning rows, used by --help.
struct ConfigKeyDoc {
  std::string key, default_value, meaning;
};
std::vector<ConfigKeyDoc> config_key_docs();

}  // namespace mdfl
