#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mdfl/backbone.hpp"
#include "mdfl/checkpoint.hpp"
#include "mdfl/config.hpp"
#include "mdfl/diffusion.hpp"
#include "mdfl/fusion_head.hpp"
#include "mdfl/metrics.hpp"
#include "mdfl/scene.hpp"

namespace mdfl {

enum class Modality { hsi = 0, lidar = 1 };
const char* modality_name(Modality m);

/// Normalized scene, its split and the noise schedule for one config.
struct PreparedData {
  Scene scene;
  SplitIndex split;
  NoiseSchedule sched;
};

PreparedData prepare_data(const RunConfig& config, const Scene& raw);
PreparedData prepare_data(const RunConfig& config);  // loads config.scene

EncoderConfig encoder_config(const RunConfig& config, std::size_t modality_channels);

/// Checkpointing and interruption for one training call.
struct RunControl {
  std::filesystem::path checkpoint;  // empty: keep everything in memory
  bool resume = false;               // continue from `checkpoint` if it exists
  std::size_t stop_after = 0;        // epochs to run in this call; 0 runs to the end
  std::ostream* progress = nullptr;
};

struct DiffusionResult {
  Encoder<float> encoder;
  std::vector<LogRow> log;
  bool complete = false;
  std::vector<std::string> warnings;
};

/// Denoising pretraining of one modality encoder plus its reconstruction head.
DiffusionResult train_diffusion(const PreparedData& data, const RunConfig& config, Modality modality,
                                const RunControl& control = {});

struct TrainedModel {
  RunConfig config;
  Encoder<float> hsi, lidar;
  FusionModel<float> fusion;
};

struct ClassifierResult {
  TrainedModel model;
  std::vector<LogRow> log;
  bool complete = false;
  std::vector<std::string> warnings;
};

/// Trains the fusion head on encoder features. Encoders stay fixed unless
/// config.fine_tune is set.
ClassifierResult train_classifier(const PreparedData& data, const RunConfig& config, Encoder<float> hsi,
                                  Encoder<float> lidar, const RunControl& control = {});

/// Class labels (1..K) for arbitrary pixels, labelled or not.
std::vector<std::uint16_t> predict(TrainedModel& model, const PreparedData& data, std::span<const PixelCoord> coords);
/// Metrics on the test split.
MetricsReport evaluate(TrainedModel& model, const PreparedData& data);
/// Prediction for every pixel of the scene.
LabelMap predict_map(TrainedModel& model, const PreparedData& data);

Encoder<float> encoder_from_checkpoint(const Checkpoint& ckpt, Modality modality);
TrainedModel model_from_checkpoint(const Checkpoint& ckpt);
/// Throws ValidationError when the scene's channel or class counts differ
/// from the ones recorded in the checkpoint.
void check_scene_matches(const Checkpoint& ckpt, const Scene& scene);

/// Aborts training with TrainingError on a non-finite loss or after 20
/// consecutive epochs above 10x the first epoch's loss.
class DivergenceGuard {
 public:
  void observe(double loss, std::size_t epoch, const char* stage);
  void replay(const std::vector<LogRow>& log, const char* stage);

 private:
  std::optional<double> initial_;
  std::size_t run_ = 0;
};

/// Mean loss over the last tenth of the epochs is not above the mean of the
/// tenth before it.
bool loss_trend_ok(const std::vector<LogRow>& log);

/// Both stages in memory; returns the trained model and its test metrics.
struct RunOutcome {
  TrainedModel model;
  MetricsReport metrics;
  std::vector<LogRow> diffusion_log_hsi, diffusion_log_lidar, classifier_log;
};
RunOutcome run_pipeline(const PreparedData& data, const RunConfig& config, std::ostream* progress = nullptr);

}  // namespace mdfl
