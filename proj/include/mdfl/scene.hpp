#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdfl/tensor.hpp"

namespace mdfl {

struct PixelCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const PixelCoord&) const = default;
};

/// Label raster: 0 = unlabeled, 1..K = classes.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> data;

  std::uint16_t at(std::size_t r, std::size_t c) const { return data[r * width + c]; }
  std::uint16_t& at(std::size_t r, std::size_t c) { return data[r * width + c]; }
  bool operator==(const LabelMap&) const = default;
};

/// Co-registered HSI [H,W,C1], elevation [H,W,C2] and labels [H,W].
struct Scene {
  std::string name;
  Tensor<float> hsi;
  Tensor<float> lidar;
  LabelMap labels;
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;

  std::size_t height() const { return labels.height; }
  std::size_t width() const { return labels.width; }
  /// Labeled pixel count for class k (1-based).
  std::vector<std::size_t> class_counts() const;
  bool operator==(const Scene&) const = default;
};

/// Headers and metadata of a scene directory, no payload.
struct SceneInfo {
  std::string name;
  std::size_t height = 0, width = 0, hsi_channels = 0, lidar_channels = 0, num_classes = 0;
  std::vector<std::string> class_names;
};

/// Throws the matching DataError subclass when the scene breaks an invariant.
void validate_scene(const Scene& scene);

SceneInfo inspect_scene(const std::filesystem::path& dir);
Scene load_scene(const std::filesystem::path& dir);
void save_scene(const Scene& scene, const std::filesystem::path& dir);

/// Per-band min-max scaling of both modalities to [0,1]; constant bands map to 0.
Scene normalize_bands(const Scene& scene);

struct PatchBatch {
  Tensor<float> patches1;  // [B,p,p,C1]
  Tensor<float> patches2;  // [B,p,p,C2]
  std::vector<std::uint16_t> labels;  // 1..K
  std::vector<PixelCoord> coords;

  std::size_t size() const { return coords.size(); }
};

/// Square neighbourhoods centred on `coords`, mirrored (edge not repeated)
/// where they leave the scene. With `allow_unlabeled` the centre label may be 0,
/// which full-scene prediction needs.
PatchBatch extract_patches(const Scene& scene, std::span<const PixelCoord> coords, std::size_t patch = 7,
                           bool allow_unlabeled = false);

struct SplitIndex {
  std::vector<PixelCoord> train;
  std::vector<PixelCoord> test;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Stratified split: per class floor(fraction * n_k) pixels (at least one) go to
/// train after a seeded shuffle, the rest to test. Both lists are sorted.
SplitIndex split_samples(const Scene& scene, double train_fraction, std::uint64_t seed);

struct SynthSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t hsi_channels = 8;
  std::size_t lidar_channels = 1;
  std::size_t num_classes = 3;
  double texture_scale = 0.05;
  double noise_sigma = 0.05;
};

/// Voronoi class regions around K seeded sites; per-class spectral signature,
/// band-correlated smooth texture, per-class base elevation plus smooth relief,
/// and white noise. Deterministic per seed.
Scene synth_scene(const SynthSpec& spec, std::uint64_t seed);

}  // namespace mdfl
