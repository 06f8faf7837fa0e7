#include "mdfl/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

#include "mdfl/errors.hpp"
#include "mdfl/mdt.hpp"
#include "mdfl/ops.hpp"

namespace mdfl {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> Scene::class_counts() const {
  std::vector<std::size_t> counts(num_classes + 1, 0);
  for (auto v : labels.data) {
    if (v <= num_classes) ++counts[v];
  }
  return counts;
}

void validate_scene(const Scene& s) {
  const auto check_raster = [&](const Tensor<float>& t, const char* what) {
    if (t.rank() != 3 || t.dim(0) != s.height() || t.dim(1) != s.width()) {
      throw ShapeMismatchError(std::string(what) + " is " + shape_str(t.shape()) + " but labels are [" +
                               std::to_string(s.height()) + "x" + std::to_string(s.width()) + "]");
    }
  };
  if (s.labels.data.size() != s.height() * s.width() || s.labels.data.empty()) {
    throw ShapeMismatchError("label raster size does not match its dimensions");
  }
  check_raster(s.hsi, "hsi");
  check_raster(s.lidar, "lidar");
  if (s.num_classes < 2) throw DataError("scene needs at least 2 classes, meta declares " + std::to_string(s.num_classes));
  if (!s.class_names.empty() && s.class_names.size() != s.num_classes) {
    throw DataError("class_names has " + std::to_string(s.class_names.size()) + " entries for " +
                    std::to_string(s.num_classes) + " classes");
  }
  for (std::size_t i = 0; i < s.labels.data.size(); ++i) {
    if (s.labels.data[i] > s.num_classes) {
      throw LabelRangeError("label out of range: value " + std::to_string(s.labels.data[i]) + " at (" +
                            std::to_string(i / s.width()) + "," + std::to_string(i % s.width()) +
                            ") exceeds num_classes " + std::to_string(s.num_classes));
    }
  }
  const auto counts = s.class_counts();
  for (std::size_t k = 1; k <= s.num_classes; ++k) {
    if (counts[k] == 0) throw LabelRangeError("class " + std::to_string(k) + " has no labeled pixels");
  }
}

namespace {

json read_meta(const fs::path& dir) {
  const auto path = dir / "meta.json";
  if (!fs::exists(path)) throw MissingFileError("missing file: " + path.string());
  std::ifstream in(path);
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  for (const char* key : {"name", "num_classes", "class_names"}) {
    if (!meta.contains(key)) throw DataError(path.string() + ": missing key \"" + key + "\"");
  }
  if (!meta["num_classes"].is_number_unsigned()) throw DataError(path.string() + ": num_classes must be a count");
  return meta;
}

}  // namespace

SceneInfo inspect_scene(const fs::path& dir) {
  const json meta = read_meta(dir);
  const auto hsi = read_mdt_header(dir / "hsi.mdt");
  const auto lidar = read_mdt_header(dir / "lidar.mdt");
  const auto labels = read_mdt_header(dir / "labels.mdt");
  if (hsi.dtype != MdtType::f32 || lidar.dtype != MdtType::f32) throw ShapeMismatchError("hsi/lidar must be f32");
  if (labels.dtype != MdtType::u16) throw ShapeMismatchError("labels must be u16");
  if (hsi.shape.size() != 3 || lidar.shape.size() != 3 || labels.shape.size() != 2) {
    throw ShapeMismatchError("expected hsi/lidar [H,W,C] and labels [H,W], got " + shape_str(hsi.shape) + ", " +
                             shape_str(lidar.shape) + ", " + shape_str(labels.shape));
  }
  if (hsi.shape[0] != labels.shape[0] || hsi.shape[1] != labels.shape[1] || lidar.shape[0] != labels.shape[0] ||
      lidar.shape[1] != labels.shape[1]) {
    throw ShapeMismatchError("spatial sizes disagree: hsi " + shape_str(hsi.shape) + ", lidar " +
                             shape_str(lidar.shape) + ", labels " + shape_str(labels.shape));
  }
  SceneInfo info;
  info.name = meta["name"].get<std::string>();
  info.height = labels.shape[0];
  info.width = labels.shape[1];
  info.hsi_channels = hsi.shape[2];
  info.lidar_channels = lidar.shape[2];
  info.num_classes = meta["num_classes"].get<std::size_t>();
  info.class_names = meta["class_names"].get<std::vector<std::string>>();
  return info;
}

Scene load_scene(const fs::path& dir) {
  const SceneInfo info = inspect_scene(dir);
  Scene s;
  s.name = info.name;
  s.num_classes = info.num_classes;
  s.class_names = info.class_names;
  s.hsi = read_mdt_f32(dir / "hsi.mdt");
  s.lidar = read_mdt_f32(dir / "lidar.mdt");
  s.labels.height = info.height;
  s.labels.width = info.width;
  s.labels.data = read_mdt_u16(dir / "labels.mdt");
  validate_scene(s);
  return s;
}

void save_scene(const Scene& s, const fs::path& dir) {
  validate_scene(s);
  fs::create_directories(dir);
  write_mdt(dir / "hsi.mdt", s.hsi);
  write_mdt(dir / "lidar.mdt", s.lidar);
  write_mdt(dir / "labels.mdt", Shape{s.height(), s.width()}, s.labels.data);
  json meta{{"name", s.name}, {"num_classes", s.num_classes}, {"class_names", s.class_names}};
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  out << meta.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + (dir / "meta.json").string());
}

namespace {

Tensor<float> minmax_bands(const Tensor<float>& t, const char* what) {
  const std::size_t c = t.dim(2), pixels = t.size() / c;
  std::vector<double> lo(c, std::numeric_limits<double>::infinity()), hi(c, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t[i];
    if (!std::isfinite(v)) {
      throw DataError(std::string("non-finite value in ") + what + " band " + std::to_string(i % c) + " at pixel " +
                      std::to_string(i / c));
    }
    lo[i % c] = std::min(lo[i % c], v);
    hi[i % c] = std::max(hi[i % c], v);
  }
  Tensor<float> out(t.shape());
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t b = 0; b < c; ++b) {
      const double range = hi[b] - lo[b];
      const double v = range > 0 ? (t[p * c + b] - lo[b]) / range : 0.0;
      out[p * c + b] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

}  // namespace

Scene normalize_bands(const Scene& scene) {
  Scene out = scene;
  out.hsi = minmax_bands(scene.hsi, "hsi");
  out.lidar = minmax_bands(scene.lidar, "lidar");
  return out;
}

PatchBatch extract_patches(const Scene& scene, std::span<const PixelCoord> coords, std::size_t patch,
                           bool allow_unlabeled) {
  if (patch % 2 == 0 || patch == 0) throw ValidationError("patch size must be odd, got " + std::to_string(patch));
  if (coords.empty()) throw ValidationError("extract_patches: no coordinates");
  const long half = static_cast<long>(patch / 2);
  const long h = static_cast<long>(scene.height()), w = static_cast<long>(scene.width());
  const std::size_t c1 = scene.hsi.dim(2), c2 = scene.lidar.dim(2), b = coords.size();
  PatchBatch out;
  out.patches1 = Tensor<float>({b, patch, patch, c1});
  out.patches2 = Tensor<float>({b, patch, patch, c2});
  out.labels.resize(b);
  out.coords.assign(coords.begin(), coords.end());
  for (std::size_t i = 0; i < b; ++i) {
    const auto [row, col] = coords[i];
    if (row >= scene.height() || col >= scene.width()) {
      throw ValidationError("pixel (" + std::to_string(row) + "," + std::to_string(col) + ") outside scene");
    }
    out.labels[i] = scene.labels.at(row, col);
    if (out.labels[i] == 0 && !allow_unlabeled) {
      throw ValidationError("pixel (" + std::to_string(row) + "," + std::to_string(col) + ") is unlabeled");
    }
    float* d1 = out.patches1.ptr() + i * patch * patch * c1;
    float* d2 = out.patches2.ptr() + i * patch * patch * c2;
    for (long dy = -half; dy <= half; ++dy) {
      const auto sy = static_cast<std::size_t>(reflect_index(static_cast<long>(row) + dy, h));
      for (long dx = -half; dx <= half; ++dx) {
        const auto sx = static_cast<std::size_t>(reflect_index(static_cast<long>(col) + dx, w));
        const std::size_t pix = sy * scene.width() + sx;
        std::copy_n(scene.hsi.ptr() + pix * c1, c1, d1);
        std::copy_n(scene.lidar.ptr() + pix * c2, c2, d2);
        d1 += c1;
        d2 += c2;
      }
    }
  }
  return out;
}

SplitIndex split_samples(const Scene& scene, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie in (0,1), got " + std::to_string(train_fraction));
  }
  std::vector<std::vector<PixelCoord>> per_class(scene.num_classes + 1);
  for (std::size_t r = 0; r < scene.height(); ++r) {
    for (std::size_t c = 0; c < scene.width(); ++c) {
      const auto k = scene.labels.at(r, c);
      if (k > 0 && k <= scene.num_classes) per_class[k].push_back({r, c});
    }
  }
  SplitIndex split;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 1; k <= scene.num_classes; ++k) {
    auto& pts = per_class[k];
    if (pts.empty()) continue;
    std::shuffle(pts.begin(), pts.end(), rng);
    const auto n = pts.size();
    const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(train_fraction * n)));
    if (n == 1) split.warnings.push_back("class " + std::to_string(k) + " has a single labeled pixel; kept in train");
    split.train.insert(split.train.end(), pts.begin(), pts.begin() + static_cast<long>(n_train));
    split.test.insert(split.test.end(), pts.begin() + static_cast<long>(n_train), pts.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

// White noise blurred by two separable box passes (radius 3), mirrored at the
// borders, then standardized to zero mean and unit variance.
std::vector<double> smooth_field(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> f(h * w);
  for (auto& v : f) v = normal(rng);
  constexpr long r = 3;
  std::vector<double> tmp(f.size());
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0;
        for (long d = -r; d <= r; ++d) s += f[y * w + reflect_index(static_cast<long>(x) + d, static_cast<long>(w))];
        tmp[y * w + x] = s / (2 * r + 1);
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0;
        for (long d = -r; d <= r; ++d) {
          s += tmp[reflect_index(static_cast<long>(y) + d, static_cast<long>(h)) * w + x];
        }
        f[y * w + x] = s / (2 * r + 1);
      }
    }
  }
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  double var = 0;
  for (auto v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (auto& v : f) v = sd > 0 ? (v - mean) / sd : 0.0;
  return f;
}

}  // namespace

Scene synth_scene(const SynthSpec& spec, std::uint64_t seed) {
  const std::size_t h = spec.height, w = spec.width, c1 = spec.hsi_channels, c2 = spec.lidar_channels,
                    k = spec.num_classes;
  if (h == 0 || w == 0 || c1 == 0 || c2 == 0 || k == 0) throw ValidationError("synth_scene: zero dimension");
  if (k > h * w) throw ValidationError("synth_scene: more classes than pixels");
  if (k > std::numeric_limits<std::uint16_t>::max()) throw ValidationError("synth_scene: too many classes");
  if (spec.texture_scale < 0 || spec.noise_sigma < 0) throw ValidationError("synth_scene: negative scale");

  std::mt19937_64 rng(seed);
  // Distinct site pixels via a partial Fisher-Yates shuffle.
  std::vector<std::size_t> order(h * w);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  std::vector<double> signature(k * c1), load1(k * c1), load2(k * c1), base(k);
  for (auto& v : signature) v = 0.1 + 0.8 * unit(rng);
  for (auto& v : load1) v = normal(rng);
  for (auto& v : load2) v = normal(rng);
  for (auto& v : base) v = unit(rng);
  const auto f1 = smooth_field(h, w, rng);
  const auto f2 = smooth_field(h, w, rng);
  const auto relief = smooth_field(h, w, rng);

  Scene s;
  s.name = "synth-" + std::to_string(seed);
  s.num_classes = k;
  for (std::size_t i = 1; i <= k; ++i) s.class_names.push_back("class_" + std::to_string(i));
  s.labels = {h, w, std::vector<std::uint16_t>(h * w)};
  s.hsi = Tensor<float>({h, w, c1});
  s.lidar = Tensor<float>({h, w, c2});
  const double t = spec.texture_scale, sigma = spec.noise_sigma;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < k; ++i) {
        const double dy = static_cast<double>(order[i] / w) - static_cast<double>(y);
        const double dx = static_cast<double>(order[i] % w) - static_cast<double>(x);
        const double d = dy * dy + dx * dx;
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      const std::size_t p = y * w + x;
      s.labels.data[p] = static_cast<std::uint16_t>(best + 1);
      for (std::size_t b = 0; b < c1; ++b) {
        double v = signature[best * c1 + b];
        if (t > 0) v += t * (f1[p] * load1[best * c1 + b] + f2[p] * load2[best * c1 + b]) / std::sqrt(2.0);
        if (sigma > 0) v += sigma * normal(rng);
        s.hsi[p * c1 + b] = static_cast<float>(v);
      }
      for (std::size_t j = 0; j < c2; ++j) {
        double v = base[best] * (1.0 + 0.25 * static_cast<double>(j));
        if (t > 0) v += t * relief[p];
        if (sigma > 0) v += sigma * normal(rng);
        s.lidar[p * c2 + j] = static_cast<float>(v);
      }
    }
  }
  return s;
}

}  // namespace mdfl
