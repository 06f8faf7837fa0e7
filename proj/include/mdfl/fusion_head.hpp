#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mdfl/autograd.hpp"
#include "mdfl/backbone.hpp"

namespace mdfl {

/// Pointwise conv that first resamples its input along a learned per-pixel
/// offset field (aux conv1x1 -> [dx, dy], zero at init).
template <typename T>
struct OffsetConv {
  Param<T> offset_w, offset_b;  // [C,2], [2]
  Param<T> w, b;                // [C,C], [C]
};

/// Feature reuse module: shared bottleneck map F_b and the two gates F_d, F_l.
template <typename T>
struct FrmParams {
  Param<T> fb_w, fb_b;
  OffsetConv<T> fd, fl;

  static FrmParams init(std::size_t width, std::mt19937_64& rng, const std::string& prefix);
  ParamList<T> params();
};

template <typename T>
struct ClassifierHead {
  Param<T> w1, b1;  // [in, hidden], [hidden]
  Param<T> w2, b2;  // [hidden, K], [K]
  double tau = 0.5;

  static ClassifierHead init(std::size_t in, std::size_t hidden, std::size_t classes, std::mt19937_64& rng,
                             const std::string& prefix);
  ParamList<T> params();
};

template <typename T>
Var<T> offset_conv1x1(Var<T> x, OffsetConv<T>& p);

/// X_deep' = s(F_d(X_low)) * F_b(X_deep) + F_b(X_low)
/// X_low'  = s(F_l(X_low)) * F_b(X_deep) + F_b(X_low)
/// returns X_low' + X_deep'. Both outputs read the original inputs.
template <typename T>
Var<T> frm_fuse(Var<T> low, Var<T> deep, FrmParams<T>& p);

/// Per-modality FRM on (shallow, deep), then a third FRM across modalities
/// with modality 1 in the shallow slot.
template <typename T>
Var<T> fuse_modalities(const EncoderFeatures<T>& f1, const EncoderFeatures<T>& f2, FrmParams<T>& frm1,
                       FrmParams<T>& frm2, FrmParams<T>& cross);

/// Flatten -> affine -> SiLU -> affine; [B, p, p, w] -> logits [B, K].
template <typename T>
Var<T> classifier_logits(Var<T> fused, ClassifierHead<T>& head);

/// Softmax probabilities [B, K].
template <typename T>
Tensor<T> classify(Var<T> fused, ClassifierHead<T>& head);

/// Everything trained in the classification stage.
template <typename T>
struct FusionModel {
  FrmParams<T> frm1, frm2, cross;
  ClassifierHead<T> head;
  bool use_frm = true;

  static FusionModel init(std::size_t width, std::size_t patch, std::size_t hidden, std::size_t classes,
                          bool use_frm, std::mt19937_64& rng);
  ParamList<T> params();
};

/// Logits from both modality features. Without FRM the deep taps are summed.
template <typename T>
Var<T> fusion_logits(const EncoderFeatures<T>& f1, const EncoderFeatures<T>& f2, FusionModel<T>& model);

/// Binary maps [K, H, W]: 1 where probs[..., k] >= tau.
struct BinaryMaps {
  std::size_t classes = 0, height = 0, width = 0;
  std::vector<std::uint8_t> data;
  std::uint8_t at(std::size_t k, std::size_t r, std::size_t c) const { return data[(k * height + r) * width + c]; }
};

template <typename T>
BinaryMaps hard_map(const Tensor<T>& probs, double tau);

}  // namespace mdfl
