#include "mdfl/fusion_head.hpp"

#include <cmath>

#include "mdfl/errors.hpp"
#include "mdfl/ops.hpp"

namespace mdfl {

namespace {

template <typename T>
Param<T> normal_param(std::string name, Shape shape, std::mt19937_64& rng, double stddev) {
  return Param<T>(std::move(name), Tensor<T>::randn(std::move(shape), rng, static_cast<T>(stddev)));
}

template <typename T>
Param<T> zero_param(std::string name, Shape shape) {
  return Param<T>(std::move(name), Tensor<T>(std::move(shape)));
}

template <typename T>
OffsetConv<T> init_offset_conv(std::size_t c, std::mt19937_64& rng, const std::string& prefix) {
  OffsetConv<T> o;
  o.offset_w = zero_param<T>(prefix + "offset.w", {c, 2});
  o.offset_b = zero_param<T>(prefix + "offset.b", {2});
  o.w = normal_param<T>(prefix + "w", {c, c}, rng, 1.0 / std::sqrt(static_cast<double>(c)));
  o.b = zero_param<T>(prefix + "b", {c});
  return o;
}

}  // namespace

template <typename T>
FrmParams<T> FrmParams<T>::init(std::size_t width, std::mt19937_64& rng, const std::string& prefix) {
  FrmParams p;
  p.fb_w = normal_param<T>(prefix + "fb.w", {width, width}, rng, 1.0 / std::sqrt(static_cast<double>(width)));
  p.fb_b = zero_param<T>(prefix + "fb.b", {width});
  p.fd = init_offset_conv<T>(width, rng, prefix + "fd.");
  p.fl = init_offset_conv<T>(width, rng, prefix + "fl.");
  return p;
}

template <typename T>
ParamList<T> FrmParams<T>::params() {
  return {&fb_w, &fb_b, &fd.offset_w, &fd.offset_b, &fd.w, &fd.b, &fl.offset_w, &fl.offset_b, &fl.w, &fl.b};
}

template <typename T>
ClassifierHead<T> ClassifierHead<T>::init(std::size_t in, std::size_t hidden, std::size_t classes,
                                          std::mt19937_64& rng, const std::string& prefix) {
  ClassifierHead h;
  h.w1 = normal_param<T>(prefix + "mlp1.w", {in, hidden}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  h.b1 = zero_param<T>(prefix + "mlp1.b", {hidden});
  h.w2 = normal_param<T>(prefix + "mlp2.w", {hidden, classes}, rng, 1.0 / std::sqrt(static_cast<double>(hidden)));
  h.b2 = zero_param<T>(prefix + "mlp2.b", {classes});
  return h;
}

template <typename T>
ParamList<T> ClassifierHead<T>::params() {
  return {&w1, &b1, &w2, &b2};
}

template <typename T>
Var<T> offset_conv1x1(Var<T> x, OffsetConv<T>& p) {
  auto& tape = x.tape();
  auto offsets = conv2d_1x1(x, tape.param(p.offset_w), tape.param(p.offset_b));
  return conv2d_1x1(offset_sample(x, offsets), tape.param(p.w), tape.param(p.b));
}

template <typename T>
Var<T> frm_fuse(Var<T> low, Var<T> deep, FrmParams<T>& p) {
  require_same_shape(low.shape(), deep.shape(), "frm_fuse");
  auto& tape = low.tape();
  auto fb_w = tape.param(p.fb_w), fb_b = tape.param(p.fb_b);
  auto fb_deep = conv2d_1x1(deep, fb_w, fb_b);
  auto fb_low = conv2d_1x1(low, fb_w, fb_b);
  auto deep_out = add(mul(sigmoid(offset_conv1x1(low, p.fd)), fb_deep), fb_low);
  auto low_out = add(mul(sigmoid(offset_conv1x1(low, p.fl)), fb_deep), fb_low);
  return add(low_out, deep_out);
}

template <typename T>
Var<T> fuse_modalities(const EncoderFeatures<T>& f1, const EncoderFeatures<T>& f2, FrmParams<T>& frm1,
                       FrmParams<T>& frm2, FrmParams<T>& cross) {
  require_same_shape(f1.deep.shape(), f2.deep.shape(), "fuse_modalities");
  return frm_fuse(frm_fuse(f1.shallow, f1.deep, frm1), frm_fuse(f2.shallow, f2.deep, frm2), cross);
}

template <typename T>
Var<T> classifier_logits(Var<T> fused, ClassifierHead<T>& head) {
  const std::size_t batch = fused.shape()[0], flat = fused.value().size() / batch;
  if (head.w1.value.dim(0) != flat) {
    throw ShapeError("classifier expects " + std::to_string(head.w1.value.dim(0)) + " features per sample, got " +
                     shape_str(fused.shape()));
  }
  auto& tape = fused.tape();
  auto hidden = silu(linear(reshape(fused, {batch, flat}), tape.param(head.w1), tape.param(head.b1)));
  return linear(hidden, tape.param(head.w2), tape.param(head.b2));
}

template <typename T>
Tensor<T> classify(Var<T> fused, ClassifierHead<T>& head) {
  return softmax_lastdim(classifier_logits(fused, head).value());
}

template <typename T>
FusionModel<T> FusionModel<T>::init(std::size_t width, std::size_t patch, std::size_t hidden, std::size_t classes,
                                    bool use_frm, std::mt19937_64& rng) {
  FusionModel m;
  m.use_frm = use_frm;
  m.frm1 = FrmParams<T>::init(width, rng, "frm1.");
  m.frm2 = FrmParams<T>::init(width, rng, "frm2.");
  m.cross = FrmParams<T>::init(width, rng, "frm_cross.");
  m.head = ClassifierHead<T>::init(width * patch * patch, hidden, classes, rng, "cls.");
  return m;
}

template <typename T>
ParamList<T> FusionModel<T>::params() {
  ParamList<T> out;
  if (use_frm) {
    for (auto* f : {&frm1, &frm2, &cross}) {
      for (auto* p : f->params()) out.push_back(p);
    }
  }
  for (auto* p : head.params()) out.push_back(p);
  return out;
}

template <typename T>
Var<T> fusion_logits(const EncoderFeatures<T>& f1, const EncoderFeatures<T>& f2, FusionModel<T>& model) {
  auto fused = model.use_frm ? fuse_modalities(f1, f2, model.frm1, model.frm2, model.cross) : add(f1.deep, f2.deep);
  return classifier_logits(fused, model.head);
}

template <typename T>
BinaryMaps hard_map(const Tensor<T>& probs, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ValidationError("threshold tau must lie in (0,1), got " + std::to_string(tau));
  if (probs.rank() != 3) throw ShapeError("hard_map expects [H,W,K], got " + shape_str(probs.shape()));
  BinaryMaps m{probs.dim(2), probs.dim(0), probs.dim(1), {}};
  m.data.assign(m.classes * m.height * m.width, 0);
  for (std::size_t r = 0; r < m.height; ++r) {
    for (std::size_t c = 0; c < m.width; ++c) {
      for (std::size_t k = 0; k < m.classes; ++k) {
        if (static_cast<double>(probs.at({r, c, k})) >= tau) m.data[(k * m.height + r) * m.width + c] = 1;
      }
    }
  }
  return m;
}

#define MDFL_INSTANTIATE(T)                                                                            \
  template struct FrmParams<T>;                                                                        \
  template struct ClassifierHead<T>;                                                                   \
  template struct FusionModel<T>;                                                                      \
  template Var<T> offset_conv1x1(Var<T>, OffsetConv<T>&);                                              \
  template Var<T> frm_fuse(Var<T>, Var<T>, FrmParams<T>&);                                             \
  template Var<T> fuse_modalities(const EncoderFeatures<T>&, const EncoderFeatures<T>&, FrmParams<T>&, \
                                  FrmParams<T>&, FrmParams<T>&);                                       \
  template Var<T> classifier_logits(Var<T>, ClassifierHead<T>&);                                       \
  template Tensor<T> classify(Var<T>, ClassifierHead<T>&);                                             \
  template Var<T> fusion_logits(const EncoderFeatures<T>&, const EncoderFeatures<T>&, FusionModel<T>&); \
  template BinaryMaps hard_map(const Tensor<T>&, double);

MDFL_INSTANTIATE(float)
MDFL_INSTANTIATE(double)

}  // namespace mdfl
