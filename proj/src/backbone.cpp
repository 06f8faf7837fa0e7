#include "mdfl/backbone.hpp"

#include <cmath>

#include "mdfl/errors.hpp"
#include "mdfl/ops.hpp"

namespace mdfl {

void EncoderConfig::validate() const {
  if (in_channels == 0) throw ValidationError("encoder in_channels must be positive");
  if (width == 0 || heads == 0) throw ValidationError("encoder width and heads must be positive");
  if (width % heads != 0) {
    throw ValidationError("encoder width " + std::to_string(width) + " is not divisible by heads " +
                          std::to_string(heads));
  }
  if (depth < 2) throw ValidationError("encoder depth must be >= 2 for distinct shallow/deep taps");
  if (patch % 2 == 0) throw ValidationError("patch size must be odd");
}

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
Tensor<T> identity_filter(std::size_t p, std::size_t c) {
  Tensor<T> w({p, p / 2 + 1, c, 2});
  for (std::size_t i = 0; i < w.size(); i += 2) w[i] = T{1};
  return w;
}

}  // namespace

template <typename T>
Encoder<T> Encoder<T>::init(const EncoderConfig& config, std::mt19937_64& rng, const std::string& prefix) {
  config.validate();
  const std::size_t in = config.in_channels, w = config.width;
  Encoder e;
  e.config = config;
  e.stem_w = normal_param<T>(prefix + "stem.w", {in, w}, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  e.stem_b = zero_param<T>(prefix + "stem.b", {w});
  const double conv_std = std::sqrt(1.0 / (9.0 * static_cast<double>(w)));
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::string p = prefix + "block" + std::to_string(i) + ".";
    ResidualBlock<T> b;
    b.conv1_w = normal_param<T>(p + "conv1.w", {3, 3, w, w}, rng, conv_std);
    b.conv1_b = zero_param<T>(p + "conv1.b", {w});
    b.conv2_w = normal_param<T>(p + "conv2.w", {3, 3, w, w}, rng, 0.1 * conv_std);
    b.conv2_b = zero_param<T>(p + "conv2.b", {w});
    b.freq = Param<T>(p + "freq", identity_filter<T>(config.patch, w));
    b.freq.trainable = config.use_freq_parser;
    e.blocks.push_back(std::move(b));
  }
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(w));
  e.attn.wq = normal_param<T>(prefix + "attn.wq", {w, w}, rng, proj_std);
  e.attn.wk = normal_param<T>(prefix + "attn.wk", {w, w}, rng, proj_std);
  e.attn.wv = normal_param<T>(prefix + "attn.wv", {w, w}, rng, proj_std);
  e.attn.wo = normal_param<T>(prefix + "attn.wo", {w, w}, rng, 0.1 * proj_std);
  e.head_w = normal_param<T>(prefix + "head.w", {w, in}, rng, 0.1 * proj_std);
  e.head_b = zero_param<T>(prefix + "head.b", {in});
  return e;
}

template <typename T>
void Encoder<T>::zero_residual_branches() {
  for (auto& b : blocks) {
    b.conv2_w.value.fill(T{0});
    b.conv2_b.value.fill(T{0});
  }
  attn.wo.value.fill(T{0});
}

template <typename T>
ParamList<T> Encoder<T>::encoder_params() {
  ParamList<T> out{&stem_w, &stem_b};
  for (auto& b : blocks) {
    for (auto* p : {&b.conv1_w, &b.conv1_b, &b.conv2_w, &b.conv2_b, &b.freq}) out.push_back(p);
  }
  for (auto* p : {&attn.wq, &attn.wk, &attn.wv, &attn.wo}) out.push_back(p);
  return out;
}

template <typename T>
ParamList<T> Encoder<T>::params() {
  auto out = encoder_params();
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

template <typename T>
Qkv<T> qkv_project(Var<T> f, Var<T> wq, Var<T> wk, Var<T> wv) {
  const std::size_t c = f.shape().back();
  for (const auto& w : {wq, wk, wv}) {
    if (w.shape() != Shape{c, c}) {
      throw ShapeError("qkv_project: projection " + shape_str(w.shape()) + " does not match width " +
                       std::to_string(c));
    }
  }
  return {linear(f, wq), linear(f, wk), linear(f, wv)};
}

template <typename T>
Var<T> multihead_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, Var<T> wo,
                           std::vector<Var<T>>* weights) {
  const Shape original = q.shape();
  if (original.size() != 2 && original.size() != 3) {
    throw ShapeError("multihead_attention expects [N,c] or [B,N,c], got " + shape_str(original));
  }
  require_same_shape(q.shape(), k.shape(), "multihead_attention");
  require_same_shape(q.shape(), v.shape(), "multihead_attention");
  const std::size_t c = original.back();
  if (heads == 0 || c % heads != 0) {
    throw ShapeError("multihead_attention: width " + std::to_string(c) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (original.size() == 2) {
    const Shape batched{1, original[0], c};
    q = reshape(q, batched);
    k = reshape(k, batched);
    v = reshape(v, batched);
  }
  const std::size_t d = c / heads;
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<Var<T>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = heads == 1 ? q : slice_lastdim(q, h * d, d);
    auto kh = heads == 1 ? k : slice_lastdim(k, h * d, d);
    auto vh = heads == 1 ? v : slice_lastdim(v, h * d, d);
    auto a = softmax_lastdim(scale(bmm(qh, kh, true), inv_sqrt_d));
    if (weights) weights->push_back(a);
    outs.push_back(bmm(a, vh));
  }
  auto joined = heads == 1 ? outs[0] : concat_lastdim<T>(outs);
  return reshape(linear(joined, wo), original);
}

template <typename T>
Var<T> freq_parse(Var<T> x, Var<T> filter) {
  return spectral_filter(x, filter);
}

template <typename T>
Var<T> residual_block(Var<T> x, ResidualBlock<T>& block, bool use_freq_parser) {
  auto& tape = x.tape();
  auto h = silu(conv2d_3x3(x, tape.param(block.conv1_w), tape.param(block.conv1_b)));
  if (use_freq_parser) h = freq_parse(h, tape.param(block.freq));
  return add(x, conv2d_3x3(h, tape.param(block.conv2_w), tape.param(block.conv2_b)));
}

template <typename T>
EncoderFeatures<T> encode(Var<T> fused, Encoder<T>& enc) {
  const auto& cfg = enc.config;
  const Shape& s = fused.shape();
  if (s.size() != 4 || s[3] != cfg.in_channels) {
    throw ShapeError("encode: input " + shape_str(s) + " does not have " + std::to_string(cfg.in_channels) +
                     " channels");
  }
  auto& tape = fused.tape();
  auto h = conv2d_1x1(fused, tape.param(enc.stem_w), tape.param(enc.stem_b));
  EncoderFeatures<T> out;
  for (std::size_t i = 0; i < enc.blocks.size(); ++i) {
    h = residual_block(h, enc.blocks[i], cfg.use_freq_parser);
    if (i == 0) out.shallow = h;
  }
  const std::size_t batch = s[0], tokens = s[1] * s[2], w = cfg.width;
  auto f = reshape(h, {batch, tokens, w});
  auto qkv = qkv_project(f, tape.param(enc.attn.wq), tape.param(enc.attn.wk), tape.param(enc.attn.wv));
  auto attended = multihead_attention(qkv.q, qkv.k, qkv.v, cfg.heads, tape.param(enc.attn.wo));
  out.deep = add(h, reshape(attended, h.shape()));
  return out;
}

template <typename T>
Var<T> decode_head(Var<T> deep, Encoder<T>& enc) {
  auto& tape = deep.tape();
  return conv2d_1x1(deep, tape.param(enc.head_w), tape.param(enc.head_b));
}

#define MDFL_INSTANTIATE(T)                                                                                  \
  template struct Encoder<T>;                                                                                \
  template Qkv<T> qkv_project(Var<T>, Var<T>, Var<T>, Var<T>);                                               \
  template Var<T> multihead_attention(Var<T>, Var<T>, Var<T>, std::size_t, Var<T>, std::vector<Var<T>>*);    \
  template Var<T> freq_parse(Var<T>, Var<T>);                                                                \
  template Var<T> residual_block(Var<T>, ResidualBlock<T>&, bool);                                           \
  template EncoderFeatures<T> encode(Var<T>, Encoder<T>&);                                                   \
  template Var<T> decode_head(Var<T>, Encoder<T>&);

MDFL_INSTANTIATE(float)
MDFL_INSTANTIATE(double)

}  // namespace mdfl
