#pragma once

#include <random>
#include <string>
#include <vector>

#include "mdfl/autograd.hpp"

namespace mdfl {

struct EncoderConfig {
  std::size_t in_channels = 0;  // C * S of the fused stack
  std::size_t width = 64;
  std::size_t depth = 4;  // residual blocks, >= 2
  std::size_t heads = 4;
  std::size_t patch = 7;
  bool use_freq_parser = true;

  /// Throws ValidationError on an inconsistent configuration.
  void validate() const;
};

template <typename T>
struct ResidualBlock {
  Param<T> conv1_w, conv1_b;  // [3,3,w,w], [w]
  Param<T> conv2_w, conv2_b;
  Param<T> freq;  // [p, p/2+1, w, 2] complex filter, identity at init
};

template <typename T>
struct AttentionParams {
  Param<T> wq, wk, wv, wo;  // [w,w], no bias
};

/// One modality branch: stem, residual blocks, attention, and the
/// reconstruction head used during diffusion pretraining.
template <typename T>
struct Encoder {
  EncoderConfig config;
  Param<T> stem_w, stem_b;  // [in, w], [w]
  std::vector<ResidualBlock<T>> blocks;
  AttentionParams<T> attn;
  Param<T> head_w, head_b;  // [w, in], [in]

  /// Random weights; frequency filters start at identity, second convs and
  /// the attention output projection start small so each residual branch is
  /// close to a skip connection.
  static Encoder init(const EncoderConfig& config, std::mt19937_64& rng, const std::string& prefix);
  /// Zeroes the second conv of every block and the attention output
  /// projection, so encoding reduces to the stem output.
  void zero_residual_branches();

  ParamList<T> params();
  ParamList<T> encoder_params();  // everything but the head
};

template <typename T>
struct EncoderFeatures {
  Var<T> shallow;  // block-1 output
  Var<T> deep;     // post-attention output
};

template <typename T>
struct Qkv {
  Var<T> q, k, v;
};

/// F [.., N, c] times Wq, Wk, Wv.
template <typename T>
Qkv<T> qkv_project(Var<T> f, Var<T> wq, Var<T> wk, Var<T> wv);

/// Scaled dot-product attention split over `heads` (per-head scale 1/sqrt(c/heads)),
/// heads concatenated and projected by wo. Inputs are [N, c] or [B, N, c].
/// If `weights` is given it receives one [B, N, N] attention matrix per head.
template <typename T>
Var<T> multihead_attention(Var<T> q, Var<T> k, Var<T> v, std::size_t heads, Var<T> wo,
                           std::vector<Var<T>>* weights = nullptr);

/// Learnable frequency filter applied to the spatial spectrum of each channel.
template <typename T>
Var<T> freq_parse(Var<T> x, Var<T> filter);

/// x + conv3x3(freq_parse(silu(conv3x3(x)))).
template <typename T>
Var<T> residual_block(Var<T> x, ResidualBlock<T>& block, bool use_freq_parser = true);

/// fused [B, p, p, in] -> features [B, p, p, width].
template <typename T>
EncoderFeatures<T> encode(Var<T> fused, Encoder<T>& enc);

/// deep [B, p, p, width] -> reconstruction [B, p, p, in].
template <typename T>
Var<T> decode_head(Var<T> deep, Encoder<T>& enc);

}  // namespace mdfl
