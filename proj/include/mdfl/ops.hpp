#pragma once

// Differentiable primitives. Every Var op records its value and backward
// closure on the tape of its first operand. Spatial ops take
// [..., H, W, C] tensors (channels last); rank 3 is a single image.

#include <cstddef>
#include <span>
#include <vector>

#include "mdfl/autograd.hpp"
#include "mdfl/tensor.hpp"

namespace mdfl {

// ---- value-level ----------------------------------------------------------

/// [m x k] * [k x n]; ShapeError names both shapes on mismatch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Max-subtracted softmax over the last dimension.
template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

// ---- elementwise ----------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> sigmoid(Var<T> x);
/// x * sigmoid(x); the smooth gating nonlinearity used throughout the encoder.
template <typename T>
Var<T> silu(Var<T> x);
template <typename T>
Var<T> softmax_lastdim(Var<T> x);

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// Batched [B,m,k] x [B,k,n], or [B,m,k] x [B,n,k]^T when transpose_b.
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b = false);
/// Maps the last dimension: x [..., in] * w [in, out] + bias [out].
/// `bias` may be an invalid Var for no bias.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias = {});
/// Adds bias [n] along the last dimension.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias);

template <typename T>
Var<T> conv2d_1x1(Var<T> x, Var<T> w, Var<T> bias);
/// Same-size 3x3 convolution with zero padding 1; w is [3, 3, Cin, Cout].
template <typename T>
Var<T> conv2d_3x3(Var<T> x, Var<T> w, Var<T> bias);

// ---- shape ----------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
template <typename T>
Var<T> slice_lastdim(Var<T> x, std::size_t start, std::size_t length);
template <typename T>
Var<T> concat_lastdim(std::span<const Var<T>> parts);

// ---- reductions and losses -----------------------------------------------

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);
/// 0.5 * mean((out - target)^2).
template <typename T>
Var<T> half_mse(Var<T> out, Var<T> target);
/// Mean softmax cross-entropy; logits [B, K], labels 0-based class indices.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels);

// ---- frequency domain -----------------------------------------------------
// Complex Vars use an interleaved trailing dimension of 2 (real, imag).

/// Unnormalized forward 2D DFT over (H, W): [..., H, W, C] -> [..., H, W, C, 2].
template <typename T>
Var<T> fft2d(Var<T> x);
/// Real part of the normalized inverse: [..., H, W, C, 2] -> [..., H, W, C].
template <typename T>
Var<T> ifft2d(Var<T> m);
/// Elementwise complex product; w's shape is a suffix of a's and broadcasts.
template <typename T>
Var<T> complex_mul(Var<T> a, Var<T> w);

/// Learnable global filter: real-input spectrum of each channel, elementwise
/// complex product with `weights` [H, W/2+1, C, 2] over the Hermitian half
/// plane, inverse transform back to a real [..., H, W, C] map.
template <typename T>
Var<T> spectral_filter(Var<T> x, Var<T> weights);

// ---- resampling -----------------------------------------------------------

/// Bilinear read of x [..., H, W, C] at (col + offsets[...,0], row + offsets[...,1])
/// with mirror (reflect) boundary. offsets is [..., H, W, 2].
template <typename T>
Var<T> offset_sample(Var<T> x, Var<T> offsets);

/// Mirror index into [0, n): -1 -> 1, n -> n-2 (edge not repeated).
long reflect_index(long i, long n);

}  // namespace mdfl
