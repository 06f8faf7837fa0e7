#pragma once

// Dense compute kernels behind the differentiable ops.
//
// Two implementations share one signature set: `serial` is the plain loop
// reference kept for testing, `omp` parallelizes the outer loops with OpenMP.
// Every output element is accumulated in the same order by both, so results
// are bit-identical regardless of thread count.

#include <cstddef>

#include "mdfl/dft.hpp"

namespace mdfl::kernels {

enum class Trans { no, yes };

namespace serial {

/// C[m x n] (+)= op(A) * op(B) with op(A) m x k and op(B) k x n, row-major.
/// Supported combinations: (no, no), (yes, no), (no, yes).
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate);

/// x [B,H,W,C] -> cols [B*H*W, 9*C]; zero padding of width 1, (ky, kx, c) column order.
template <typename T>
void im2col3x3(const T* x, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* cols);

/// Adjoint of im2col3x3: dx [B,H,W,C] += gathered column gradients.
template <typename T>
void col2im3x3(const T* cols, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* dx);

/// Unnormalized 2D DFT of every (batch, channel) plane of a [B,H,W,C] array.
/// `in_im` may be null for real input.
template <typename T>
void dft2d(const DftPlan<T>& plan_h, const DftPlan<T>& plan_w, std::size_t batch, std::size_t c,
           const T* in_re, const T* in_im, T* out_re, T* out_im, bool inverse);

}  // namespace serial

namespace omp {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate);

template <typename T>
void im2col3x3(const T* x, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* cols);

template <typename T>
void col2im3x3(const T* cols, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* dx);

template <typename T>
void dft2d(const DftPlan<T>& plan_h, const DftPlan<T>& plan_w, std::size_t batch, std::size_t c,
           const T* in_re, const T* in_im, T* out_re, T* out_im, bool inverse);

/// Threads the omp kernels will use (1 when built without OpenMP).
int max_threads();

}  // namespace omp

#ifdef MDFL_HAVE_OPENMP
namespace active = omp;
#else
namespace active = serial;
#endif

}  // namespace mdfl::kernels
