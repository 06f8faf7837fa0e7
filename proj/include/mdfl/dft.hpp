#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "mdfl/tensor.hpp"

namespace mdfl {

/// One-dimensional DFT of arbitrary length.
///
/// Lengths up to 16 and prime lengths use the direct O(n^2) sum. Larger
/// composite lengths are split recursively by their smallest prime factor
/// (mixed-radix decimation in time). Both directions are unnormalized:
///   out[k] = sum_j in[j] * exp(-+ 2*pi*i*j*k / n).
template <typename T>
class DftPlan {
 public:
  explicit DftPlan(std::size_t n);

  std::size_t size() const noexcept { return n_; }

  /// Reads n inputs spaced `stride` apart and writes n contiguous outputs.
  /// `in` and `out` must not alias.
  void execute(const std::complex<T>* in, std::size_t stride, std::complex<T>* out,
               bool inverse) const;

 private:
  std::complex<T> root(std::size_t index, bool inverse) const {
    const auto& w = roots_[index % n_];
    return inverse ? std::conj(w) : w;
  }
  void transform(const std::complex<T>* in, std::size_t stride, std::complex<T>* out,
                 std::size_t n, std::size_t root_step, std::size_t factor, bool inverse) const;

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<std::complex<T>> roots_;  // exp(-2*pi*i*j/n)
};

extern template class DftPlan<float>;
extern template class DftPlan<double>;

/// Unnormalized forward 2D DFT over the two spatial axes of a real
/// [..., H, W, C] tensor, one transform per channel (and per leading index).
template <typename T>
ComplexTensor<T> fft2d(const Tensor<T>& x);

/// Complex forward transform (same layout conventions as fft2d).
template <typename T>
ComplexTensor<T> fft2d(const ComplexTensor<T>& x);

/// Inverse of fft2d including the 1/(H*W) factor, complex result.
template <typename T>
ComplexTensor<T> ifft2d_complex(const ComplexTensor<T>& m);

/// Real part of ifft2d_complex.
template <typename T>
Tensor<T> ifft2d(const ComplexTensor<T>& m);

/// Splits a [..., H, W, C] shape into (leading batch, H, W, C). Rank 3 means batch 1.
struct SpatialLayout {
  std::size_t batch, h, w, c;
};
SpatialLayout spatial_layout(const Shape& shape, const char* op);

}  // namespace mdfl
