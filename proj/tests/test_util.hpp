#pragma once

// Test-only oracles and generators. Nothing here calls into the kernels or
// ops under test.

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

#include "mdfl/tensor.hpp"

namespace mdfl::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor<T>::uniform(std::move(shape), rng, static_cast<T>(lo), static_cast<T>(hi));
}

/// Direct O(N^2) 1D DFT: X[k] = sum_n x[n] exp(sign * 2 pi i n k / N).
inline std::vector<std::complex<double>> naive_dft(const std::vector<std::complex<double>>& x,
                                                   double sign = -1.0) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> s{0.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
      const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(j * k % n) / static_cast<double>(n);
      s += x[j] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = s;
  }
  return out;
}

/// Direct 2D DFT of one H x W plane stored row-major.
inline std::vector<std::complex<double>> naive_dft2(const std::vector<double>& plane, std::size_t h,
                                                    std::size_t w) {
  std::vector<std::complex<double>> out(h * w);
  for (std::size_t u = 0; u < h; ++u) {
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> s{0.0, 0.0};
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double a = -2.0 * std::numbers::pi *
                           (static_cast<double>(u * y) / static_cast<double>(h) +
                            static_cast<double>(v * x) / static_cast<double>(w));
          s += plane[y * w + x] * std::complex<double>(std::cos(a), std::sin(a));
        }
      }
      out[u * w + v] = s;
    }
  }
  return out;
}

/// Sliding-window 3x3 convolution with zero padding, x [H,W,Cin], w [3,3,Cin,Cout].
inline Tensor<double> naive_conv3x3(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2), cout = w.dim(3);
  Tensor<double> out({h, wd, cout});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xx = 0; xx < wd; ++xx) {
      for (std::size_t o = 0; o < cout; ++o) {
        double s = b[o];
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const long sy = static_cast<long>(y) + dy, sx = static_cast<long>(xx) + dx;
            if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(wd)) continue;
            for (std::size_t c = 0; c < cin; ++c) {
              s += x.at({static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), c}) *
                   w.at({static_cast<std::size_t>(dy + 1), static_cast<std::size_t>(dx + 1), c, o});
            }
          }
        }
        out.at({y, xx, o}) = s;
      }
    }
  }
  return out;
}

}  // namespace mdfl::testing
