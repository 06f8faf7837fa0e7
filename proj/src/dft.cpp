#include "mdfl/dft.hpp"

#include <numbers>

#include "mdfl/kernels.hpp"

namespace mdfl {

namespace {

constexpr std::size_t kDirectMax = 16;

// Plain product; std::complex operator* goes through the Annex G NaN/inf
// recovery path, which dominates small transforms.
template <typename T>
inline std::complex<T> cmul(std::complex<T> a, std::complex<T> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

std::size_t smallest_prime_factor(std::size_t n) {
  for (std::size_t p = 2; p * p <= n; ++p) {
    if (n % p == 0) return p;
  }
  return n;
}

}  // namespace

template <typename T>
DftPlan<T>::DftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("DftPlan: length must be positive");
  roots_.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    roots_[j] = std::complex<T>(static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle)));
  }
  std::size_t m = n;
  while (m > kDirectMax) {
    const std::size_t p = smallest_prime_factor(m);
    if (p == m) break;
    factors_.push_back(p);
    m /= p;
  }
}

template <typename T>
void DftPlan<T>::execute(const std::complex<T>* in, std::size_t stride, std::complex<T>* out,
                         bool inverse) const {
  transform(in, stride, out, n_, 1, 0, inverse);
}

template <typename T>
void DftPlan<T>::transform(const std::complex<T>* in, std::size_t stride, std::complex<T>* out,
                           std::size_t n, std::size_t root_step, std::size_t factor,
                           bool inverse) const {
  if (factor == factors_.size()) {
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<T> s = in[0];
      std::size_t idx = 0;
      for (std::size_t j = 1; j < n; ++j) {
        idx += k;
        if (idx >= n) idx -= n;
        s += cmul(in[j * stride], root(idx * root_step, inverse));
      }
      out[k] = s;
    }
    return;
  }
  const std::size_t p = factors_[factor];
  const std::size_t m = n / p;
  for (std::size_t r = 0; r < p; ++r) {
    transform(in + r * stride, stride * p, out + r * m, m, root_step * p, factor + 1, inverse);
  }
  // Positions {r*m + k} and {k + q*m} coincide for fixed k, so the butterfly
  // can be done in place through a p-element buffer.
  std::vector<std::complex<T>> tmp(p);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) tmp[r] = cmul(out[r * m + k], root(r * k * root_step, inverse));
    for (std::size_t q = 0; q < p; ++q) {
      std::complex<T> s = tmp[0];
      for (std::size_t r = 1; r < p; ++r) s += cmul(tmp[r], root(m * (r * q % p) * root_step, inverse));
      out[k + q * m] = s;
    }
  }
}

template class DftPlan<float>;
template class DftPlan<double>;

SpatialLayout spatial_layout(const Shape& shape, const char* op) {
  if (shape.size() < 3) {
    throw ShapeError(std::string(op) + ": expected [..., H, W, C], got " + shape_str(shape));
  }
  const std::size_t r = shape.size();
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 3 < r; ++i) batch *= shape[i];
  return {batch, shape[r - 3], shape[r - 2], shape[r - 1]};
}

template <typename T>
ComplexTensor<T> fft2d(const Tensor<T>& x) {
  const auto lay = spatial_layout(x.shape(), "fft2d");
  ComplexTensor<T> out(x.shape());
  DftPlan<T> ph(lay.h), pw(lay.w);
  kernels::active::dft2d(ph, pw, lay.batch, lay.c, x.ptr(), static_cast<const T*>(nullptr),
                         out.real.data(), out.imag.data(), false);
  return out;
}

template <typename T>
ComplexTensor<T> fft2d(const ComplexTensor<T>& x) {
  const auto lay = spatial_layout(x.shape, "fft2d");
  ComplexTensor<T> out(x.shape);
  DftPlan<T> ph(lay.h), pw(lay.w);
  kernels::active::dft2d(ph, pw, lay.batch, lay.c, x.real.data(), x.imag.data(), out.real.data(),
                         out.imag.data(), false);
  return out;
}

template <typename T>
ComplexTensor<T> ifft2d_complex(const ComplexTensor<T>& m) {
  const auto lay = spatial_layout(m.shape, "ifft2d");
  ComplexTensor<T> out(m.shape);
  DftPlan<T> ph(lay.h), pw(lay.w);
  kernels::active::dft2d(ph, pw, lay.batch, lay.c, m.real.data(), m.imag.data(), out.real.data(),
                         out.imag.data(), true);
  const T scale = T{1} / static_cast<T>(lay.h * lay.w);
  for (auto& v : out.real) v *= scale;
  for (auto& v : out.imag) v *= scale;
  return out;
}

template <typename T>
Tensor<T> ifft2d(const ComplexTensor<T>& m) {
  auto full = ifft2d_complex(m);
  return Tensor<T>(m.shape, std::move(full.real));
}

template ComplexTensor<float> fft2d(const Tensor<float>&);
template ComplexTensor<double> fft2d(const Tensor<double>&);
template ComplexTensor<float> fft2d(const ComplexTensor<float>&);
template ComplexTensor<double> fft2d(const ComplexTensor<double>&);
template ComplexTensor<float> ifft2d_complex(const ComplexTensor<float>&);
template ComplexTensor<double> ifft2d_complex(const ComplexTensor<double>&);
template Tensor<float> ifft2d(const ComplexTensor<float>&);
template Tensor<double> ifft2d(const ComplexTensor<double>&);

}  // namespace mdfl
