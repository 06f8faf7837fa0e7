#include <algorithm>
#include <complex>
#include <stdexcept>
#include <vector>

#include "mdfl/kernels.hpp"

#ifdef MDFL_HAVE_OPENMP
#include <omp.h>
#endif

namespace mdfl::kernels::omp {

namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 15;

}  // namespace

int max_threads() {
#ifdef MDFL_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate) {
  if (ta == Trans::yes && tb == Trans::yes) throw std::invalid_argument("gemm: (yes, yes) unsupported");
  const long rows = static_cast<long>(m);
  const bool par = m * n * k >= kParallelWork;

  // Wide outputs: transpose B once so the inner loop runs over contiguous j.
  // Each c[i][j] still sums over p in ascending order.
  std::vector<T> bt;
  if (tb == Trans::yes && n >= 8) {
    bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    }
    b = bt.data();
    tb = Trans::no;
  }

  if (tb == Trans::yes) {
#pragma omp parallel for schedule(static) if (par)
    for (long i = 0; i < rows; ++i) {
      const T* arow = a + static_cast<std::size_t>(i) * k;
      T* crow = c + static_cast<std::size_t>(i) * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T s = accumulate ? crow[j] : T{0};
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        crow[j] = s;
      }
    }
    return;
  }

#pragma omp parallel for schedule(static) if (par)
  for (long i = 0; i < rows; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    T* crow = c + ui * n;
    if (!accumulate) std::fill(crow, crow + n, T{0});
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ta == Trans::no ? a[ui * k + p] : a[p * m + ui];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void im2col3x3(const T* x, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* cols) {
  const std::size_t row_len = 9 * c;
  const long pixels = static_cast<long>(batch * h * w);
#pragma omp parallel for schedule(static) if (batch * h * w * row_len >= kParallelWork)
  for (long pix = 0; pix < pixels; ++pix) {
    const auto up = static_cast<std::size_t>(pix);
    const std::size_t b = up / (h * w);
    const std::size_t y = (up / w) % h;
    const std::size_t xx = up % w;
    T* row = cols + up * row_len;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      const long sy = static_cast<long>(y + ky) - 1;
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const long sx = static_cast<long>(xx + kx) - 1;
        T* dst = row + (ky * 3 + kx) * c;
        if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) {
          std::fill(dst, dst + c, T{0});
        } else {
          const T* src = x + ((b * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c;
          std::copy(src, src + c, dst);
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* dx) {
  const std::size_t row_len = 9 * c;
  const long pixels = static_cast<long>(batch * h * w);
#pragma omp parallel if (batch * h * w * row_len >= kParallelWork)
  {
    std::vector<T> acc(c);
#pragma omp for schedule(static)
    for (long pix = 0; pix < pixels; ++pix) {
      const auto up = static_cast<std::size_t>(pix);
      const std::size_t b = up / (h * w);
      const std::size_t y = (up / w) % h;
      const std::size_t xx = up % w;
      std::fill(acc.begin(), acc.end(), T{0});
      for (std::size_t ky = 0; ky < 3; ++ky) {
        const long oy = static_cast<long>(y) - static_cast<long>(ky) + 1;
        if (oy < 0 || oy >= static_cast<long>(h)) continue;
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const long ox = static_cast<long>(xx) - static_cast<long>(kx) + 1;
          if (ox < 0 || ox >= static_cast<long>(w)) continue;
          const T* src = cols + ((b * h + static_cast<std::size_t>(oy)) * w + static_cast<std::size_t>(ox)) * row_len +
                         (ky * 3 + kx) * c;
          for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += src[ch];
        }
      }
      T* dst = dx + up * c;
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += acc[ch];
    }
  }
}

template <typename T>
void dft2d(const DftPlan<T>& plan_h, const DftPlan<T>& plan_w, std::size_t batch, std::size_t c,
           const T* in_re, const T* in_im, T* out_re, T* out_im, bool inverse) {
  const std::size_t h = plan_h.size();
  const std::size_t w = plan_w.size();
  const long planes = static_cast<long>(batch * c);
#pragma omp parallel if (batch * c * h * w * (h + w) >= kParallelWork)
  {
    std::vector<std::complex<T>> plane(h * w), rows(h * w), column(h);
#pragma omp for schedule(static)
    for (long pl = 0; pl < planes; ++pl) {
      const std::size_t b = static_cast<std::size_t>(pl) / c;
      const std::size_t ch = static_cast<std::size_t>(pl) % c;
      const std::size_t base = b * h * w;
      for (std::size_t p = 0; p < h * w; ++p) {
        const std::size_t idx = (base + p) * c + ch;
        plane[p] = {in_re[idx], in_im ? in_im[idx] : T{0}};
      }
      for (std::size_t y = 0; y < h; ++y) plan_w.execute(&plane[y * w], 1, &rows[y * w], inverse);
      for (std::size_t x = 0; x < w; ++x) {
        plan_h.execute(&rows[x], w, column.data(), inverse);
        for (std::size_t y = 0; y < h; ++y) {
          const std::size_t idx = (base + y * w + x) * c + ch;
          out_re[idx] = column[y].real();
          out_im[idx] = column[y].imag();
        }
      }
    }
  }
}

#define MDFL_INSTANTIATE(T)                                                                        \
  template void gemm<T>(Trans, Trans, std::size_t, std::size_t, std::size_t, const T*, const T*,   \
                        T*, bool);                                                                 \
  template void im2col3x3<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t, T*);    \
  template void col2im3x3<T>(const T*, std::size_t, std::size_t, std::size_t, std::size_t, T*);    \
  template void dft2d<T>(const DftPlan<T>&, const DftPlan<T>&, std::size_t, std::size_t, const T*, \
                         const T*, T*, T*, bool);
MDFL_INSTANTIATE(float)
MDFL_INSTANTIATE(double)
#undef MDFL_INSTANTIATE

}  // namespace mdfl::kernels::omp
