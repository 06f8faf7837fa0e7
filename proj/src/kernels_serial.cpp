#include <complex>
#include <stdexcept>
#include <vector>

#include "mdfl/kernels.hpp"

namespace mdfl::kernels::serial {

template <typename T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b,
          T* c, bool accumulate) {
  if (ta == Trans::yes && tb == Trans::yes) throw std::invalid_argument("gemm: (yes, yes) unsupported");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T s = accumulate ? c[i * n + j] : T{0};
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta == Trans::no ? a[i * k + p] : a[p * m + i];
        const T bv = tb == Trans::no ? b[p * n + j] : b[j * k + p];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  }
}

template <typename T>
void im2col3x3(const T* x, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* cols) {
  const std::size_t row_len = 9 * c;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        T* row = cols + ((b * h + y) * w + xx) * row_len;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            T* dst = row + (ky * 3 + kx) * c;
            const long sy = static_cast<long>(y + ky) - 1;
            const long sx = static_cast<long>(xx + kx) - 1;
            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
            for (std::size_t ch = 0; ch < c; ++ch) {
              dst[ch] = inside ? x[((b * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)) * c + ch]
                               : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* cols, std::size_t batch, std::size_t h, std::size_t w, std::size_t c, T* dx) {
  const std::size_t row_len = 9 * c;
  std::vector<T> acc(c);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        std::fill(acc.begin(), acc.end(), T{0});
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const long oy = static_cast<long>(y) - static_cast<long>(ky) + 1;
            const long ox = static_cast<long>(xx) - static_cast<long>(kx) + 1;
            if (oy < 0 || ox < 0 || oy >= static_cast<long>(h) || ox >= static_cast<long>(w)) continue;
            const T* src = cols + ((b * h + static_cast<std::size_t>(oy)) * w + static_cast<std::size_t>(ox)) * row_len +
                           (ky * 3 + kx) * c;
            for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += src[ch];
          }
        }
        T* dst = dx + ((b * h + y) * w + xx) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += acc[ch];
      }
    }
  }
}

template <typename T>
void dft2d(const DftPlan<T>& plan_h, const DftPlan<T>& plan_w, std::size_t batch, std::size_t c,
           const T* in_re, const T* in_im, T* out_re, T* out_im, bool inverse) {
  const std::size_t h = plan_h.size();
  const std::size_t w = plan_w.size();
  std::vector<std::complex<T>> plane(h * w), rows(h * w), column(h);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < h * w; ++p) {
        const std::size_t idx = (b * h * w + p) * c + ch;
        plane[p] = {in_re[idx], in_im ? in_im[idx] : T{0}};
      }
      for (std::size_t y = 0; y < h; ++y) plan_w.execute(&plane[y * w], 1, &rows[y * w], inverse);
      for (std::size_t x = 0; x < w; ++x) {
        plan_h.execute(&rows[x], w, column.data(), inverse);
        for (std::size_t y = 0; y < h; ++y) {
          const std::size_t idx = (b * h * w + y * w + x) * c + ch;
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

}  // namespace mdfl::kernels::serial
