#include "mdfl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mdfl/dft.hpp"
#include "mdfl/kernels.hpp"

namespace mdfl {

namespace k = kernels::active;
using kernels::Trans;

namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& v) {
  if (!v.valid()) throw std::invalid_argument("op applied to an unbound Var");
  return v.tape();
}

std::size_t last_dim(const Shape& s) { return s.back(); }
std::size_t leading_rows(const Shape& s) { return shape_size(s) / s.back(); }

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * n;
    T* yr = y + r * n;
    const T mx = *std::max_element(xr, xr + n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
  }
}

/// Split-plane spectrum of a [B, H, W, C] array.
template <typename T>
struct Planes {
  std::vector<T> re, im;
  explicit Planes(std::size_t n = 0) : re(n), im(n) {}
};

template <typename T>
Planes<T> dft_planes(const SpatialLayout& lay, const T* re, const T* im, bool inverse) {
  Planes<T> out(lay.batch * lay.h * lay.w * lay.c);
  DftPlan<T> ph(lay.h), pw(lay.w);
  k::dft2d(ph, pw, lay.batch, lay.c, re, im, out.re.data(), out.im.data(), inverse);
  return out;
}

}  // namespace

long reflect_index(long i, long n) {
  if (n <= 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

// ---- value-level ----------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tensor<T> c({a.dim(0), b.dim(1)});
  k::gemm(Trans::no, Trans::no, a.dim(0), b.dim(1), a.dim(1), a.ptr(), b.ptr(), c.ptr(), false);
  return c;
}

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  softmax_rows(x.ptr(), y.ptr(), leading_rows(x.shape()), last_dim(x.shape()));
  return y;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
  return y;
}

// ---- elementwise ----------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  out.add_(b.value());
  return tape_of(a).record("add", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    a.tape().accumulate(a, g);
    b.tape().accumulate(b, g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape_of(a).record("sub", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    a.tape().accumulate(a, g);
    if (b.requires_grad()) {
      Tensor<T> gb = g;
      for (auto& v : gb.data()) v = -v;
      b.tape().accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape_of(a).record("mul", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    if (a.requires_grad()) {
      Tensor<T> ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
      a.tape().accumulate(a, ga);
    }
    if (b.requires_grad()) {
      Tensor<T> gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
      b.tape().accumulate(b, gb);
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.data()) v *= factor;
  return tape_of(a).record("scale", std::move(out), {a}, [a, factor](const Tensor<T>& g) {
    Tensor<T> ga = g;
    for (auto& v : ga.data()) v *= factor;
    a.tape().accumulate(a, ga);
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> y = sigmoid(x.value());
  auto saved = std::make_shared<Tensor<T>>(y);
  return tape_of(x).record("sigmoid", std::move(y), {x}, [x, saved](const Tensor<T>& g) {
    Tensor<T> gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= (*saved)[i] * (T{1} - (*saved)[i]);
    x.tape().accumulate(x, gx);
  });
}

template <typename T>
Var<T> silu(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * stable_sigmoid(xv[i]);
  return tape_of(x).record("silu", std::move(y), {x}, [x](const Tensor<T>& g) {
    const Tensor<T>& xv = x.value();
    Tensor<T> gx = g;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T s = stable_sigmoid(xv[i]);
      gx[i] *= s * (T{1} + xv[i] * (T{1} - s));
    }
    x.tape().accumulate(x, gx);
  });
}

template <typename T>
Var<T> softmax_lastdim(Var<T> x) {
  Tensor<T> y = softmax_lastdim(x.value());
  auto saved = std::make_shared<Tensor<T>>(y);
  return tape_of(x).record("softmax_lastdim", std::move(y), {x}, [x, saved](const Tensor<T>& g) {
    const std::size_t n = last_dim(g.shape());
    const std::size_t rows = leading_rows(g.shape());
    Tensor<T> gx(g.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * (*saved)[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] = (*saved)[r * n + j] * (g[r * n + j] - dot);
    }
    x.tape().accumulate(x, gx);
  });
}

// ---- linear algebra -------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tensor<T> out = matmul(a.value(), b.value());
  return tape_of(a).record("matmul", std::move(out), {a, b}, [a, b](const Tensor<T>& g) {
    const std::size_t m = a.shape()[0], kk = a.shape()[1], n = b.shape()[1];
    if (a.requires_grad()) {
      Tensor<T>& ga = a.tape().grad_buffer(a);
      k::gemm(Trans::no, Trans::yes, m, kk, n, g.ptr(), b.value().ptr(), ga.ptr(), true);
    }
    if (b.requires_grad()) {
      Tensor<T>& gb = b.tape().grad_buffer(b);
      k::gemm(Trans::yes, Trans::no, kk, n, m, a.value().ptr(), g.ptr(), gb.ptr(), true);
    }
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] ||
      (transpose_b ? sa[2] != sb[2] : sa[2] != sb[1])) {
    throw ShapeError("bmm: incompatible shapes " + shape_str(sa) + " and " + shape_str(sb) +
                     (transpose_b ? " (b transposed)" : ""));
  }
  const std::size_t batch = sa[0], m = sa[1], kk = sa[2];
  const std::size_t n = transpose_b ? sb[1] : sb[2];
  Tensor<T> out({batch, m, n});
  const Trans tb = transpose_b ? Trans::yes : Trans::no;
  for (std::size_t i = 0; i < batch; ++i) {
    k::gemm(Trans::no, tb, m, n, kk, a.value().ptr() + i * m * kk, b.value().ptr() + i * kk * n,
            out.ptr() + i * m * n, false);
  }
  return tape_of(a).record("bmm", std::move(out), {a, b}, [a, b, batch, m, n, kk, transpose_b](const Tensor<T>& g) {
    if (a.requires_grad()) {
      Tensor<T>& ga = a.tape().grad_buffer(a);
      for (std::size_t i = 0; i < batch; ++i) {
        // ga = g * b^T (b untransposed) or g * b (b stored transposed)
        k::gemm(Trans::no, transpose_b ? Trans::no : Trans::yes, m, kk, n, g.ptr() + i * m * n,
                b.value().ptr() + i * kk * n, ga.ptr() + i * m * kk, true);
      }
    }
    if (b.requires_grad()) {
      Tensor<T>& gb = b.tape().grad_buffer(b);
      for (std::size_t i = 0; i < batch; ++i) {
        if (transpose_b) {
          k::gemm(Trans::yes, Trans::no, n, kk, m, g.ptr() + i * m * n, a.value().ptr() + i * m * kk,
                  gb.ptr() + i * kk * n, true);
        } else {
          k::gemm(Trans::yes, Trans::no, kk, n, m, a.value().ptr() + i * m * kk, g.ptr() + i * m * n,
                  gb.ptr() + i * kk * n, true);
        }
      }
    }
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  const std::size_t n = last_dim(x.shape());
  if (bias.shape().size() != 1 || bias.shape()[0] != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  const std::size_t rows = leading_rows(out.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bias.value()[j];
  }
  return tape_of(x).record("add_bias", std::move(out), {x, bias}, [x, bias, rows, n](const Tensor<T>& g) {
    x.tape().accumulate(x, g);
    if (bias.requires_grad()) {
      Tensor<T>& gb = bias.tape().grad_buffer(bias);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    }
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> bias) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sw.size() != 2 || sw[0] != last_dim(sx)) {
    throw ShapeError("linear: input " + shape_str(sx) + " incompatible with weight " + shape_str(sw));
  }
  const std::size_t rows = leading_rows(sx), in = sw[0], outc = sw[1];
  Shape so = sx;
  so.back() = outc;
  Tensor<T> out(so);
  k::gemm(Trans::no, Trans::no, rows, outc, in, x.value().ptr(), w.value().ptr(), out.ptr(), false);
  Var<T> y = tape_of(x).record("linear", std::move(out), {x, w}, [x, w, rows, in, outc](const Tensor<T>& g) {
    if (x.requires_grad()) {
      Tensor<T>& gx = x.tape().grad_buffer(x);
      k::gemm(Trans::no, Trans::yes, rows, in, outc, g.ptr(), w.value().ptr(), gx.ptr(), true);
    }
    if (w.requires_grad()) {
      Tensor<T>& gw = w.tape().grad_buffer(w);
      k::gemm(Trans::yes, Trans::no, in, outc, rows, x.value().ptr(), g.ptr(), gw.ptr(), true);
    }
  });
  return bias.valid() ? add_bias(y, bias) : y;
}

template <typename T>
Var<T> conv2d_1x1(Var<T> x, Var<T> w, Var<T> bias) {
  if (x.shape().size() < 3) throw ShapeError("conv2d_1x1: expected [..., H, W, C], got " + shape_str(x.shape()));
  if (w.shape().size() != 2 || w.shape()[0] != last_dim(x.shape())) {
    throw ShapeError("conv2d_1x1: channel mismatch between input " + shape_str(x.shape()) + " and weight " +
                     shape_str(w.shape()));
  }
  return linear(x, w, bias);
}

template <typename T>
Var<T> conv2d_3x3(Var<T> x, Var<T> w, Var<T> bias) {
  const auto lay = spatial_layout(x.shape(), "conv2d_3x3");
  const Shape& sw = w.shape();
  if (sw.size() != 4 || sw[0] != 3 || sw[1] != 3 || sw[2] != lay.c) {
    throw ShapeError("conv2d_3x3: weight " + shape_str(sw) + " incompatible with input " + shape_str(x.shape()));
  }
  const std::size_t cout = sw[3];
  const std::size_t pixels = lay.batch * lay.h * lay.w;
  const std::size_t kdim = 9 * lay.c;
  auto cols = std::make_shared<std::vector<T>>(pixels * kdim);
  k::im2col3x3(x.value().ptr(), lay.batch, lay.h, lay.w, lay.c, cols->data());
  Shape so = x.shape();
  so.back() = cout;
  Tensor<T> out(so);
  k::gemm(Trans::no, Trans::no, pixels, cout, kdim, cols->data(), w.value().ptr(), out.ptr(), false);
  Var<T> y = tape_of(x).record("conv2d_3x3", std::move(out), {x, w},
                               [x, w, cols, lay, pixels, kdim, cout](const Tensor<T>& g) {
    if (w.requires_grad()) {
      Tensor<T>& gw = w.tape().grad_buffer(w);
      k::gemm(Trans::yes, Trans::no, kdim, cout, pixels, cols->data(), g.ptr(), gw.ptr(), true);
    }
    if (x.requires_grad()) {
      std::vector<T> gcols(pixels * kdim);
      k::gemm(Trans::no, Trans::yes, pixels, kdim, cout, g.ptr(), w.value().ptr(), gcols.data(), false);
      Tensor<T>& gx = x.tape().grad_buffer(x);
      k::col2im3x3(gcols.data(), lay.batch, lay.h, lay.w, lay.c, gx.ptr());
    }
  });
  return bias.valid() ? add_bias(y, bias) : y;
}

// ---- shape ----------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return tape_of(x).record("reshape", std::move(out), {x}, [x](const Tensor<T>& g) {
    x.tape().accumulate(x, g.reshaped(x.shape()));
  });
}

template <typename T>
Var<T> slice_lastdim(Var<T> x, std::size_t start, std::size_t length) {
  const std::size_t n = last_dim(x.shape());
  if (length == 0 || start + length > n) {
    throw ShapeError("slice_lastdim: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") outside " + shape_str(x.shape()));
  }
  const std::size_t rows = leading_rows(x.shape());
  Shape so = x.shape();
  so.back() = length;
  Tensor<T> out(so);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.value().ptr() + r * n + start, length, out.ptr() + r * length);
  }
  return tape_of(x).record("slice_lastdim", std::move(out), {x}, [x, rows, n, start, length](const Tensor<T>& g) {
    Tensor<T>& gx = x.tape().grad_buffer(x);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < length; ++j) gx[r * n + start + j] += g[r * length + j];
    }
  });
}

template <typename T>
Var<T> concat_lastdim(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ShapeError("concat_lastdim: no inputs");
  const Shape& s0 = parts[0].shape();
  const std::size_t rows = leading_rows(s0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = s0;
    a.back() = b.back() = 0;
    if (a != b) throw ShapeError("concat_lastdim: " + shape_str(p.shape()) + " vs " + shape_str(s0));
    total += last_dim(p.shape());
  }
  Shape so = s0;
  so.back() = total;
  Tensor<T> out(so);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t n = last_dim(p.shape());
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(p.value().ptr() + r * n, n, out.ptr() + r * total + off);
    off += n;
  }
  std::vector<Var<T>> saved(parts.begin(), parts.end());
  return tape_of(parts[0]).record("concat_lastdim", std::move(out), parts, [saved, rows, total](const Tensor<T>& g) {
    std::size_t off = 0;
    for (const auto& p : saved) {
      const std::size_t n = last_dim(p.shape());
      if (p.requires_grad()) {
        Tensor<T>& gp = p.tape().grad_buffer(p);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) gp[r * n + j] += g[r * total + off + j];
        }
      }
      off += n;
    }
  });
}

// ---- reductions and losses -----------------------------------------------

template <typename T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (auto v : x.value().data()) s += v;
  return tape_of(x).record("sum", Tensor<T>({1}, s), {x}, [x](const Tensor<T>& g) {
    x.tape().accumulate(x, Tensor<T>(x.shape(), g[0]));
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T{1} / static_cast<T>(x.value().size()));
}

template <typename T>
Var<T> half_mse(Var<T> out, Var<T> target) {
  require_same_shape(out.shape(), target.shape(), "half_mse");
  const std::size_t n = out.value().size();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = out.value()[i] - target.value()[i];
    s += d * d;
  }
  const T loss = T{0.5} * s / static_cast<T>(n);
  return tape_of(out).record("half_mse", Tensor<T>({1}, loss), {out, target}, [out, target, n](const Tensor<T>& g) {
    Tensor<T> d(out.shape());
    for (std::size_t i = 0; i < n; ++i) d[i] = g[0] * (out.value()[i] - target.value()[i]) / static_cast<T>(n);
    out.tape().accumulate(out, d);
    if (target.requires_grad()) {
      for (auto& v : d.data()) v = -v;
      target.tape().accumulate(target, d);
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const std::size_t> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(s) + " for " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = s[0], kc = s[1];
  auto probs = std::make_shared<Tensor<T>>(softmax_lastdim(logits.value()));
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  T loss = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (lab[b] >= kc) throw std::out_of_range("cross_entropy: label out of range");
    const T* row = logits.value().ptr() + b * kc;
    const T mx = *std::max_element(row, row + kc);
    T z = 0;
    for (std::size_t j = 0; j < kc; ++j) z += std::exp(row[j] - mx);
    loss += std::log(z) + mx - row[lab[b]];
  }
  loss /= static_cast<T>(batch);
  return tape_of(logits).record("cross_entropy", Tensor<T>({1}, loss), {logits},
                                [logits, probs, lab, batch, kc](const Tensor<T>& g) {
    Tensor<T> gl = *probs;
    for (std::size_t b = 0; b < batch; ++b) gl[b * kc + lab[b]] -= T{1};
    const T f = g[0] / static_cast<T>(batch);
    for (auto& v : gl.data()) v *= f;
    logits.tape().accumulate(logits, gl);
  });
}

// ---- frequency domain -----------------------------------------------------

template <typename T>
Var<T> fft2d(Var<T> x) {
  const auto lay = spatial_layout(x.shape(), "fft2d");
  auto spec = dft_planes(lay, x.value().ptr(), static_cast<const T*>(nullptr), false);
  Shape so = x.shape();
  so.push_back(2);
  Tensor<T> out(so);
  for (std::size_t i = 0; i < spec.re.size(); ++i) {
    out[2 * i] = spec.re[i];
    out[2 * i + 1] = spec.im[i];
  }
  return tape_of(x).record("fft2d", std::move(out), {x}, [x, lay](const Tensor<T>& g) {
    // d/dx of sum_k g_k . DFT(x)_k is Re(unnormalized inverse DFT of g).
    const std::size_t n = shape_size(x.shape());
    std::vector<T> gre(n), gim(n);
    for (std::size_t i = 0; i < n; ++i) {
      gre[i] = g[2 * i];
      gim[i] = g[2 * i + 1];
    }
    auto back = dft_planes(lay, gre.data(), gim.data(), true);
    x.tape().accumulate(x, Tensor<T>(x.shape(), std::move(back.re)));
  });
}

template <typename T>
Var<T> ifft2d(Var<T> m) {
  const Shape& sm = m.shape();
  if (sm.size() < 4 || sm.back() != 2) throw ShapeError("ifft2d: expected [..., H, W, C, 2], got " + shape_str(sm));
  Shape so(sm.begin(), sm.end() - 1);
  const auto lay = spatial_layout(so, "ifft2d");
  const std::size_t n = shape_size(so);
  std::vector<T> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = m.value()[2 * i];
    im[i] = m.value()[2 * i + 1];
  }
  auto spatial = dft_planes(lay, re.data(), im.data(), true);
  const T norm = T{1} / static_cast<T>(lay.h * lay.w);
  for (auto& v : spatial.re) v *= norm;
  return tape_of(m).record("ifft2d", Tensor<T>(so, std::move(spatial.re)), {m}, [m, lay, n, norm](const Tensor<T>& g) {
    auto spec = dft_planes(lay, g.ptr(), static_cast<const T*>(nullptr), false);
    Tensor<T> gm(m.shape());
    for (std::size_t i = 0; i < n; ++i) {
      gm[2 * i] = spec.re[i] * norm;
      gm[2 * i + 1] = spec.im[i] * norm;
    }
    m.tape().accumulate(m, gm);
  });
}

template <typename T>
Var<T> complex_mul(Var<T> a, Var<T> w) {
  const Shape& sa = a.shape();
  const Shape& sw = w.shape();
  if (sw.size() > sa.size() || sa.back() != 2 || sw.back() != 2 ||
      !std::equal(sw.begin(), sw.end(), sa.end() - static_cast<long>(sw.size()))) {
    throw ShapeError("complex_mul: " + shape_str(sw) + " does not broadcast against " + shape_str(sa));
  }
  const std::size_t inner = shape_size(sw) / 2;
  const std::size_t outer = shape_size(sa) / shape_size(sw);
  Tensor<T> out(sa);
  const T* av = a.value().ptr();
  const T* wv = w.value().ptr();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t ia = 2 * (o * inner + i);
      const T ar = av[ia], ai = av[ia + 1], wr = wv[2 * i], wi = wv[2 * i + 1];
      out[ia] = ar * wr - ai * wi;
      out[ia + 1] = ar * wi + ai * wr;
    }
  }
  return tape_of(a).record("complex_mul", std::move(out), {a, w}, [a, w, outer, inner](const Tensor<T>& g) {
    const T* av = a.value().ptr();
    const T* wv = w.value().ptr();
    Tensor<T>* ga = a.requires_grad() ? &a.tape().grad_buffer(a) : nullptr;
    Tensor<T>* gw = w.requires_grad() ? &w.tape().grad_buffer(w) : nullptr;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t ia = 2 * (o * inner + i);
        const T gr = g[ia], gi = g[ia + 1];
        if (ga) {
          const T wr = wv[2 * i], wi = wv[2 * i + 1];
          (*ga)[ia] += gr * wr + gi * wi;
          (*ga)[ia + 1] += gi * wr - gr * wi;
        }
        if (gw) {
          const T ar = av[ia], ai = av[ia + 1];
          (*gw)[2 * i] += gr * ar + gi * ai;
          (*gw)[2 * i + 1] += gi * ar - gr * ai;
        }
      }
    }
  });
}

template <typename T>
Var<T> spectral_filter(Var<T> x, Var<T> weights) {
  const auto lay = spatial_layout(x.shape(), "spectral_filter");
  const std::size_t h = lay.h, w = lay.w, c = lay.c, half = w / 2 + 1;
  if (weights.shape() != Shape{h, half, c, 2}) {
    throw ShapeError("spectral_filter: weights " + shape_str(weights.shape()) + " do not match input " +
                     shape_str(x.shape()) + " (expected " + shape_str({h, half, c, 2}) + ")");
  }
  const std::size_t plane = h * w * c;
  const std::size_t bins = h * half * c;
  auto idx_full = [=](std::size_t b, std::size_t u, std::size_t v, std::size_t ch) {
    return ((b * h + u) * w + v) * c + ch;
  };
  auto idx_half = [=](std::size_t u, std::size_t v, std::size_t ch) { return (u * half + v) * c + ch; };

  auto spec = dft_planes(lay, x.value().ptr(), static_cast<const T*>(nullptr), false);
  // Keep the Hermitian half of the input spectrum for the weight gradient.
  auto kept = std::make_shared<Planes<T>>(lay.batch * bins);
  const T* wv = weights.value().ptr();
  Planes<T> filtered(lay.batch * plane);
  for (std::size_t b = 0; b < lay.batch; ++b) {
    for (std::size_t u = 0; u < h; ++u) {
      for (std::size_t v = 0; v < half; ++v) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t fi = idx_full(b, u, v, ch);
          const std::size_t hi = idx_half(u, v, ch);
          const T mr = spec.re[fi], mi = spec.im[fi];
          kept->re[b * bins + hi] = mr;
          kept->im[b * bins + hi] = mi;
          const T wr = wv[2 * hi], wi = wv[2 * hi + 1];
          filtered.re[fi] = mr * wr - mi * wi;
          filtered.im[fi] = mr * wi + mi * wr;
        }
      }
      // Complete the spectrum by conjugate symmetry.
      for (std::size_t v = half; v < w; ++v) {
        const std::size_t su = (h - u) % h;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t src = idx_full(b, su, w - v, ch);
          const std::size_t dst = idx_full(b, u, v, ch);
          const std::size_t sh = idx_half(su, w - v, ch);
          const T mr = spec.re[src], mi = spec.im[src];
          const T wr = wv[2 * sh], wi = wv[2 * sh + 1];
          filtered.re[dst] = mr * wr - mi * wi;
          filtered.im[dst] = -(mr * wi + mi * wr);
        }
      }
    }
  }
  auto spatial = dft_planes(lay, filtered.re.data(), filtered.im.data(), true);
  const T norm = T{1} / static_cast<T>(h * w);
  for (auto& v : spatial.re) v *= norm;

  return tape_of(x).record("spectral_filter", Tensor<T>(x.shape(), std::move(spatial.re)), {x, weights},
                           [=](const Tensor<T>& g) {
    auto gspec = dft_planes(lay, g.ptr(), static_cast<const T*>(nullptr), false);
    const T* wv = weights.value().ptr();
    Tensor<T>* gw = weights.requires_grad() ? &weights.tape().grad_buffer(weights) : nullptr;
    Planes<T> gin(x.requires_grad() ? lay.batch * plane : 0);
    for (std::size_t b = 0; b < lay.batch; ++b) {
      for (std::size_t u = 0; u < h; ++u) {
        for (std::size_t v = 0; v < half; ++v) {
          // Self-conjugate columns appear once in the completed spectrum, the rest twice.
          const T mult = (v == 0 || (w % 2 == 0 && v == w / 2)) ? T{1} : T{2};
          const T f = mult * norm;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t fi = idx_full(b, u, v, ch);
            const std::size_t hi = idx_half(u, v, ch);
            const T gr = gspec.re[fi] * f, gi = gspec.im[fi] * f;
            if (gw) {
              const T mr = kept->re[b * bins + hi], mi = kept->im[b * bins + hi];
              (*gw)[2 * hi] += gr * mr + gi * mi;
              (*gw)[2 * hi + 1] += gi * mr - gr * mi;
            }
            if (!gin.re.empty()) {
              const T wr = wv[2 * hi], wi = wv[2 * hi + 1];
              gin.re[fi] = gr * wr + gi * wi;
              gin.im[fi] = gi * wr - gr * wi;
            }
          }
        }
      }
    }
    if (!gin.re.empty()) {
      auto back = dft_planes(lay, gin.re.data(), gin.im.data(), true);
      x.tape().accumulate(x, Tensor<T>(x.shape(), std::move(back.re)));
    }
  });
}

// ---- resampling -----------------------------------------------------------

template <typename T>
Var<T> offset_sample(Var<T> x, Var<T> offsets) {
  const auto lay = spatial_layout(x.shape(), "offset_sample");
  Shape expect = x.shape();
  expect.back() = 2;
  if (offsets.shape() != expect) {
    throw ShapeError("offset_sample: offsets " + shape_str(offsets.shape()) + " expected " + shape_str(expect));
  }
  const long h = static_cast<long>(lay.h), w = static_cast<long>(lay.w);
  const std::size_t c = lay.c;

  struct Tap {
    std::size_t i00, i01, i10, i11;  // pixel offsets (row, col) of the four neighbours
    T fy, fx;
  };
  auto taps = std::make_shared<std::vector<Tap>>(lay.batch * lay.h * lay.w);
  const T* ov = offsets.value().ptr();
  const T* xv = x.value().ptr();
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < lay.batch; ++b) {
    for (long y = 0; y < h; ++y) {
      for (long xx = 0; xx < w; ++xx) {
        const std::size_t p = (b * lay.h + static_cast<std::size_t>(y)) * lay.w + static_cast<std::size_t>(xx);
        const T px = static_cast<T>(xx) + ov[2 * p];
        const T py = static_cast<T>(y) + ov[2 * p + 1];
        const T fx0 = std::floor(px), fy0 = std::floor(py);
        const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
        const std::size_t rx0 = static_cast<std::size_t>(reflect_index(x0, w));
        const std::size_t rx1 = static_cast<std::size_t>(reflect_index(x0 + 1, w));
        const std::size_t ry0 = static_cast<std::size_t>(reflect_index(y0, h));
        const std::size_t ry1 = static_cast<std::size_t>(reflect_index(y0 + 1, h));
        const std::size_t base = b * lay.h * lay.w;
        Tap t{base + ry0 * lay.w + rx0, base + ry0 * lay.w + rx1, base + ry1 * lay.w + rx0,
              base + ry1 * lay.w + rx1, py - fy0, px - fx0};
        (*taps)[p] = t;
        const T w00 = (T{1} - t.fy) * (T{1} - t.fx), w01 = (T{1} - t.fy) * t.fx;
        const T w10 = t.fy * (T{1} - t.fx), w11 = t.fy * t.fx;
        for (std::size_t ch = 0; ch < c; ++ch) {
          out[p * c + ch] = w00 * xv[t.i00 * c + ch] + w01 * xv[t.i01 * c + ch] + w10 * xv[t.i10 * c + ch] +
                            w11 * xv[t.i11 * c + ch];
        }
      }
    }
  }
  return tape_of(x).record("offset_sample", std::move(out), {x, offsets}, [x, offsets, taps, c](const Tensor<T>& g) {
    const T* xv = x.value().ptr();
    Tensor<T>* gx = x.requires_grad() ? &x.tape().grad_buffer(x) : nullptr;
    Tensor<T>* go = offsets.requires_grad() ? &offsets.tape().grad_buffer(offsets) : nullptr;
    for (std::size_t p = 0; p < taps->size(); ++p) {
      const Tap& t = (*taps)[p];
      const T w00 = (T{1} - t.fy) * (T{1} - t.fx), w01 = (T{1} - t.fy) * t.fx;
      const T w10 = t.fy * (T{1} - t.fx), w11 = t.fy * t.fx;
      T dfx = 0, dfy = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T gv = g[p * c + ch];
        if (gx) {
          (*gx)[t.i00 * c + ch] += w00 * gv;
          (*gx)[t.i01 * c + ch] += w01 * gv;
          (*gx)[t.i10 * c + ch] += w10 * gv;
          (*gx)[t.i11 * c + ch] += w11 * gv;
        }
        const T v00 = xv[t.i00 * c + ch], v01 = xv[t.i01 * c + ch];
        const T v10 = xv[t.i10 * c + ch], v11 = xv[t.i11 * c + ch];
        dfx += gv * ((T{1} - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
        dfy += gv * ((T{1} - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
      }
      if (go) {
        (*go)[2 * p] += dfx;
        (*go)[2 * p + 1] += dfy;
      }
    }
  });
}

// ---- instantiation --------------------------------------------------------

#define MDFL_INSTANTIATE(T)                                                     \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> softmax_lastdim(const Tensor<T>&);                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                 \
  template Var<T> add(Var<T>, Var<T>);                                          \
  template Var<T> sub(Var<T>, Var<T>);                                          \
  template Var<T> mul(Var<T>, Var<T>);                                          \
  template Var<T> scale(Var<T>, T);                                             \
  template Var<T> sigmoid(Var<T>);                                              \
  template Var<T> silu(Var<T>);                                                 \
  template Var<T> softmax_lastdim(Var<T>);                                      \
  template Var<T> matmul(Var<T>, Var<T>);                                       \
  template Var<T> bmm(Var<T>, Var<T>, bool);                                    \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                               \
  template Var<T> add_bias(Var<T>, Var<T>);                                     \
  template Var<T> conv2d_1x1(Var<T>, Var<T>, Var<T>);                           \
  template Var<T> conv2d_3x3(Var<T>, Var<T>, Var<T>);                           \
  template Var<T> reshape(Var<T>, Shape);                                       \
  template Var<T> slice_lastdim(Var<T>, std::size_t, std::size_t);             \
  template Var<T> concat_lastdim(std::span<const Var<T>>);                      \
  template Var<T> sum(Var<T>);                                                  \
  template Var<T> mean(Var<T>);                                                 \
  template Var<T> half_mse(Var<T>, Var<T>);                                     \
  template Var<T> cross_entropy(Var<T>, std::span<const std::size_t>);          \
  template Var<T> fft2d(Var<T>);                                                \
  template Var<T> ifft2d(Var<T>);                                               \
  template Var<T> complex_mul(Var<T>, Var<T>);                                  \
  template Var<T> spectral_filter(Var<T>, Var<T>);                              \
  template Var<T> offset_sample(Var<T>, Var<T>);
MDFL_INSTANTIATE(float)
MDFL_INSTANTIATE(double)
#undef MDFL_INSTANTIATE

}  // namespace mdfl
