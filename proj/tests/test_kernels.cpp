#include <gtest/gtest.h>

#include <vector>

#include "mdfl/kernels.hpp"
#include "test_util.hpp"

#ifdef MDFL_HAVE_OPENMP
#include <omp.h>
#endif

using namespace mdfl;
using namespace mdfl::kernels;

namespace {

class ThreadCount {
 public:
  explicit ThreadCount(int n) {
#ifdef MDFL_HAVE_OPENMP
    saved_ = omp_get_max_threads();
    omp_set_num_threads(n);
#else
    (void)n;
#endif
  }
  ~ThreadCount() {
#ifdef MDFL_HAVE_OPENMP
    omp_set_num_threads(saved_);
#endif
  }

 private:
  int saved_ = 1;
};

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  return mdfl::testing::random_tensor<float>({n}, seed).vec();
}

}  // namespace

class KernelAgreement : public ::testing::TestWithParam<int> {};

TEST_P(KernelAgreement, GemmAllLayoutsBitIdentical) {
  ThreadCount threads(GetParam());
  const std::size_t m = 97, n = 19, k = 144;
  auto a = random_vec(m * k, 1), b = random_vec(k * n, 2), c0 = random_vec(m * n, 3);
  for (auto [ta, tb] : {std::pair{Trans::no, Trans::no}, {Trans::yes, Trans::no}, {Trans::no, Trans::yes}}) {
    for (bool acc : {false, true}) {
      auto cs = c0, cp = c0;
      serial::gemm(ta, tb, m, n, k, a.data(), b.data(), cs.data(), acc);
      omp::gemm(ta, tb, m, n, k, a.data(), b.data(), cp.data(), acc);
      EXPECT_EQ(cs, cp);
    }
  }
}

TEST_P(KernelAgreement, Im2colAndCol2imBitIdentical) {
  ThreadCount threads(GetParam());
  const std::size_t batch = 5, h = 7, w = 6, c = 9;
  auto x = random_vec(batch * h * w * c, 4);
  std::vector<float> cs(batch * h * w * 9 * c), cp(cs.size());
  serial::im2col3x3(x.data(), batch, h, w, c, cs.data());
  omp::im2col3x3(x.data(), batch, h, w, c, cp.data());
  EXPECT_EQ(cs, cp);

  auto g = random_vec(cs.size(), 5);
  auto dxs = random_vec(x.size(), 6), dxp = dxs;
  serial::col2im3x3(g.data(), batch, h, w, c, dxs.data());
  omp::col2im3x3(g.data(), batch, h, w, c, dxp.data());
  EXPECT_EQ(dxs, dxp);
}

TEST_P(KernelAgreement, Dft2dBitIdentical) {
  ThreadCount threads(GetParam());
  const std::size_t batch = 6, c = 11;
  DftPlan<float> ph(7), pw(7);
  auto re = random_vec(batch * 49 * c, 7), im = random_vec(batch * 49 * c, 8);
  for (bool inverse : {false, true}) {
    for (const float* imag : {static_cast<const float*>(nullptr), static_cast<const float*>(im.data())}) {
      std::vector<float> sr(re.size()), si(re.size()), pr(re.size()), pi(re.size());
      serial::dft2d(ph, pw, batch, c, re.data(), imag, sr.data(), si.data(), inverse);
      omp::dft2d(ph, pw, batch, c, re.data(), imag, pr.data(), pi.data(), inverse);
      EXPECT_EQ(sr, pr);
      EXPECT_EQ(si, pi);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Threads, KernelAgreement, ::testing::Values(1, 3, 8));

TEST(Kernels, Col2imIsAdjointOfIm2col) {
  // <im2col(x), g> == <x, col2im(g)> for the zero-padded gather/scatter pair.
  const std::size_t batch = 2, h = 4, w = 5, c = 3;
  auto x = mdfl::testing::random_tensor<double>({batch * h * w * c}, 9).vec();
  auto g = mdfl::testing::random_tensor<double>({batch * h * w * 9 * c}, 10).vec();
  std::vector<double> cols(g.size()), dx(x.size(), 0.0);
  serial::im2col3x3(x.data(), batch, h, w, c, cols.data());
  serial::col2im3x3(g.data(), batch, h, w, c, dx.data());
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < g.size(); ++i) lhs += cols[i] * g[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * dx[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}
