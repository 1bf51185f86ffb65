#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "padst/kernels.hpp"

using namespace padst::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1, 1);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST(Kernels, GemmMatchesNaiveDefinition) {
  const std::size_t m = 5, n = 4, k = 3;
  auto a = random_vec(m * k, 1);
  auto b = random_vec(k * n, 2);
  std::vector<float> c(m * n);
  serial::gemm<float>({m, n, k, Trans::no, Trans::no}, a.data(), b.data(), c.data(), false);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0;
      for (std::size_t p = 0; p < k; ++p) ref += static_cast<double>(a[i * k + p]) * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], ref, 1e-5);
    }
  }
}

TEST(Kernels, ParallelGemmIsBitwiseSerial) {
  // Large enough to cross the parallel threshold.
  const std::size_t m = 96, n = 80, k = 72;
  for (Trans ta : {Trans::no, Trans::yes}) {
    for (Trans tb : {Trans::no, Trans::yes}) {
      for (bool acc : {false, true}) {
        auto a = random_vec(m * k, 3);
        auto b = random_vec(k * n, 4);
        auto c1 = random_vec(m * n, 5);
        auto c2 = c1;
        GemmShape s{m, n, k, ta, tb};
        serial::gemm<float>(s, a.data(), b.data(), c1.data(), acc);
        parallel::gemm<float>(s, a.data(), b.data(), c2.data(), acc);
        EXPECT_EQ(c1, c2);
      }
    }
  }
}

TEST(Kernels, ParallelAttentionIsBitwiseSerial) {
  AttentionDims d{4, 24, 24, 2, 32, true};
  const std::size_t rows = d.batch * d.query_len, width = d.heads * d.head_dim;
  auto q = random_vec(rows * width, 6);
  auto k = random_vec(rows * width, 7);
  auto v = random_vec(rows * width, 8);
  std::vector<int> lengths{24, 10, 1, 17};
  const std::size_t np = d.batch * d.heads * d.query_len * d.key_len;
  std::vector<float> p1(np), p2(np), o1(rows * width), o2(rows * width);
  serial::attention_forward<float>(d, lengths, q.data(), k.data(), v.data(), p1.data(), o1.data());
  parallel::attention_forward<float>(d, lengths, q.data(), k.data(), v.data(), p2.data(), o2.data());
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(o1, o2);

  auto dout = random_vec(rows * width, 9);
  std::vector<float> dq1(q.size()), dk1(k.size()), dv1(v.size());
  std::vector<float> dq2(q.size()), dk2(k.size()), dv2(v.size());
  serial::attention_backward<float>(d, q.data(), k.data(), v.data(), p1.data(), dout.data(),
                                    dq1.data(), dk1.data(), dv1.data());
  parallel::attention_backward<float>(d, q.data(), k.data(), v.data(), p1.data(), dout.data(),
                                      dq2.data(), dk2.data(), dv2.data());
  EXPECT_EQ(dq1, dq2);
  EXPECT_EQ(dk1, dk2);
  EXPECT_EQ(dv1, dv2);
}

TEST(Kernels, AttentionRespectsMasks) {
  AttentionDims d{1, 3, 3, 1, 2, true};
  auto q = random_vec(6, 10);
  auto k = random_vec(6, 11);
  auto v = random_vec(6, 12);
  std::vector<int> lengths{2};
  std::vector<float> p(9), o(6);
  serial::attention_forward<float>(d, lengths, q.data(), k.data(), v.data(), p.data(), o.data());
  EXPECT_FLOAT_EQ(p[0], 1.0f);  // query 0 sees key 0 only
  EXPECT_EQ(p[1], 0.0f);
  EXPECT_EQ(p[2], 0.0f);
  EXPECT_NEAR(p[3] + p[4], 1.0f, 1e-6);
  EXPECT_EQ(p[5], 0.0f);
  EXPECT_EQ(p[8], 0.0f);  // key 2 is past the length
}

TEST(Kernels, SoftmaxRowsSumToOne) {
  auto x = random_vec(4 * 7, 13);
  std::vector<float> y1(x.size()), y2(x.size());
  serial::softmax_rows<float>(4, 7, x.data(), y1.data());
  parallel::softmax_rows<float>(4, 7, x.data(), y2.data());
  EXPECT_EQ(y1, y2);
  for (std::size_t r = 0; r < 4; ++r) {
    float s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += y1[r * 7 + c];
    EXPECT_NEAR(s, 1.0f, 1e-6);
  }
}
