#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "padst/optim.hpp"

using namespace padst;

TEST(Adam, FirstStepsMatchHandComputation) {
  AdamConfig cfg{0.1, 0.9, 0.98, 1e-9};
  std::vector<double> w{1.0, -2.0};
  AdamState<double> st;
  const std::vector<double> g1{0.5, -1.0}, g2{0.25, 3.0};

  adam_step<double>(w, g1, st, cfg);
  // After one step the update is lr * sign(g) up to eps.
  EXPECT_NEAR(w[0], 0.9, 1e-8);
  EXPECT_NEAR(w[1], -1.9, 1e-8);

  const std::vector<double> start = w;
  adam_step<double>(w, g2, st, cfg);
  for (int i = 0; i < 2; ++i) {
    const double m = 0.9 * (0.1 * g1[i]) + 0.1 * g2[i];
    const double v = 0.98 * (0.02 * g1[i] * g1[i]) + 0.02 * g2[i] * g2[i];
    const double mhat = m / (1 - 0.81), vhat = v / (1 - 0.98 * 0.98);
    EXPECT_NEAR(w[i], start[i] - 0.1 * mhat / (std::sqrt(vhat) + 1e-9), 1e-12);
  }
  EXPECT_EQ(st.t, 2);
}

TEST(Adam, StateSizeMismatchThrows) {
  std::vector<double> w{1.0, 2.0};
  AdamState<double> st;
  adam_step<double>(w, std::vector<double>{1, 1}, st, {});
  std::vector<double> w3{1, 2, 3};
  EXPECT_THROW(adam_step<double>(w3, std::vector<double>{1, 1, 1}, st, {}), std::exception);
}

TEST(Adam, MinimisesQuadratic) {
  Parameter<double> p("w", Tensor<double>({3}, std::vector<double>{3, -4, 1}));
  Adam<double> opt({&p}, AdamConfig{0.05});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    for (std::size_t j = 0; j < 3; ++j) p.grad[j] = 2 * p.value[j];
    opt.step();
  }
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p.value[j], 0.0, 1e-2);
  EXPECT_EQ(opt.steps(), 2000);
}

TEST(ClipGradNorm, ScalesOnlyWhenAboveLimit) {
  Parameter<double> a("a", Tensor<double>({2}));
  Parameter<double> b("b", Tensor<double>({1}));
  a.grad[0] = 3;
  a.grad[1] = 0;
  b.grad[0] = 4;
  std::vector<Parameter<double>*> ps{&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm<double>(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-12);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-12);
  EXPECT_NEAR(clip_grad_norm<double>(ps, 10.0), 1.0, 1e-12);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-12);
}
