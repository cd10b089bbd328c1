#include <gtest/gtest.h>

#include <cmath>

#include "mambamil/errors.hpp"
#include "mambamil/ssm.hpp"
#include "test_util.hpp"

namespace mambamil {
namespace {

using testing::expect_gradients;
using testing::max_abs_diff;
using testing::random_tensor;
using testing::uniform_tensor;
using testing::values;
using testing::weighted_sum;

TEST(Discretize, ZeroStateMatrixUsesTheLimit) {
  const auto d = discretize_zoh({{0.0}, {3.0}, {1.0}, 1.0});
  EXPECT_EQ(d.a_bar[0], 1.0);
  EXPECT_EQ(d.b_bar[0], 3.0);
}

TEST(Discretize, ClosedFormExamples) {
  const auto d1 = discretize_zoh({{std::log(2.0)}, {1.0}, {1.0}, 1.0});
  EXPECT_NEAR(d1.a_bar[0], 2.0, 1e-15);
  EXPECT_NEAR(d1.b_bar[0], 1.4426950408889634, 1e-15);
  const auto d2 = discretize_zoh({{-1.0}, {2.0}, {1.0}, 0.5});
  EXPECT_NEAR(d2.a_bar[0], 0.6065306597126334, 1e-15);
  EXPECT_NEAR(d2.b_bar[0], 0.7869386805747332, 1e-15);
}

TEST(Discretize, LimitBranchIsContinuous) {
  // Either side of the switch the two formulas agree to roundoff.
  for (double a : {-2e-8, -0.9e-8, 0.9e-8, 2e-8}) {
    const auto d = discretize_zoh({{a}, {1.5}, {1.0}, 1.0});
    EXPECT_NEAR(d.b_bar[0], 1.5 * (1.0 + a / 2.0), 1e-14);
  }
}

TEST(Discretize, RejectsNonPositiveStep) {
  EXPECT_THROW(discretize_zoh({{-1.0}, {1.0}, {1.0}, 0.0}), ContractError);
}

TEST(LtiRecurrent, Examples) {
  const DiscreteLTI d{{0.5}, {1.0}};
  const std::vector<double> c{2.0};
  EXPECT_EQ(lti_recurrent(d, c, std::vector<double>{1, 0, 0}), (std::vector<double>{2, 1, 0.5}));
  EXPECT_EQ(lti_recurrent(d, c, std::vector<double>(5, 0.0)), std::vector<double>(5, 0.0));
  const DiscreteLTI d2{{0.3, -0.2}, {1.5, 2.0}};
  const std::vector<double> c2{0.5, -1.0};
  EXPECT_DOUBLE_EQ(lti_recurrent(d2, c2, std::vector<double>{1.7})[0], (0.5 * 1.5 - 1.0 * 2.0) * 1.7);
}

TEST(LtiKernel, Examples) {
  EXPECT_EQ(lti_kernel({{0.5}, {1.0}}, std::vector<double>{2.0}, 3), (std::vector<double>{2, 1, 0.5}));
  EXPECT_EQ(lti_kernel({{0.0}, {3.0}}, std::vector<double>{2.0}, 3), (std::vector<double>{6, 0, 0}));
  EXPECT_EQ(lti_kernel({{0.9, 0.1}, {1.0, 2.0}}, std::vector<double>{1.0, 1.0}, 1), (std::vector<double>{3.0}));
}

TEST(LtiConv, Examples) {
  const std::vector<double> k{2, 1, 0.5};
  EXPECT_EQ(lti_conv_apply(std::vector<double>{1, 0, 0}, k), (std::vector<double>{2, 1, 0.5}));
  EXPECT_EQ(lti_conv_apply(std::vector<double>{0, 1, 0}, k), (std::vector<double>{0, 2, 1}));
  EXPECT_THROW(lti_conv_apply(std::vector<double>{1, 2}, k), DimensionError);
}

TEST(LtiConv, MatchesRecurrenceOnRandomSystems) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(64);
    LTISystem sys;
    for (std::size_t i = 0; i < n; ++i) {
      sys.a.push_back(-rng.uniform(0.01, 2.0));
      sys.b.push_back(rng.normal());
      sys.c.push_back(rng.normal());
    }
    sys.delta = rng.uniform(0.01, 1.0);
    std::vector<double> x(m);
    for (auto& v : x) v = rng.normal();
    const auto d = discretize_zoh(sys);
    const auto y_rec = lti_recurrent(d, sys.c, x);
    const auto y_conv = lti_conv_apply(x, lti_kernel(d, sys.c, m));
    EXPECT_LT(max_abs_diff(y_rec, y_conv), 1e-10);
  }
}

TEST(AffineScan, Examples) {
  for (ScanMode mode : {ScanMode::kSequential, ScanMode::kParallel}) {
    EXPECT_EQ(affine_scan(std::vector<double>{1, 1, 1}, std::vector<double>{1, 1, 1}, mode),
              (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(affine_scan(std::vector<double>{0, 0, 0}, std::vector<double>{5, 6, 7}, mode),
              (std::vector<double>{5, 6, 7}));
    EXPECT_EQ(affine_scan(std::vector<double>{0.5, 0.5}, std::vector<double>{2, 2}, mode),
              (std::vector<double>{2, 3}));
  }
  EXPECT_THROW(affine_scan(std::vector<double>{1}, std::vector<double>{1, 2}, ScanMode::kSequential), DimensionError);
}

TEST(AffineScan, ParallelAgreesAndIsWorkerInvariant) {
  Rng rng(12);
  for (std::size_t len : {1u, 2u, 3u, 63u, 64u, 65u, 1000u, 100000u}) {
    std::vector<double> a(len), b(len);
    for (auto& v : a) v = rng.uniform();
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);
    const auto seq = affine_scan(a, b, ScanMode::kSequential);
    double scale = 0.0;
    for (double v : seq) scale = std::max(scale, std::abs(v));
    const auto ref = affine_scan(a, b, ScanMode::kParallel, {64, 1});
    EXPECT_LE(max_abs_diff(seq, ref), 1e-10 * std::max(scale, 1e-300)) << "length " << len;
    for (std::size_t w : {2u, 3u, 4u, 8u}) EXPECT_EQ(affine_scan(a, b, ScanMode::kParallel, {64, w}), ref);
  }
}

TEST(AffineScan, CombineIsAssociative) {
  // Any chunk size gives the same answer up to roundoff.
  Rng rng(13);
  std::vector<double> a(777), b(777);
  for (auto& v : a) v = rng.uniform();
  for (auto& v : b) v = rng.normal();
  const auto seq = affine_scan(a, b, ScanMode::kSequential);
  for (std::size_t chunk : {1u, 2u, 5u, 100u, 1000u})
    EXPECT_LT(max_abs_diff(seq, affine_scan(a, b, ScanMode::kParallel, {chunk, 2})), 1e-12);
}

struct ScanInputs {
  Tensor u, delta, a, bseq, cseq;
};

ScanInputs random_scan_inputs(Rng& rng, std::size_t bb, std::size_t m, std::size_t e, std::size_t n) {
  ScanInputs s;
  s.u = random_tensor({bb, m, e}, rng);
  s.delta = uniform_tensor({bb, m, e}, rng, 0.05, 1.0);
  s.a = uniform_tensor({e, n}, rng, -2.0, -0.05);
  s.bseq = random_tensor({bb, m, n}, rng);
  s.cseq = random_tensor({bb, m, n}, rng);
  return s;
}

TEST(SelectiveScan, SingleStepClosedForm) {
  Rng rng(14);
  const auto s = random_scan_inputs(rng, 2, 1, 3, 4);
  const Tensor y = selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq);
  for (std::size_t b = 0; b < 2; ++b) {
    double cb = 0.0;
    for (std::size_t n = 0; n < 4; ++n) cb += s.cseq[b * 4 + n] * s.bseq[b * 4 + n];
    for (std::size_t e = 0; e < 3; ++e) EXPECT_NEAR(y[b * 3 + e], s.delta[b * 3 + e] * s.u[b * 3 + e] * cb, 1e-15);
  }
}

TEST(SelectiveScan, ZeroInputGivesZeroOutput) {
  Rng rng(15);
  auto s = random_scan_inputs(rng, 1, 9, 3, 2);
  EXPECT_EQ(values(selective_scan(Tensor::zeros({1, 9, 3}), s.delta, s.a, s.bseq, s.cseq)),
            std::vector<double>(27, 0.0));
}

TEST(SelectiveScan, SkipTermAddsScaledInput) {
  Rng rng(16);
  auto s = random_scan_inputs(rng, 1, 5, 3, 2);
  const Tensor d = random_tensor({3}, rng);
  const Tensor y0 = selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq);
  const Tensor y1 = selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq, d);
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(y1[i] - y0[i], d[i % 3] * s.u[i], 1e-14);
}

TEST(SelectiveScan, ReducesToLtiForConstantParameters) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(40), e = 1 + rng.below(4), n = 1 + rng.below(6);
    const Tensor u = random_tensor({1, m, e}, rng);
    std::vector<double> dvals(e), bvals(n), cvals(n);
    for (auto& v : dvals) v = rng.uniform(0.01, 1.0);
    for (auto& v : bvals) v = rng.normal();
    for (auto& v : cvals) v = rng.normal();
    const Tensor a = uniform_tensor({e, n}, rng, -2.0, -0.01);
    std::vector<double> delta(m * e), bseq(m * n), cseq(m * n);
    for (std::size_t t = 0; t < m; ++t) {
      for (std::size_t j = 0; j < e; ++j) delta[t * e + j] = dvals[j];
      for (std::size_t j = 0; j < n; ++j) {
        bseq[t * n + j] = bvals[j];
        cseq[t * n + j] = cvals[j];
      }
    }
    const Tensor y = selective_scan(u, Tensor({1, m, e}, delta), a, Tensor({1, m, n}, bseq), Tensor({1, m, n}, cseq));
    for (std::size_t ch = 0; ch < e; ++ch) {
      DiscreteLTI d;
      for (std::size_t j = 0; j < n; ++j) {
        d.a_bar.push_back(std::exp(dvals[ch] * a[ch * n + j]));
        d.b_bar.push_back(dvals[ch] * bvals[j]);
      }
      std::vector<double> x(m);
      for (std::size_t t = 0; t < m; ++t) x[t] = u[t * e + ch];
      const auto ref = lti_recurrent(d, cvals, x);
      for (std::size_t t = 0; t < m; ++t) EXPECT_LT(std::abs(y[t * e + ch] - ref[t]), 1e-12);
    }
  }
}

TEST(SelectiveScan, LinearInTheDrive) {
  Rng rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = random_scan_inputs(rng, 2, 1 + rng.below(30), 3, 4);
    const Tensor u2 = random_tensor(s.u.shape(), rng);
    const double alpha = rng.normal(), beta = rng.normal();
    const Tensor mix = add(scale(s.u, alpha), scale(u2, beta));
    const Tensor lhs = selective_scan(mix, s.delta, s.a, s.bseq, s.cseq);
    const Tensor rhs = add(scale(selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq), alpha),
                           scale(selective_scan(u2, s.delta, s.a, s.bseq, s.cseq), beta));
    EXPECT_LT(max_abs_diff(lhs, rhs), 1e-10);
  }
}

TEST(SelectiveScan, IsCausal) {
  Rng rng(19);
  const std::size_t m = 20, e = 3;
  auto s = random_scan_inputs(rng, 1, m, e, 4);
  const Tensor y0 = selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq);
  for (std::size_t t : {0u, 7u, 19u}) {
    std::vector<double> u(s.u.data().begin(), s.u.data().end());
    u[t * e + 1] += 0.5;
    const Tensor y1 = selective_scan(Tensor(s.u.shape(), u), s.delta, s.a, s.bseq, s.cseq);
    for (std::size_t q = 0; q < m; ++q) {
      for (std::size_t c = 0; c < e; ++c) {
        if (q < t) {
          EXPECT_EQ(y1[q * e + c], y0[q * e + c]) << "position " << q << " saw the future";
        }
      }
    }
    EXPECT_NE(y1[t * e + 1], y0[t * e + 1]);
  }
}

TEST(SelectiveScan, StaysBoundedOverLongSequences) {
  const std::size_t m = 1000000;
  Rng rng(20);
  std::vector<double> u(m), delta(m), bseq(m), cseq(m, 1.0);
  for (std::size_t t = 0; t < m; ++t) {
    u[t] = rng.uniform(-1.0, 1.0);
    delta[t] = rng.uniform(0.001, 1.0);
    bseq[t] = 1.0;
  }
  const Tensor y = selective_scan(Tensor({1, m, 1}, u), Tensor({1, m, 1}, delta), Tensor({1, 1}, {-0.01}),
                                  Tensor({1, m, 1}, bseq), Tensor({1, m, 1}, cseq));
  // |h_t| <= sum of |delta * u| over the steps, and is bounded by the geometric
  // tail for a strictly decaying state.
  double bound = 0.0, worst = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    bound += std::abs(delta[t] * u[t]);
    ASSERT_TRUE(std::isfinite(y[t]));
    ASSERT_LE(std::abs(y[t]), bound + 1e-9);
    worst = std::max(worst, std::abs(y[t]));
  }
  EXPECT_LT(worst, 1.0 / (1.0 - std::exp(-0.01 * 0.001)) + 1.0);
}

TEST(SelectiveScan, RejectsNonPositiveStep) {
  Rng rng(21);
  auto s = random_scan_inputs(rng, 1, 3, 2, 2);
  std::vector<double> d(s.delta.data().begin(), s.delta.data().end());
  d[4] = 0.0;
  EXPECT_THROW(selective_scan(s.u, Tensor(s.delta.shape(), d), s.a, s.bseq, s.cseq), ContractError);
  EXPECT_THROW(selective_scan(s.u, s.delta, Tensor::zeros({3, 2}), s.bseq, s.cseq), DimensionError);
}

TEST(SelectiveScanBackward, SingleStepDriveGradient) {
  Tensor u({1, 1, 1}, {0.7}), delta({1, 1, 1}, {0.4}), a({1, 1}, {-1.3}), b({1, 1, 1}, {1.1}), c({1, 1, 1}, {-0.6});
  for (Tensor* t : {&u, &delta, &a, &b, &c}) t->set_requires_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    backward(sum(selective_scan(u, delta, a, b, c)), tape);
  }
  EXPECT_NEAR(u.grad()[0], 0.4 * 1.1 * -0.6, 1e-15);
  // exp(delta A) multiplies the zero initial state.
  EXPECT_EQ(a.has_grad() ? a.grad()[0] : 0.0, 0.0);
}

TEST(SelectiveScanBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng rng(200 + seed);
    const std::size_t bb = 1 + rng.below(2), m = 1 + rng.below(8), e = 1 + rng.below(3), n = 1 + rng.below(4);
    auto s = random_scan_inputs(rng, bb, m, e, n);
    Tensor d = random_tensor({e}, rng);
    expect_gradients([&] { return weighted_sum(selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq, d)); },
                     {{"u", s.u}, {"delta", s.delta}, {"a", s.a}, {"b", s.bseq}, {"c", s.cseq}, {"d", d}});
  }
  Rng rng(300);
  auto s = random_scan_inputs(rng, 1, 5, 2, 3);
  expect_gradients([&] { return weighted_sum(selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq)); },
                   {{"u", s.u}, {"delta", s.delta}, {"a", s.a}, {"b", s.bseq}, {"c", s.cseq}});
}

TEST(SelectiveScan, OrderSensitive) {
  Rng rng(22);
  auto s = random_scan_inputs(rng, 1, 12, 2, 3);
  std::vector<std::int64_t> rev;
  for (std::int64_t t = 11; t >= 0; --t) rev.push_back(t);
  auto perm = [&](const Tensor& t) { return gather(t, 1, rev); };
  const Tensor y = selective_scan(s.u, s.delta, s.a, s.bseq, s.cseq);
  const Tensor y_rev = perm(selective_scan(perm(s.u), perm(s.delta), s.a, perm(s.bseq), perm(s.cseq)));
  EXPECT_GT(max_abs_diff(y, y_rev), 1e-3);
}

}  // namespace
}  // namespace mambamil
