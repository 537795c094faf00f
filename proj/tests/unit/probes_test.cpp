#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/probes.hpp"
#include "gmmddpm/random.hpp"
#include "gmmddpm/schedule.hpp"

namespace {

using namespace gmmddpm;

GaussianMixture three_component() {
  return GaussianMixture({0.2, 0.45, 0.35}, {{2.0, 0.5}, {-1.5, 1.0}, {0.3, -2.5}});
}

// Zeta transcribed independently in long double from the definition.
std::vector<long double> zeta_reference(const GaussianMixture& g, const NoiseSchedule& s, std::size_t t,
                                        const std::vector<double>& x) {
  const std::size_t K = g.components();
  const long double ab = s.alpha_bar(t);
  const long double a = s.alpha(t);
  // 1 - a from the stored complement: a itself is rounded near one.
  const long double om = s.one_minus_alpha(t);
  std::vector<long double> logit(K), q(K), pi(K);
  long double mx = -INFINITY;
  for (std::size_t k = 0; k < K; ++k) {
    q[k] = 0.0L;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const long double diff = x[j] - std::sqrt(ab) * g.mean(k)[j];
      q[k] += diff * diff;
    }
    logit[k] = std::log(static_cast<long double>(g.weights()[k])) - 0.5L * q[k];
    mx = std::max(mx, logit[k]);
  }
  long double z = 0.0L;
  for (std::size_t k = 0; k < K; ++k) z += std::exp(logit[k] - mx);
  for (std::size_t k = 0; k < K; ++k) pi[k] = std::exp(logit[k] - mx) / z;
  std::vector<long double> score(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    score[j] = -x[j];
    for (std::size_t k = 0; k < K; ++k) score[j] += pi[k] * std::sqrt(ab) * g.mean(k)[j];
  }
  long double qbar = 0.0L;
  for (std::size_t k = 0; k < K; ++k) qbar += pi[k] * q[k];
  std::vector<long double> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    long double inner = 0.0L;
    for (std::size_t j = 0; j < x.size(); ++j) {
      long double shift = 0.0L;
      for (std::size_t i = 0; i < K; ++i) shift += pi[i] * std::sqrt(ab) * (g.mean(i)[j] - g.mean(k)[j]);
      inner += score[j] * shift;
    }
    out[k] = om * (1.0L + a) / (2.0L * a * a) * (q[k] - qbar) + om / (a * a) * inner;
  }
  return out;
}

TEST(Zeta, SingleComponentIsZero) {
  GaussianMixture g({1.0}, {{1.0, 2.0}});
  const auto s = build_schedule(32);
  for (std::size_t t : {1u, 10u, 32u}) EXPECT_EQ(zeta(g, s, t, std::vector<double>{0.4, -3.0})[0], 0.0);
}

TEST(Zeta, MatchesIndependentTranscription) {
  const auto g = three_component();
  const auto s = build_schedule(64);
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const std::size_t t = 2 + static_cast<std::size_t>(rng.uniform() * 63);
    std::vector<double> x{2 * rng.normal(), 2 * rng.normal()};
    const auto got = zeta(g, s, t, x);
    const auto ref = zeta_reference(g, s, t, x);
    for (std::size_t k = 0; k < 3; ++k) {
      const double r = static_cast<double>(ref[k]);
      EXPECT_NEAR(got[k], r, 1e-10 * std::max(std::abs(r), 1e-6)) << "t=" << t << " k=" << k;
    }
  }
}

TEST(Zeta, WeightedSumZeroAndJensen) {
  const auto g = three_component();
  const auto s = build_schedule(128);
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const std::size_t t = 1 + static_cast<std::size_t>(rng.uniform() * 128);
    std::vector<double> x{3 * rng.normal(), 3 * rng.normal()};
    const auto z = zeta(g, s, t, x);
    const auto pi = g.diffused(s.alpha_bar(t)).posterior_weights(x).values;
    double weighted = 0.0;
    for (std::size_t k = 0; k < 3; ++k) weighted += pi[k] * z[k];
    ASSERT_NEAR(weighted, 0.0, 1e-9);
    ASSERT_GE(event_membership(g, s, t, x).jensen_sum, 1.0 - 1e-9);
  }
}

TEST(Zeta, Errors) {
  const auto g = three_component();
  const auto s = build_schedule(16);
  EXPECT_THROW(zeta(g, s, 0, std::vector<double>{0, 0}), Error);
  EXPECT_THROW(zeta(g, s, 17, std::vector<double>{0, 0}), Error);
  EXPECT_THROW(zeta(g, s, 3, std::vector<double>{0, 0, 0}), Error);
}

TEST(EventMembership, SingleComponentAlwaysInEvent) {
  GaussianMixture g({1.0}, {{3.0}});
  const auto s = build_schedule(32);
  const auto e = event_membership(g, s, 5, std::vector<double>{100.0});
  EXPECT_TRUE(e.in_event);
  EXPECT_EQ(e.trace_value, 0.0);
  EXPECT_DOUBLE_EQ(e.jensen_sum, 1.0);
}

TEST(EventMembership, TraceConditionFailsWithTinyC1) {
  // Midway between two well-separated means the posterior is split evenly,
  // so the trace is |m1 - m2|^2 / 4, far above 0.01 log(KT).
  GaussianMixture g({0.5, 0.5}, {{-3.0}, {3.0}});
  const auto s = build_schedule(64);
  const auto e = event_membership(g, s, 1, std::vector<double>{0.0}, 0.01, 8.0);
  EXPECT_GT(e.trace_value, 0.01 * std::log(128.0));
  EXPECT_FALSE(e.trace_ok);
  EXPECT_FALSE(e.in_event);
}

TEST(WilsonInterval, ContainsEstimate) {
  const auto p = wilson_interval(30, 1000);
  EXPECT_DOUBLE_EQ(p.estimate, 0.03);
  EXPECT_LT(p.ci_low, 0.03);
  EXPECT_GT(p.ci_high, 0.03);
  const auto zero = wilson_interval(0, 1000);
  EXPECT_EQ(zero.ci_low, 0.0);
  EXPECT_GT(zero.ci_high, 0.0);
}

TEST(TypicalSet, SingleComponentNeverViolates) {
  GaussianMixture g({1.0}, {{0.0, 0.0}});
  const auto s = build_schedule(32);
  EXPECT_EQ(typical_set_probability(g, s, 16, 2000, 8, 8, 1).estimate, 0.0);
}

TEST(TypicalSet, SeparatedMixtureRarelyViolates) {
  std::vector<std::vector<double>> means(4, std::vector<double>(8, 0.0));
  means[0][0] = 4;
  means[1][1] = 4;
  means[2][2] = 4;
  means[3][0] = -4;
  GaussianMixture g({0.25, 0.25, 0.25, 0.25}, means);
  const auto s = build_schedule(128);
  for (std::size_t t : {1u, 16u, 64u, 128u}) {
    EXPECT_LT(typical_set_probability(g, s, t, 20000, 8, 8, 5).estimate, 1e-3) << "t=" << t;
  }
}

TEST(TypicalSet, MonotoneInC1) {
  GaussianMixture g({0.5, 0.5}, {{-2.0, 0.0}, {2.0, 0.0}});
  const auto s = build_schedule(64);
  double prev = 2.0;
  for (double c1 : {0.1, 1.0, 8.0}) {
    const double p = typical_set_probability(g, s, 4, 5000, c1, 8, 2).estimate;
    EXPECT_LE(p, prev);
    prev = p;
  }
  EXPECT_THROW(typical_set_probability(g, s, 4, 999, 8, 8, 2), Error);
}

TEST(TraceQuantiles, SingleComponentAllZero) {
  GaussianMixture g({1.0}, {{0.0}});
  const auto q = trace_quantiles(g, build_schedule(16), 8, 1000, 1);
  for (double v : q.quantiles) EXPECT_EQ(v, 0.0);
}

TEST(TraceQuantiles, OrderedAndDimensionFree) {
  for (std::size_t d : {2u, 16u, 128u}) {
    std::vector<std::vector<double>> means(8, std::vector<double>(d, 0.0));
    for (std::size_t k = 0; k < 8; ++k) {
      means[k][0] = 3.0 * std::cos(2 * M_PI * k / 8);
      means[k][1] = 3.0 * std::sin(2 * M_PI * k / 8);
    }
    GaussianMixture g(std::vector<double>(8, 0.125), means);
    const auto s = build_schedule(64);
    const auto q = trace_quantiles(g, s, 1, 4000, 7);
    for (std::size_t i = 1; i < q.quantiles.size(); ++i) EXPECT_LE(q.quantiles[i - 1], q.quantiles[i]);
    EXPECT_LE(q.ratio_to_log_kt, 10.0) << "d=" << d;
  }
}

TEST(TweedieBound, ZeroForStandardNormal) {
  GaussianMixture g({1.0}, {{0.0, 0.0}});
  EXPECT_EQ(tweedie_bound_check(g, build_schedule(16), 8, 2000, 100.0, 1).estimate, 0.0);
}

TEST(TweedieBound, RareForRandomMixtureAndMonotone) {
  GaussianMixture g({0.1, 0.2, 0.3, 0.4}, {{1, -2, 0.5, 0}, {-1, 1, 2, 0.3}, {2, 2, -1, -1}, {0, -1, -2, 1}});
  const auto s = build_schedule(64);
  double prev = 2.0;
  for (double c : {0.05, 0.2, 1.0, 4.0}) {
    const double p = tweedie_bound_check(g, s, 1, 10000, c, 4).estimate;
    EXPECT_LE(p, prev);
    prev = p;
  }
  EXPECT_LT(prev, 1e-3);
}

}  // namespace
