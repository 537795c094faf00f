#include "gmmddpm/schedule.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"

namespace gmmddpm {

namespace {

// Complements below this would be subnormal; they are held at the smallest
// normal double so every 1 - alpha_t stays strictly positive.
constexpr double kComplementFloor = std::numeric_limits<double>::min();

// Where alpha_bar_t / alpha_bar_{t-1} rounds to one the increment ratio equals
// the step bound exactly, so inequality checks allow a few ulps of slack.
constexpr double kRoundingSlack = 1.0 + 1e-12;

}  // namespace

double NoiseSchedule::nominal_step() const noexcept {
  const double T = static_cast<double>(steps());
  return c1_ * std::log(T) / T;
}

NoiseSchedule NoiseSchedule::from_one_minus_alpha(std::vector<double> one_minus_alpha, double c0, double c1) {
  if (one_minus_alpha.empty()) throw Error(ErrorCode::kTooFewSteps, "schedule needs at least one step");
  NoiseSchedule s;
  s.c0_ = c0;
  s.c1_ = c1;
  const std::size_t T = one_minus_alpha.size();
  s.alpha_.resize(T);
  s.alpha_bar_.resize(T);
  s.one_minus_alpha_bar_.resize(T);
  double log_bar = 0.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double beta = one_minus_alpha[i];
    if (!(beta >= 0.0 && beta < 1.0)) throw Error(ErrorCode::kBadConstants, "1 - alpha_t must lie in [0, 1)");
    s.alpha_[i] = 1.0 - beta;
    log_bar += std::log1p(-beta);
    s.alpha_bar_[i] = std::exp(log_bar);
    s.one_minus_alpha_bar_[i] = -std::expm1(log_bar);
  }
  s.one_minus_alpha_ = std::move(one_minus_alpha);
  return s;
}

NoiseSchedule build_schedule(std::size_t T, double c0, double c1) {
  if (T < 2) throw Error(ErrorCode::kTooFewSteps, "T must be at least 2");
  if (!(c0 > 0.0) || !(c1 > 0.0) || !(c1 / c0 > 4.0)) {
    throw Error(ErrorCode::kBadConstants, fmt::format("need c0 > 0, c1 > 0 and c1/c0 > 4 (got c0={}, c1={})", c0, c1));
  }
  NoiseSchedule s;
  s.c0_ = c0;
  s.c1_ = c1;
  s.alpha_.assign(T, 0.0);
  s.one_minus_alpha_.assign(T, 0.0);
  s.alpha_bar_.assign(T, 0.0);
  s.one_minus_alpha_bar_.assign(T, 0.0);

  const double Td = static_cast<double>(T);
  const double eta = c1 * std::log(Td) / Td;
  std::vector<double> step_used(T, eta);

  // Index i holds step t = i + 1.
  s.alpha_bar_[T - 1] = std::pow(Td, -c0);
  s.one_minus_alpha_bar_[T - 1] = -std::expm1(-c0 * std::log(Td));
  for (std::size_t t = T; t >= 2; --t) {
    const double ab = s.alpha_bar_[t - 1];
    const double om = s.one_minus_alpha_bar_[t - 1];
    const double e = eta * ab < 1.0 ? eta : 1.0;
    step_used[t - 1] = e;
    // alpha_bar grows by the factor 1 + e (1 - ab); its complement shrinks by 1 - e ab.
    // Both factors are evaluated without cancellation.
    const double shrink = e < 1.0 ? (1.0 - e) + e * om : (e == 1.0 ? om : 1.0 - e * ab);
    double next_ab = std::min(1.0, ab * (1.0 + e * om));
    double next_om = std::max(kComplementFloor, om * shrink);
    // Carry the smaller of the pair; the larger one is exact to an ulp by subtraction.
    // Otherwise alpha_bar freezes once 1 + e om rounds to one.
    if (next_ab > 0.5) {
      next_ab = 1.0 - next_om;
    } else {
      next_om = 1.0 - next_ab;
    }
    s.alpha_bar_[t - 2] = next_ab;
    s.one_minus_alpha_bar_[t - 2] = next_om;
  }
  for (std::size_t t = 2; t <= T; ++t) {
    const double prev = s.alpha_bar_[t - 2];
    const double cur = s.alpha_bar_[t - 1];
    // 1 - alpha_t = e ab_t (1 - ab_t) / ab_{t-1}.
    const double beta = std::max(kComplementFloor, step_used[t - 1] * cur * s.one_minus_alpha_bar_[t - 1] / prev);
    s.one_minus_alpha_[t - 1] = beta;
    s.alpha_[t - 1] = 1.0 - beta;
  }
  s.alpha_[0] = s.alpha_bar_[0];
  s.one_minus_alpha_[0] = s.one_minus_alpha_bar_[0];
  return s;
}

ValidationReport validate_schedule(const NoiseSchedule& sched) {
  ValidationReport report;
  const std::size_t T = sched.steps();
  const double Td = static_cast<double>(T);
  const double logT = std::log(Td);
  const double step_bound = sched.c1() * logT / Td;
  auto flag = [&](std::size_t t, std::string rule, double value, double bound) {
    report.ok = false;
    report.violations.push_back({t, std::move(rule), value, bound});
  };

  for (std::size_t t = 1; t <= T; ++t) {
    const double beta = sched.one_minus_alpha(t);
    if (!(beta > 0.0 && beta < 1.0)) flag(t, "alpha_t in (0,1)", beta, 1.0);
    const double om = sched.one_minus_alpha_bar(t);
    if (!(om > 0.0 && om < 1.0)) flag(t, "alpha_bar_t in (0,1)", om, 1.0);
    if (om <= kComplementFloor) report.saturated_steps.push_back(t);
  }
  // Consistency of alpha_bar with the running product, checked in log space.
  double log_bar = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    log_bar += std::log1p(-sched.one_minus_alpha(t));
    const double expected = std::exp(log_bar);
    const double got = sched.alpha_bar(t);
    if (std::abs(got - expected) > 1e-10 * expected) flag(t, "alpha_bar_t = prod alpha", got, expected);
  }
  for (std::size_t t = 2; t <= T; ++t) {
    if (!(sched.one_minus_alpha_bar(t) > sched.one_minus_alpha_bar(t - 1)) &&
        sched.one_minus_alpha_bar(t - 1) > kComplementFloor) {
      flag(t, "alpha_bar strictly decreasing", sched.alpha_bar(t), sched.alpha_bar(t - 1));
    }
  }

  for (std::size_t t = 2; t <= T; ++t) {
    const double beta = sched.one_minus_alpha(t);
    if (beta > step_bound * kRoundingSlack) flag(t, "1 - alpha_t <= c1 log T / T", beta, step_bound);
    if (sched.one_minus_alpha_bar(t) <= kComplementFloor) continue;
    const double ratio = beta / sched.one_minus_alpha_bar(t);
    report.max_increment_ratio = std::max(report.max_increment_ratio, ratio);
    if (ratio > step_bound * kRoundingSlack) flag(t, "(1 - alpha_t)/(1 - alpha_bar_t) <= c1 log T / T", ratio, step_bound);
  }
  report.max_increment_ratio_scaled = report.max_increment_ratio * Td / logT;

  const double first_bound = std::pow(Td, -sched.c1() / 4.0);
  if (sched.one_minus_alpha(1) > first_bound * kRoundingSlack) {
    flag(1, "1 - alpha_1 <= T^(-c1/4)", sched.one_minus_alpha(1), first_bound);
  }
  return report;
}

std::string schedule_csv(const NoiseSchedule& sched) {
  std::string out = "t,alpha,alpha_bar,one_minus_alpha\n";
  for (std::size_t t = 1; t <= sched.steps(); ++t) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g}\n", t, sched.alpha(t), sched.alpha_bar(t), sched.one_minus_alpha(t));
  }
  return out;
}

}  // namespace gmmddpm
