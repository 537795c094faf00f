#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gmmddpm {

inline constexpr double kDefaultC0 = 2.0;
inline constexpr double kDefaultC1 = 10.0;

// Learning-rate schedule alpha_1..alpha_T with cumulative products
// alpha_bar_t. Both quantities and their complements are stored: for large T
// alpha_bar_1 is within 1e-20 of one and 1 - alpha_bar_t would round to zero
// if it were recovered from alpha_bar_t. Steps are 1-based.
class NoiseSchedule {
 public:
  // Generic schedule from 1 - alpha_t, t = 1..T (used for tampered or hand-made schedules).
  static NoiseSchedule from_one_minus_alpha(std::vector<double> one_minus_alpha, double c0, double c1);

  std::size_t steps() const noexcept { return alpha_.size(); }
  double c0() const noexcept { return c0_; }
  double c1() const noexcept { return c1_; }

  double alpha(std::size_t t) const { return alpha_.at(t - 1); }
  double one_minus_alpha(std::size_t t) const { return one_minus_alpha_.at(t - 1); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t - 1); }
  double one_minus_alpha_bar(std::size_t t) const { return one_minus_alpha_bar_.at(t - 1); }

  // Step size c1 log T / T of the recursion.
  double nominal_step() const noexcept;

 private:
  friend NoiseSchedule build_schedule(std::size_t, double, double);
  NoiseSchedule() = default;

  double c0_ = kDefaultC0;
  double c1_ = kDefaultC1;
  std::vector<double> alpha_;
  std::vector<double> one_minus_alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> one_minus_alpha_bar_;
};

// alpha_bar_T = T^-c0 and
//   alpha_bar_{t-1} = alpha_bar_t + c1 (log T / T) alpha_bar_t (1 - alpha_bar_t),  t = T..2.
// When c1 log T / T * alpha_bar_t >= 1 the update would leave (0, 1); that step
// uses a unit step size instead, which squares 1 - alpha_bar.
NoiseSchedule build_schedule(std::size_t T, double c0 = kDefaultC0, double c1 = kDefaultC1);

struct ScheduleViolation {
  std::size_t t = 0;
  std::string rule;
  double value = 0.0;
  double bound = 0.0;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ScheduleViolation> violations;
  // max_t (1 - alpha_t) / (1 - alpha_bar_t) over t >= 2, and that value times T / log T.
  double max_increment_ratio = 0.0;
  double max_increment_ratio_scaled = 0.0;
  // Steps that hit the unit-step fallback or whose complement underflowed to the floor.
  std::vector<std::size_t> saturated_steps;
};

// Checks 1 - alpha_t <= c1 log T / T (t >= 2), 1 - alpha_1 <= T^(-c1/4), and the
// structural invariants (range, monotonicity, product consistency).
ValidationReport validate_schedule(const NoiseSchedule& sched);

// CSV with columns t, alpha, alpha_bar, one_minus_alpha.
std::string schedule_csv(const NoiseSchedule& sched);

}  // namespace gmmddpm
