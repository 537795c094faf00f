#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/schedule.hpp"

namespace {

using namespace gmmddpm;

TEST(BuildSchedule, TerminalAlphaBar) {
  const auto s = build_schedule(100, 2.0, 10.0);
  EXPECT_NEAR(s.alpha_bar(100), 1e-4, 1e-18);
  EXPECT_EQ(s.steps(), 100u);
}

TEST(BuildSchedule, TwoStepsByHand) {
  // Values from tests/oracles/frozen_values.py.
  const auto s = build_schedule(2, 2.0, 10.0);
  EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.25);
  EXPECT_NEAR(s.alpha_bar(1), 0.89982548177494872758, 1e-15);
  EXPECT_NEAR(s.alpha(2), 0.27783165187416460248, 1e-15);
  EXPECT_NEAR(s.one_minus_alpha(1), 0.10017451822505127242, 1e-15);
}

TEST(BuildSchedule, RangeAndMonotonicity) {
  for (std::size_t T : {2u, 3u, 8u, 16u, 33u, 64u, 100u, 256u, 1024u, 4096u}) {
    const auto s = build_schedule(T);
    for (std::size_t t = 1; t <= T; ++t) {
      ASSERT_GT(s.alpha(t), 0.0) << "T=" << T << " t=" << t;
      // alpha_1 may round to one; its stored complement must not.
      ASSERT_GT(s.one_minus_alpha(t), 0.0) << "T=" << T << " t=" << t;
      ASSERT_LE(s.alpha(t), 1.0);
      ASSERT_GT(s.alpha_bar(t), 0.0);
      ASSERT_LE(s.alpha_bar(t), 1.0);
      if (t >= 2) {
        ASSERT_LE(s.alpha_bar(t), s.alpha_bar(t - 1)) << "T=" << T << " t=" << t;
        // Complements that underflowed sit at the smallest normal double.
        if (s.one_minus_alpha_bar(t - 1) > std::numeric_limits<double>::min()) {
          ASSERT_GT(s.one_minus_alpha_bar(t), s.one_minus_alpha_bar(t - 1)) << "T=" << T << " t=" << t;
        }
      }
    }
  }
}

TEST(BuildSchedule, ComplementMatchesAlphaBar) {
  const auto s = build_schedule(512);
  for (std::size_t t = 1; t <= 512; ++t) {
    EXPECT_NEAR(s.alpha_bar(t) + s.one_minus_alpha_bar(t), 1.0, 1e-15);
  }
}

TEST(BuildSchedule, RejectsBadConstants) {
  EXPECT_THROW(build_schedule(10, 2.0, 8.0), Error);
  EXPECT_THROW(build_schedule(10, 3.0, 9.0), Error);
  EXPECT_THROW(build_schedule(10, 0.0, 10.0), Error);
  EXPECT_THROW(build_schedule(10, 2.0, -1.0), Error);
  try {
    build_schedule(1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewSteps);
  }
}

TEST(ValidateSchedule, StepBoundsHold) {
  for (std::size_t T : {16u, 64u, 128u, 256u, 1024u}) {
    const auto r = validate_schedule(build_schedule(T));
    EXPECT_TRUE(r.ok) << "T=" << T << (r.violations.empty() ? "" : " " + r.violations.front().rule);
    EXPECT_TRUE(r.violations.empty());
  }
}

TEST(ValidateSchedule, TwoStepFirstStepBound) {
  const auto s = build_schedule(2);
  const auto r = validate_schedule(s);
  EXPECT_TRUE(r.ok);
  EXPECT_LE(s.one_minus_alpha(1), 0.1767766952966368811);
}

TEST(ValidateSchedule, FlagsTamperedStep) {
  const auto s = build_schedule(128);
  std::vector<double> beta(128);
  for (std::size_t t = 1; t <= 128; ++t) beta[t - 1] = s.one_minus_alpha(t);
  beta[1] = 0.9;  // alpha_2 lowered to 0.1
  const auto tampered = NoiseSchedule::from_one_minus_alpha(beta, 2.0, 10.0);
  const auto r = validate_schedule(tampered);
  EXPECT_FALSE(r.ok);
  bool flagged = false;
  for (const auto& v : r.violations) flagged = flagged || v.t == 2;
  EXPECT_TRUE(flagged);
}

TEST(ScheduleCsv, HasHeaderAndRows) {
  const auto csv = schedule_csv(build_schedule(4));
  EXPECT_EQ(csv.rfind("t,alpha,alpha_bar,one_minus_alpha\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

}  // namespace
