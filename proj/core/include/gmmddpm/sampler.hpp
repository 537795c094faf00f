#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gmmddpm/sample_batch.hpp"
#include "gmmddpm/schedule.hpp"
#include "gmmddpm/score_oracle.hpp"
#include "gmmddpm/target.hpp"

namespace gmmddpm {

// X_t = sqrt(alpha_bar_t) X_0 + sqrt(1 - alpha_bar_t) W with X_0 from the target.
SampleBatch forward_sample(const TargetDistribution& target, const NoiseSchedule& sched, std::size_t t,
                           std::size_t n, std::uint64_t seed, unsigned threads = 1);
SampleBatch forward_sample(const TargetDistribution& target, double alpha_bar, double one_minus_alpha_bar,
                           std::size_t n, std::uint64_t seed, unsigned threads = 1);

struct SnapshotPolicy {
  std::vector<std::size_t> steps;  // which Y_t to keep
  std::size_t chains = 0;          // record only the first `chains` chains; 0 keeps all

  // {T, T/2, T/4, ..., 1}.
  static SnapshotPolicy halving(std::size_t T, std::size_t chains = 0);
  static SnapshotPolicy none() { return {}; }
};

struct Snapshot {
  std::size_t t = 0;
  SampleBatch batch;
};

struct ReverseTrajectory {
  std::vector<Snapshot> snapshots;  // strictly decreasing t
  SampleBatch output;               // Y_1
};

// Y_T ~ N(0, I_d);  Y_{t-1} = (Y_t + (1 - alpha_t) s_t(Y_t)) / sqrt(alpha_t) + sqrt(1 - alpha_t) Z_t
// for t = T..2, returning Y_1. Chain i draws its initial point from stream
// (seed, init, i) and Z_t from stream (seed, step, i, t), so the result does not
// depend on the number of worker threads.
ReverseTrajectory ddpm_sample(const ScoreOracle& oracle, const NoiseSchedule& sched, std::size_t d, std::size_t n,
                              std::uint64_t seed, const SnapshotPolicy& record = SnapshotPolicy::none(),
                              unsigned threads = 1);

struct GaussianMoments {
  std::size_t t = 0;
  std::vector<double> mean;
  double variance = 1.0;
};

// Exact per-step law of Y_t for a single-Gaussian target N(mu, I) under the
// exact score: m_T = 0, v_T = 1, m_{t-1} = sqrt(alpha_t) m_t + (1 - alpha_t) sqrt(alpha_bar_{t-1}) mu,
// v_{t-1} = alpha_t v_t + (1 - alpha_t). Entries ordered t = T..1.
std::vector<GaussianMoments> gaussian_moment_oracle(const std::vector<double>& mu, const NoiseSchedule& sched);

}  // namespace gmmddpm
