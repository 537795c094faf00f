#include "gmmddpm/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "gmmddpm/error.hpp"
#include "gmmddpm/parallel.hpp"
#include "gmmddpm/random.hpp"

namespace gmmddpm {

SampleBatch forward_sample(const TargetDistribution& target, const NoiseSchedule& sched, std::size_t t,
                           std::size_t n, std::uint64_t seed, unsigned threads) {
  if (t < 1 || t > sched.steps()) throw Error(ErrorCode::kStepOutOfRange, "step index outside 1..T");
  SampleBatch batch = forward_sample(target, sched.alpha_bar(t), sched.one_minus_alpha_bar(t), n, seed, threads);
  batch.meta = "forward-" + std::to_string(t);
  return batch;
}

SampleBatch forward_sample(const TargetDistribution& target, double alpha_bar, double one_minus_alpha_bar,
                           std::size_t n, std::uint64_t seed, unsigned threads) {
  if (n == 0) throw Error(ErrorCode::kZeroCount, "sample count must be at least 1");
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0) || !(one_minus_alpha_bar >= 0.0 && one_minus_alpha_bar < 1.0)) {
    throw Error(ErrorCode::kOutOfRangeAlphaBar, "alpha_bar must lie in (0, 1]");
  }
  const std::size_t d = target.dim();
  SampleBatch batch(d, n, seed, "forward");
  const double signal = std::sqrt(alpha_bar);
  const double noise = std::sqrt(one_minus_alpha_bar);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto row = batch.row(i);
      Rng origin = make_stream(seed, StreamTag::kTargetSample, i);
      target.draw(origin, row);
      if (noise == 0.0) continue;
      Rng rng = make_stream(seed, StreamTag::kForwardNoise, i);
      for (std::size_t j = 0; j < d; ++j) row[j] = signal * row[j] + noise * rng.normal();
    }
  });
  return batch;
}

SnapshotPolicy SnapshotPolicy::halving(std::size_t T, std::size_t chains) {
  SnapshotPolicy policy;
  policy.chains = chains;
  for (std::size_t t = T; t >= 1; t /= 2) {
    policy.steps.push_back(t);
    if (t == 1) break;
  }
  if (policy.steps.back() != 1) policy.steps.push_back(1);
  return policy;
}

ReverseTrajectory ddpm_sample(const ScoreOracle& oracle, const NoiseSchedule& sched, std::size_t d, std::size_t n,
                              std::uint64_t seed, const SnapshotPolicy& record, unsigned threads) {
  if (n == 0) throw Error(ErrorCode::kZeroCount, "chain count must be at least 1");
  if (oracle.dim() != d) throw Error(ErrorCode::kOracleDimensionMismatch, "oracle dimension differs from d");
  const std::size_t T = sched.steps();
  if (oracle.steps() < T) throw Error(ErrorCode::kOracleDimensionMismatch, "oracle covers fewer steps than schedule");

  std::vector<std::size_t> wanted = record.steps;
  std::sort(wanted.begin(), wanted.end(), std::greater<>());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  for (std::size_t t : wanted) {
    if (t < 1 || t > T) throw Error(ErrorCode::kStepOutOfRange, "snapshot step outside 1..T");
  }
  const std::size_t kept = record.chains == 0 ? n : std::min(n, record.chains);

  ReverseTrajectory traj;
  traj.output = SampleBatch(d, n, seed, "reverse-output");
  traj.snapshots.reserve(wanted.size());
  // slot_of[t] gives the snapshot index for step t, or npos.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::size_t> slot_of(T + 1, npos);
  for (std::size_t s = 0; s < wanted.size(); ++s) {
    slot_of[wanted[s]] = s;
    traj.snapshots.push_back({wanted[s], SampleBatch(d, kept, seed, "reverse-" + std::to_string(wanted[s]))});
  }

  std::vector<double> one_minus(T + 1), inv_root_alpha(T + 1), noise(T + 1);
  for (std::size_t t = 2; t <= T; ++t) {
    one_minus[t] = sched.one_minus_alpha(t);
    inv_root_alpha[t] = 1.0 / std::sqrt(sched.alpha(t));
    noise[t] = std::sqrt(one_minus[t]);
  }

  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> y(d), s(d);
    auto keep = [&](std::size_t chain, std::size_t t) {
      if (chain >= kept || slot_of[t] == npos) return;
      auto row = traj.snapshots[slot_of[t]].batch.row(chain);
      std::copy(y.begin(), y.end(), row.begin());
    };
    for (std::size_t i = begin; i < end; ++i) {
      Rng init = make_stream(seed, StreamTag::kReverseInit, i);
      for (double& v : y) v = init.normal();
      keep(i, T);
      for (std::size_t t = T; t >= 2; --t) {
        oracle.eval(t, y, s);
        Rng rng = make_stream(seed, StreamTag::kReverseStep, i, t);
        const double beta = one_minus[t];
        for (std::size_t j = 0; j < d; ++j) {
          y[j] = (y[j] + beta * s[j]) * inv_root_alpha[t] + noise[t] * rng.normal();
        }
        keep(i, t - 1);
      }
      auto out = traj.output.row(i);
      std::copy(y.begin(), y.end(), out.begin());
    }
  });
  return traj;
}

std::vector<GaussianMoments> gaussian_moment_oracle(const std::vector<double>& mu, const NoiseSchedule& sched) {
  const std::size_t T = sched.steps();
  std::vector<GaussianMoments> out;
  out.reserve(T);
  std::vector<double> m(mu.size(), 0.0);
  double v = 1.0;
  out.push_back({T, m, v});
  for (std::size_t t = T; t >= 2; --t) {
    const double a = sched.alpha(t);
    const double beta = sched.one_minus_alpha(t);
    const double pull = beta * std::sqrt(sched.alpha_bar(t - 1));
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = std::sqrt(a) * m[j] + pull * mu[j];
    v = a * v + beta;
    out.push_back({t - 1, m, v});
  }
  return out;
}

}  // namespace gmmddpm
