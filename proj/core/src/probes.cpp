#include "gmmddpm/probes.hpp"

#include <algorithm>
#include <cmath>

#include "gmmddpm/error.hpp"
#include "gmmddpm/parallel.hpp"
#include "gmmddpm/random.hpp"
#include "gmmddpm/score_oracle.hpp"

namespace gmmddpm {

namespace {

void check_step(const NoiseSchedule& sched, std::size_t t) {
  if (t < 1 || t > sched.steps()) throw Error(ErrorCode::kStepOutOfRange, "step index outside 1..T");
}

double log_kt(const GaussianMixture& gmm, const NoiseSchedule& sched) {
  return std::log(static_cast<double>(gmm.components()) * static_cast<double>(sched.steps()));
}

// zeta on an already-diffused mixture.
std::vector<double> zeta_on_marginal(const GaussianMixture& marginal, double alpha, double one_minus_alpha,
                                     std::span<const double> x) {
  const std::size_t K = marginal.components();
  const std::size_t d = marginal.dim();
  const auto post = marginal.posterior_weights(x);
  const auto& pi = post.values;
  const auto s = marginal.score(x);

  std::vector<double> dist(K);
  std::vector<double> centre(d, 0.0);
  double avg_dist = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto m = marginal.mean(k);
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += (x[j] - m[j]) * (x[j] - m[j]);
    dist[k] = sq;
    avg_dist += pi[k] * sq;
    for (std::size_t j = 0; j < d; ++j) centre[j] += pi[k] * m[j];
  }
  const double a2 = alpha * alpha;
  // 1 - a^2 = (1 - a)(1 + a) keeps precision when a is within rounding of one.
  const double quad_coef = one_minus_alpha * (1.0 + alpha) / (2.0 * a2);
  const double lin_coef = one_minus_alpha / a2;
  std::vector<double> out(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto m = marginal.mean(k);
    double inner = 0.0;
    for (std::size_t j = 0; j < d; ++j) inner += s[j] * (centre[j] - m[j]);
    out[k] = quad_coef * (dist[k] - avg_dist) + lin_coef * inner;
  }
  return out;
}

// e^-u - 1 + u without cancellation.
double jensen_gap_term(double u) {
  if (std::abs(u) < 1e-2) {
    const double u2 = u * u;
    return u2 * (0.5 - u / 6.0 + u2 / 24.0 - u2 * u / 120.0);
  }
  return std::expm1(-u) + u;
}

EventDiagnostics membership_on_marginal(const GaussianMixture& marginal, double alpha, double one_minus_alpha,
                                        double lkt, std::span<const double> x, double c1, double c2) {
  EventDiagnostics diag;
  diag.c1 = c1;
  diag.c2 = c2;
  diag.trace_value = marginal.jacobian_trace(x);
  diag.zeta_values = zeta_on_marginal(marginal, alpha, one_minus_alpha, x);
  const auto post = marginal.posterior_weights(x);
  // sum_k pi_k zeta_k vanishes identically, so
  //   log sum_k pi_k exp(-zeta_k) = log1p(sum_k pi_k phi(zeta_k - zbar)),  phi(u) = e^-u - 1 + u.
  // Near alpha_t = 1 the limit is far below the rounding of a direct sum.
  double mass = 0.0;
  double zbar = 0.0;
  for (std::size_t k = 0; k < post.values.size(); ++k) {
    mass += post.values[k];
    zbar += post.values[k] * diag.zeta_values[k];
  }
  zbar /= mass;
  double excess = 0.0;
  for (std::size_t k = 0; k < post.values.size(); ++k) {
    if (post.values[k] == 0.0) continue;
    excess += post.values[k] * jensen_gap_term(diag.zeta_values[k] - zbar);
  }
  const double log_jensen = std::log1p(excess / mass);
  diag.jensen_sum = std::exp(log_jensen);
  diag.trace_limit = c1 * lkt;
  const double log_jensen_limit = c2 * one_minus_alpha * one_minus_alpha * lkt * lkt;
  diag.jensen_limit = std::exp(log_jensen_limit);
  diag.trace_ok = diag.trace_value <= diag.trace_limit;
  // Compared in log space so an overflowing limit stays meaningful.
  diag.jensen_ok = log_jensen <= log_jensen_limit;
  diag.in_event = diag.trace_ok && diag.jensen_ok;
  return diag;
}

}  // namespace

std::vector<double> zeta(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                         std::span<const double> x) {
  check_step(sched, t);
  if (x.size() != gmm.dim()) throw Error(ErrorCode::kDimensionMismatch, "point dimension does not match mixture");
  return zeta_on_marginal(gmm.diffused(sched.alpha_bar(t)), sched.alpha(t), sched.one_minus_alpha(t), x);
}

EventDiagnostics event_membership(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                                  std::span<const double> x, double c1, double c2) {
  check_step(sched, t);
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw Error(ErrorCode::kBadConstants, "C1 and C2 must be positive");
  if (x.size() != gmm.dim()) throw Error(ErrorCode::kDimensionMismatch, "point dimension does not match mixture");
  return membership_on_marginal(gmm.diffused(sched.alpha_bar(t)), sched.alpha(t), sched.one_minus_alpha(t),
                                log_kt(gmm, sched), x, c1, c2);
}

ProportionEstimate wilson_interval(std::size_t count, std::size_t n, double z) {
  ProportionEstimate p;
  p.count = count;
  p.n = n;
  if (n == 0) return p;
  const double nn = static_cast<double>(n);
  const double phat = static_cast<double>(count) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (phat + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
  p.estimate = phat;
  p.ci_low = count == 0 ? 0.0 : std::max(0.0, centre - half);
  p.ci_high = count == n ? 1.0 : std::min(1.0, centre + half);
  return p;
}

namespace {

// Draws n points from the diffused marginal at t and applies pred to each.
template <typename Pred>
std::vector<char> flag_forward_points(const GaussianMixture& marginal, std::size_t t, std::size_t n,
                                      std::uint64_t seed, unsigned threads, Pred&& pred) {
  std::vector<char> flags(n, 0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(marginal.dim());
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, StreamTag::kProbe, t, i);
      marginal.draw(rng, x);
      flags[i] = pred(std::span<const double>(x)) ? 1 : 0;
    }
  });
  return flags;
}

std::size_t count_flags(const std::vector<char>& flags) {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), char{1}));
}

}  // namespace

ProportionEstimate typical_set_probability(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                                           std::size_t n, double c1, double c2, std::uint64_t seed,
                                           unsigned threads) {
  check_step(sched, t);
  if (n < 1000) throw Error(ErrorCode::kTooFewSamples, "typical-set probe needs n >= 1000");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw Error(ErrorCode::kBadConstants, "C1 and C2 must be positive");
  const GaussianMixture marginal = gmm.diffused(sched.alpha_bar(t));
  const double alpha = sched.alpha(t);
  const double beta = sched.one_minus_alpha(t);
  const double lkt = log_kt(gmm, sched);
  const auto flags = flag_forward_points(marginal, t, n, seed, threads, [&](std::span<const double> x) {
    return !membership_on_marginal(marginal, alpha, beta, lkt, x, c1, c2).in_event;
  });
  return wilson_interval(count_flags(flags), n);
}

TraceQuantiles trace_quantiles(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t, std::size_t n,
                               std::uint64_t seed, unsigned threads) {
  check_step(sched, t);
  if (n < 1000) throw Error(ErrorCode::kTooFewSamples, "trace quantiles need n >= 1000");
  const GaussianMixture marginal = gmm.diffused(sched.alpha_bar(t));
  std::vector<double> values(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(marginal.dim());
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, StreamTag::kProbe, t, i);
      marginal.draw(rng, x);
      values[i] = marginal.jacobian_trace(x);
    }
  });
  std::sort(values.begin(), values.end());
  TraceQuantiles q;
  q.levels = {0.5, 0.9, 0.99, 0.999};
  for (double level : q.levels) {
    // Nearest-rank order statistic.
    const auto rank = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
    q.quantiles.push_back(values[std::clamp<std::size_t>(rank, 1, n) - 1]);
  }
  q.ratio_to_log_kt = q.quantiles.back() / log_kt(gmm, sched);
  return q;
}

ProportionEstimate tweedie_bound_check(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                                       std::size_t n, double c_clip, std::uint64_t seed, unsigned threads) {
  check_step(sched, t);
  if (n < 1000) throw Error(ErrorCode::kTooFewSamples, "Tweedie bound check needs n >= 1000");
  const GaussianMixture marginal = gmm.diffused(sched.alpha_bar(t));
  const double limit = clip_threshold(sched, gmm.dim(), t, c_clip);
  const auto flags = flag_forward_points(marginal, t, n, seed, threads, [&](std::span<const double> x) {
    const auto s = marginal.score(x);
    double sq = 0.0;
    for (double v : s) sq += v * v;
    return std::sqrt(sq) > limit;
  });
  return wilson_interval(count_flags(flags), n);
}

nlohmann::json to_json(const ProbeRow& row) {
  return {{"probe", row.probe}, {"t", row.t},           {"K", row.K},
          {"d", row.d},         {"T", row.T},           {"estimate", row.estimate},
          {"ci_low", row.ci_low}, {"ci_high", row.ci_high}, {"thresholds", row.thresholds}};
}

}  // namespace gmmddpm
