#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/schedule.hpp"

namespace gmmddpm {

inline constexpr double kDefaultProbeC1 = 8.0;
inline constexpr double kDefaultProbeC2 = 8.0;

// zeta_k(x) for k = 1..K at step t:
//   (1 - a^2)/(2 a^2) (|x - m_k|^2 - sum_i pi_i |x - m_i|^2)
//   + (1 - a)/a^2 s*(x)^T sum_i pi_i (m_i - m_k),      m_k = sqrt(alpha_bar_t) mu_k.
std::vector<double> zeta(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                         std::span<const double> x);

struct EventDiagnostics {
  double trace_value = 0.0;
  std::vector<double> zeta_values;
  double jensen_sum = 0.0;  // sum_k pi_k exp(-zeta_k)
  double trace_limit = 0.0;   // C1 log(KT)
  double jensen_limit = 0.0;  // exp(C2 (1 - alpha_t)^2 log^2(KT))
  bool trace_ok = false;
  bool jensen_ok = false;
  bool in_event = false;
  double c1 = 0.0;
  double c2 = 0.0;
};

// Membership of x in the typical set at step t.
EventDiagnostics event_membership(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                                  std::span<const double> x, double c1 = kDefaultProbeC1,
                                  double c2 = kDefaultProbeC2);

struct ProportionEstimate {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t count = 0;
  std::size_t n = 0;
};

// Wilson score interval at the given two-sided z.
ProportionEstimate wilson_interval(std::size_t count, std::size_t n, double z = 1.959963984540054);

// Monte Carlo P{X_t ∉ E_t} for X_t from the diffused mixture.
ProportionEstimate typical_set_probability(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                                           std::size_t n, double c1, double c2, std::uint64_t seed,
                                           unsigned threads = 1);

struct TraceQuantiles {
  std::vector<double> levels;     // 0.5, 0.9, 0.99, 0.999
  std::vector<double> quantiles;
  double ratio_to_log_kt = 0.0;   // q_0.999 / log(KT)
};

TraceQuantiles trace_quantiles(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t, std::size_t n,
                               std::uint64_t seed, unsigned threads = 1);

// Fraction of forward samples whose exact score norm exceeds the clip threshold.
ProportionEstimate tweedie_bound_check(const GaussianMixture& gmm, const NoiseSchedule& sched, std::size_t t,
                                       std::size_t n, double c_clip, std::uint64_t seed, unsigned threads = 1);

struct ProbeRow {
  std::string probe;
  std::size_t t = 0;
  std::size_t K = 0;
  std::size_t d = 0;
  std::size_t T = 0;
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  nlohmann::json thresholds;
};

nlohmann::json to_json(const ProbeRow& row);

}  // namespace gmmddpm
