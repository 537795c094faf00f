#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/schedule.hpp"
#include "gmmddpm/target.hpp"

namespace gmmddpm {

class ExactScoreOracle;

// A score estimate s_t(x). Implementations are immutable and must be safe to
// evaluate concurrently.
class ScoreOracle {
 public:
  virtual ~ScoreOracle() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t steps() const = 0;
  virtual std::string descriptor() const = 0;
  virtual void eval(std::size_t t, std::span<const double> x, std::span<double> out) const = 0;

  // The exact oracle this one is derived from, if any.
  virtual const ExactScoreOracle* exact_base() const { return nullptr; }

  std::vector<double> operator()(std::size_t t, std::span<const double> x) const {
    std::vector<double> out(dim());
    eval(t, x, out);
    return out;
  }
};

using OraclePtr = std::shared_ptr<const ScoreOracle>;

// s*_t(x) = score of the diffused marginal at alpha_bar_t.
class ExactScoreOracle final : public ScoreOracle {
 public:
  ExactScoreOracle(GaussianMixture gmm, NoiseSchedule sched);

  std::size_t dim() const override { return gmm_.dim(); }
  std::size_t steps() const override { return sched_.steps(); }
  std::string descriptor() const override;
  void eval(std::size_t t, std::span<const double> x, std::span<double> out) const override;
  const ExactScoreOracle* exact_base() const override { return this; }

  const GaussianMixture& gmm() const noexcept { return gmm_; }
  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const GaussianMixture& marginal(std::size_t t) const { return marginals_.at(t - 1); }

 private:
  GaussianMixture gmm_;
  NoiseSchedule sched_;
  std::vector<GaussianMixture> marginals_;
};

std::shared_ptr<const ExactScoreOracle> exact_oracle(const GaussianMixture& gmm, const NoiseSchedule& sched);

inline constexpr double kDefaultClip = 4.0;

// C_clip sqrt(d log(dT) / (1 - alpha_bar_t)).
double clip_threshold(const NoiseSchedule& sched, std::size_t d, std::size_t t, double c_clip);

// Returns inner(t, x) when its norm is within the threshold, else the zero vector.
OraclePtr clip_oracle(OraclePtr inner, const NoiseSchedule& sched, std::size_t d, double c_clip = kDefaultClip);

enum class PerturbModel { kGaussianField, kMeanJitter };

std::string_view to_string(PerturbModel model);
PerturbModel parse_perturb_model(std::string_view name);

inline constexpr std::size_t kFieldFeatures = 64;

// gaussian-field: inner + amplitude * f(x), f a fixed random-Fourier-feature
// field with unit RMS under the forward marginals.
// mean-jitter: exact score of the mixture whose means are shifted by
// i.i.d. N(0, amplitude^2 I) offsets (requires an exact base oracle).
OraclePtr perturb_oracle(OraclePtr inner, PerturbModel model, double amplitude, std::uint64_t seed);

struct StepError {
  double value = 0.0;     // mean of |s_t - s*_t|^2
  double std_error = 0.0;
};

struct ScoreErrorReport {
  std::vector<StepError> per_t;  // t = 1..T
  double epsilon_score = 0.0;    // sqrt(mean_t per_t)
  double epsilon_score_gmm = 0.0;  // sqrt((1/T) sum_{t>=2} (1 - alpha_bar_t) per_t)
  // Same aggregate measured under the (contaminated) target's own forward marginals.
  std::optional<double> epsilon_score_target;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string oracle;
};

ScoreErrorReport measure_score_error(const ScoreOracle& candidate, const GaussianMixture& gmm,
                                     const NoiseSchedule& sched, std::size_t n, std::uint64_t seed,
                                     unsigned threads = 1);
ScoreErrorReport measure_score_error(const ScoreOracle& candidate, const TargetDistribution& target,
                                     const NoiseSchedule& sched, std::size_t n, std::uint64_t seed,
                                     unsigned threads = 1);

nlohmann::json to_json(const ScoreErrorReport& report);

}  // namespace gmmddpm
