#include "gmmddpm/score_oracle.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/parallel.hpp"
#include "gmmddpm/random.hpp"

namespace gmmddpm {

ExactScoreOracle::ExactScoreOracle(GaussianMixture gmm, NoiseSchedule sched)
    : gmm_(std::move(gmm)), sched_(std::move(sched)) {
  marginals_.reserve(sched_.steps());
  for (std::size_t t = 1; t <= sched_.steps(); ++t) marginals_.push_back(gmm_.diffused(sched_.alpha_bar(t)));
}

std::string ExactScoreOracle::descriptor() const { return "exact"; }

void ExactScoreOracle::eval(std::size_t t, std::span<const double> x, std::span<double> out) const {
  if (t < 1 || t > marginals_.size()) throw Error(ErrorCode::kStepOutOfRange, "step index outside 1..T");
  marginals_[t - 1].score(x, out);
}

std::shared_ptr<const ExactScoreOracle> exact_oracle(const GaussianMixture& gmm, const NoiseSchedule& sched) {
  return std::make_shared<const ExactScoreOracle>(gmm, sched);
}

double clip_threshold(const NoiseSchedule& sched, std::size_t d, std::size_t t, double c_clip) {
  const double dd = static_cast<double>(d);
  const double T = static_cast<double>(sched.steps());
  return c_clip * std::sqrt(dd * std::log(dd * T) / sched.one_minus_alpha_bar(t));
}

namespace {

class ClipOracle final : public ScoreOracle {
 public:
  ClipOracle(OraclePtr inner, const NoiseSchedule& sched, std::size_t d, double c_clip)
      : inner_(std::move(inner)), c_clip_(c_clip) {
    thresholds_.reserve(sched.steps());
    for (std::size_t t = 1; t <= sched.steps(); ++t) thresholds_.push_back(clip_threshold(sched, d, t, c_clip));
  }

  std::size_t dim() const override { return inner_->dim(); }
  std::size_t steps() const override { return inner_->steps(); }
  std::string descriptor() const override { return fmt::format("clip({},C={})", inner_->descriptor(), c_clip_); }
  const ExactScoreOracle* exact_base() const override { return inner_->exact_base(); }

  void eval(std::size_t t, std::span<const double> x, std::span<double> out) const override {
    inner_->eval(t, x, out);
    double sq = 0.0;
    for (double v : out) sq += v * v;
    const double limit = thresholds_.at(t - 1);
    if (std::sqrt(sq) > limit) std::fill(out.begin(), out.end(), 0.0);
  }

 private:
  OraclePtr inner_;
  double c_clip_;
  std::vector<double> thresholds_;
};

// f(x) = scale * sqrt(2/M) sum_j g_j cos(w_j . x + b_j).
class FieldOracle final : public ScoreOracle {
 public:
  FieldOracle(OraclePtr inner, double amplitude, std::uint64_t seed)
      : inner_(std::move(inner)), amplitude_(amplitude), seed_(seed) {
    const std::size_t d = inner_->dim();
    Rng rng = make_stream(seed, StreamTag::kPerturbation, 0);
    freqs_.resize(kFieldFeatures * d);
    phases_.resize(kFieldFeatures);
    coeffs_.resize(kFieldFeatures * d);
    for (double& w : freqs_) w = rng.normal();
    for (double& b : phases_) b = 2.0 * std::numbers::pi * rng.uniform();
    double sq = 0.0;
    for (double& g : coeffs_) {
      g = rng.normal();
      sq += g * g;
    }
    // (1/M) sum_j |g_j|^2 = 1, which makes E|f|^2 = 1 up to characteristic-function terms.
    const double norm = std::sqrt(sq / static_cast<double>(kFieldFeatures));
    for (double& g : coeffs_) g /= norm;
    scale_ = std::sqrt(2.0 / static_cast<double>(kFieldFeatures));
    if (const auto* base = inner_->exact_base()) calibrate(*base);
  }

  std::size_t dim() const override { return inner_->dim(); }
  std::size_t steps() const override { return inner_->steps(); }
  std::string descriptor() const override {
    return fmt::format("gaussian-field({},a={},seed={})", inner_->descriptor(), amplitude_, seed_);
  }
  const ExactScoreOracle* exact_base() const override { return inner_->exact_base(); }

  void eval(std::size_t t, std::span<const double> x, std::span<double> out) const override {
    inner_->eval(t, x, out);
    if (amplitude_ == 0.0) return;
    add_field(x, out, amplitude_ * scale_);
  }

 private:
  void add_field(std::span<const double> x, std::span<double> out, double factor) const {
    const std::size_t d = x.size();
    for (std::size_t j = 0; j < kFieldFeatures; ++j) {
      const double* w = freqs_.data() + j * d;
      double arg = phases_[j];
      for (std::size_t i = 0; i < d; ++i) arg += w[i] * x[i];
      const double c = factor * std::cos(arg);
      const double* g = coeffs_.data() + j * d;
      for (std::size_t i = 0; i < d; ++i) out[i] += c * g[i];
    }
  }

  // Rescale so the field's RMS pooled over all forward marginals is one.
  void calibrate(const ExactScoreOracle& base) {
    constexpr std::size_t kCalibrationPoints = 8192;
    const std::size_t d = dim();
    const std::size_t T = base.steps();
    std::vector<double> x(d);
    std::vector<double> f(d);
    double acc = 0.0;
    for (std::size_t i = 0; i < kCalibrationPoints; ++i) {
      const std::size_t t = 1 + i % T;
      Rng rng = make_stream(seed_, StreamTag::kPerturbation, 1, i);
      base.marginal(t).draw(rng, x);
      std::fill(f.begin(), f.end(), 0.0);
      add_field(x, f, scale_);
      for (double v : f) acc += v * v;
    }
    const double rms = std::sqrt(acc / static_cast<double>(kCalibrationPoints));
    if (rms > 0.0) scale_ /= rms;
  }

  OraclePtr inner_;
  double amplitude_;
  std::uint64_t seed_;
  double scale_ = 1.0;
  std::vector<double> freqs_;
  std::vector<double> phases_;
  std::vector<double> coeffs_;
};

class JitterOracle final : public ScoreOracle {
 public:
  JitterOracle(OraclePtr inner, double amplitude, std::uint64_t seed)
      : inner_(std::move(inner)), amplitude_(amplitude), seed_(seed) {
    const ExactScoreOracle* base = inner_->exact_base();
    if (base == nullptr) throw Error(ErrorCode::kValidationError, "mean-jitter needs an exact base oracle");
    base_ = base;
    const GaussianMixture& gmm = base->gmm();
    std::vector<double> means(gmm.flat_means().begin(), gmm.flat_means().end());
    Rng rng = make_stream(seed, StreamTag::kPerturbation, 2);
    for (double& m : means) m += amplitude * rng.normal();
    GaussianMixture moved(std::vector<double>(gmm.weights().begin(), gmm.weights().end()), std::move(means), gmm.dim());
    jittered_ = std::make_shared<ExactScoreOracle>(std::move(moved), base->schedule());
    direct_ = inner_.get() == static_cast<const ScoreOracle*>(base);
  }

  std::size_t dim() const override { return inner_->dim(); }
  std::size_t steps() const override { return inner_->steps(); }
  std::string descriptor() const override {
    return fmt::format("mean-jitter({},a={},seed={})", inner_->descriptor(), amplitude_, seed_);
  }
  const ExactScoreOracle* exact_base() const override { return base_; }

  void eval(std::size_t t, std::span<const double> x, std::span<double> out) const override {
    if (direct_) {
      jittered_->eval(t, x, out);
      return;
    }
    // inner + (jittered exact - exact) when the inner oracle is itself modified.
    inner_->eval(t, x, out);
    std::vector<double> a(out.size());
    std::vector<double> b(out.size());
    jittered_->eval(t, x, a);
    base_->eval(t, x, b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += a[i] - b[i];
  }

 private:
  OraclePtr inner_;
  double amplitude_;
  std::uint64_t seed_;
  const ExactScoreOracle* base_ = nullptr;
  std::shared_ptr<const ExactScoreOracle> jittered_;
  bool direct_ = false;
};

}  // namespace

OraclePtr clip_oracle(OraclePtr inner, const NoiseSchedule& sched, std::size_t d, double c_clip) {
  if (!(c_clip > 0.0)) throw Error(ErrorCode::kBadConstants, "C_clip must be positive");
  if (inner->dim() != d) throw Error(ErrorCode::kOracleDimensionMismatch, "clip dimension differs from oracle");
  return std::make_shared<const ClipOracle>(std::move(inner), sched, d, c_clip);
}

std::string_view to_string(PerturbModel model) {
  switch (model) {
    case PerturbModel::kGaussianField: return "gaussian-field";
    case PerturbModel::kMeanJitter: return "mean-jitter";
  }
  return "unknown";
}

PerturbModel parse_perturb_model(std::string_view name) {
  if (name == "gaussian-field") return PerturbModel::kGaussianField;
  if (name == "mean-jitter") return PerturbModel::kMeanJitter;
  throw Error(ErrorCode::kValidationError, fmt::format("unknown perturbation model '{}'", name));
}

OraclePtr perturb_oracle(OraclePtr inner, PerturbModel model, double amplitude, std::uint64_t seed) {
  if (!(amplitude >= 0.0)) throw Error(ErrorCode::kNegativeAmplitude, "amplitude must be nonnegative");
  switch (model) {
    case PerturbModel::kGaussianField: return std::make_shared<const FieldOracle>(std::move(inner), amplitude, seed);
    case PerturbModel::kMeanJitter: return std::make_shared<const JitterOracle>(std::move(inner), amplitude, seed);
  }
  throw Error(ErrorCode::kValidationError, "unknown perturbation model");
}

namespace {

struct Moments {
  double mean = 0.0;
  double std_error = 0.0;
};

Moments summarize(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace

ScoreErrorReport measure_score_error(const ScoreOracle& candidate, const GaussianMixture& gmm,
                                     const NoiseSchedule& sched, std::size_t n, std::uint64_t seed,
                                     unsigned threads) {
  return measure_score_error(candidate, TargetDistribution(gmm), sched, n, seed, threads);
}

ScoreErrorReport measure_score_error(const ScoreOracle& candidate, const TargetDistribution& target,
                                     const NoiseSchedule& sched, std::size_t n, std::uint64_t seed,
                                     unsigned threads) {
  if (n < 100) throw Error(ErrorCode::kTooFewSamples, "score error needs n >= 100");
  const std::size_t d = target.dim();
  if (candidate.dim() != d) throw Error(ErrorCode::kOracleDimensionMismatch, "oracle dimension differs from target");
  const std::size_t T = sched.steps();
  const GaussianMixture& gmm = target.gmm();

  ScoreErrorReport report;
  report.per_t.resize(T);
  report.n = n;
  report.seed = seed;
  report.oracle = candidate.descriptor();
  std::vector<double> target_per_t(T, 0.0);
  const bool contaminated = !target.is_pure();

  parallel_for(T, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> x(d), s(d), ref(d), x0(d), sq(n);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t t = i + 1;
      const GaussianMixture marginal = gmm.diffused(sched.alpha_bar(t));
      for (std::size_t j = 0; j < n; ++j) {
        Rng rng = make_stream(seed, StreamTag::kScoreError, t, j);
        marginal.draw(rng, x);
        candidate.eval(t, x, s);
        marginal.score(x, ref);
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += (s[c] - ref[c]) * (s[c] - ref[c]);
        sq[j] = acc;
      }
      const Moments m = summarize(sq);
      report.per_t[i] = {m.mean, m.std_error};

      if (contaminated) {
        const double root = std::sqrt(sched.alpha_bar(t));
        const double noise = std::sqrt(sched.one_minus_alpha_bar(t));
        const IsotropicMixture truth = target.diffused(sched.alpha_bar(t), sched.one_minus_alpha_bar(t));
        double acc_all = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          Rng rng = make_stream(seed, StreamTag::kScoreError, t, n + j);
          target.draw(rng, x0);
          for (std::size_t c = 0; c < d; ++c) x[c] = root * x0[c] + noise * rng.normal();
          candidate.eval(t, x, s);
          truth.score(x, ref);
          for (std::size_t c = 0; c < d; ++c) acc_all += (s[c] - ref[c]) * (s[c] - ref[c]);
        }
        target_per_t[i] = acc_all / static_cast<double>(n);
      }
    }
  });

  double total = 0.0;
  double weighted = 0.0;
  double target_total = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    total += report.per_t[t - 1].value;
    if (t >= 2) weighted += sched.one_minus_alpha_bar(t) * report.per_t[t - 1].value;
    target_total += target_per_t[t - 1];
  }
  const double Td = static_cast<double>(T);
  report.epsilon_score = std::sqrt(total / Td);
  report.epsilon_score_gmm = std::sqrt(weighted / Td);
  if (contaminated) report.epsilon_score_target = std::sqrt(target_total / Td);
  return report;
}

nlohmann::json to_json(const ScoreErrorReport& report) {
  nlohmann::json per_t = nlohmann::json::array();
  for (std::size_t i = 0; i < report.per_t.size(); ++i) {
    per_t.push_back({{"t", i + 1}, {"value", report.per_t[i].value}, {"std_error", report.per_t[i].std_error}});
  }
  nlohmann::json j = {{"per_t", per_t},
                      {"epsilon_score", report.epsilon_score},
                      {"epsilon_score_gmm", report.epsilon_score_gmm},
                      {"n", report.n},
                      {"seed", report.seed},
                      {"oracle", report.oracle}};
  if (report.epsilon_score_target) j["epsilon_score_target"] = *report.epsilon_score_target;
  return j;
}

}  // namespace gmmddpm
