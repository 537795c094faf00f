#include "gmmddpm/gaussian_mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gmmddpm/error.hpp"
#include "gmmddpm/parallel.hpp"
#include "gmmddpm/random.hpp"

namespace gmmddpm {

namespace {

constexpr double kFlushBelow = 1e-300;

std::vector<double>& scratch(std::size_t n) {
  thread_local std::vector<double> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer;
}

}  // namespace

std::vector<double> SampleBatch::project(std::span<const double> u) const {
  const std::size_t n = size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = points.data() + i * dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) acc += p[j] * u[j];
    out[i] = acc;
  }
  return out;
}

GaussianMixture::GaussianMixture(std::vector<double> weights,
                                 const std::vector<std::vector<double>>& means)
    : weights_(std::move(weights)) {
  if (weights_.empty() || means.empty()) throw Error(ErrorCode::kEmpty, "mixture needs at least one component");
  if (weights_.size() != means.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "weights and means have different lengths");
  }
  dim_ = means.front().size();
  means_.reserve(dim_ * means.size());
  for (const auto& m : means) {
    if (m.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "means have differing dimensions");
    means_.insert(means_.end(), m.begin(), m.end());
  }
  validate_and_init();
}

GaussianMixture::GaussianMixture(std::vector<double> weights, std::vector<double> flat_means,
                                 std::size_t dim)
    : dim_(dim), weights_(std::move(weights)), means_(std::move(flat_means)) {
  if (weights_.empty() || means_.empty()) throw Error(ErrorCode::kEmpty, "mixture needs at least one component");
  if (dim_ == 0 || means_.size() != weights_.size() * dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "flat means do not match K x d");
  }
  validate_and_init();
}

void GaussianMixture::validate_and_init() {
  if (dim_ == 0) throw Error(ErrorCode::kDimensionMismatch, "dimension must be at least 1");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) throw Error(ErrorCode::kNonPositiveWeight, "weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::kWeightsNotNormalized, "weights sum to " + std::to_string(total));
  }
  for (double v : means_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kDimensionMismatch, "means must be finite");
  }
  // Renormalise so the stored vector sums to one to rounding.
  for (double& w : weights_) w /= total;

  log_weights_.resize(weights_.size());
  cumulative_.resize(weights_.size());
  double run = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    log_weights_[k] = std::log(weights_[k]);
    run += weights_[k];
    cumulative_[k] = run;
  }
  cumulative_.back() = 1.0;

  max_mean_norm_ = 0.0;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const auto m = mean(k);
    const double sq = std::inner_product(m.begin(), m.end(), m.begin(), 0.0);
    max_mean_norm_ = std::max(max_mean_norm_, std::sqrt(sq));
  }
}

GaussianMixture GaussianMixture::diffused(double alpha_bar) const {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) {
    throw Error(ErrorCode::kOutOfRangeAlphaBar, "alpha_bar must lie in (0, 1]");
  }
  const double scale = std::sqrt(alpha_bar);
  std::vector<double> scaled(means_);
  for (double& v : scaled) v *= scale;
  return GaussianMixture(weights_, std::move(scaled), dim_);
}

GaussianMixture diffused_marginal(const GaussianMixture& gmm, double alpha_bar) {
  return gmm.diffused(alpha_bar);
}

void GaussianMixture::component_logits(std::span<const double> x, std::span<double> out) const {
  if (x.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "point dimension does not match mixture");
  const std::size_t K = weights_.size();
  for (std::size_t k = 0; k < K; ++k) {
    const double* m = means_.data() + k * dim_;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double diff = x[j] - m[j];
      sq += diff * diff;
    }
    out[k] = log_weights_[k] - 0.5 * sq;
  }
}

double GaussianMixture::log_density(std::span<const double> x) const {
  const std::size_t K = weights_.size();
  auto& logits = scratch(K);
  component_logits(x, logits);
  const double top = *std::max_element(logits.begin(), logits.begin() + K);
  double sum = 0.0;
  for (std::size_t k = 0; k < K; ++k) sum += std::exp(logits[k] - top);
  return top + std::log(sum) - 0.5 * static_cast<double>(dim_) * std::log(2.0 * std::numbers::pi);
}

void GaussianMixture::posterior_weights(std::span<const double> x, std::span<double> out) const {
  const std::size_t K = weights_.size();
  if (out.size() != K) throw Error(ErrorCode::kDimensionMismatch, "posterior output has wrong length");
  component_logits(x, out);
  const double top = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    sum += v;
  }
  for (double& v : out) {
    v /= sum;
    if (v < kFlushBelow) v = 0.0;
  }
}

PosteriorWeights GaussianMixture::posterior_weights(std::span<const double> x) const {
  PosteriorWeights pw{std::vector<double>(weights_.size())};
  posterior_weights(x, pw.values);
  return pw;
}

void GaussianMixture::score(std::span<const double> x, std::span<double> out) const {
  if (out.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "score output has wrong length");
  const std::size_t K = weights_.size();
  auto& post = scratch(K);
  std::span<double> pw(post.data(), K);
  posterior_weights(x, pw);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = -x[j];
  for (std::size_t k = 0; k < K; ++k) {
    if (pw[k] == 0.0) continue;
    const double* m = means_.data() + k * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] += pw[k] * m[j];
  }
}

std::vector<double> GaussianMixture::score(std::span<const double> x) const {
  std::vector<double> out(dim_);
  score(x, out);
  return out;
}

double GaussianMixture::jacobian_trace(std::span<const double> x) const {
  const std::size_t K = weights_.size();
  if (K == 1) {
    if (x.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "point dimension does not match mixture");
    return 0.0;
  }
  std::vector<double> pw(K);
  posterior_weights(x, pw);
  std::vector<double> centre(dim_, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double* m = means_.data() + k * dim_;
    for (std::size_t j = 0; j < dim_; ++j) centre[j] += pw[k] * m[j];
  }
  // Centred form sum_k pi_k |m_k - mbar|^2 is a sum of nonnegative terms.
  double trace = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (pw[k] == 0.0) continue;
    const double* m = means_.data() + k * dim_;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double diff = m[j] - centre[j];
      sq += diff * diff;
    }
    trace += pw[k] * sq;
  }
  return trace;
}

std::vector<double> GaussianMixture::mixture_mean() const {
  std::vector<double> mbar(dim_, 0.0);
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const auto m = mean(k);
    for (std::size_t j = 0; j < dim_; ++j) mbar[j] += weights_[k] * m[j];
  }
  return mbar;
}

std::vector<double> GaussianMixture::mixture_covariance() const {
  const auto mbar = mixture_mean();
  std::vector<double> cov(dim_ * dim_, 0.0);
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    const auto m = mean(k);
    for (std::size_t a = 0; a < dim_; ++a) {
      for (std::size_t b = 0; b < dim_; ++b) {
        cov[a * dim_ + b] += weights_[k] * (m[a] - mbar[a]) * (m[b] - mbar[b]);
      }
    }
  }
  for (std::size_t a = 0; a < dim_; ++a) cov[a * dim_ + a] += 1.0;
  return cov;
}

std::size_t GaussianMixture::pick_component(double u) const noexcept {
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), weights_.size() - 1);
}

void GaussianMixture::draw(Rng& rng, std::span<double> out, std::size_t* label) const {
  const std::size_t k = pick_component(rng.uniform());
  const auto m = mean(k);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = m[j] + rng.normal();
  if (label != nullptr) *label = k;
}

SampleBatch GaussianMixture::sample(std::size_t n, std::uint64_t seed, unsigned threads) const {
  std::vector<std::size_t> labels;
  return sample(n, seed, labels, threads);
}

SampleBatch GaussianMixture::sample(std::size_t n, std::uint64_t seed, std::vector<std::size_t>& labels,
                                    unsigned threads) const {
  if (n == 0) throw Error(ErrorCode::kZeroCount, "sample count must be at least 1");
  SampleBatch batch(dim_, n, seed, "target");
  labels.assign(n, 0);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, StreamTag::kTargetSample, i);
      draw(rng, batch.row(i), &labels[i]);
    }
  });
  return batch;
}

}  // namespace gmmddpm
