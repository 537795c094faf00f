#include "gmmddpm/target.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/parallel.hpp"

namespace gmmddpm {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

Mixture1D::Mixture1D(std::vector<Component1D> components) : components_(std::move(components)) {}

double Mixture1D::pdf(double x) const {
  double acc = 0.0;
  for (const auto& c : components_) {
    const double z = (x - c.mean) / c.sd;
    acc += c.weight * std::exp(-0.5 * z * z) / (c.sd * std::sqrt(2.0 * std::numbers::pi));
  }
  return acc;
}

double Mixture1D::cdf(double x) const {
  double acc = 0.0;
  for (const auto& c : components_) acc += c.weight * normal_cdf((x - c.mean) / c.sd);
  return acc;
}

double Mixture1D::mean() const {
  double m = 0.0;
  for (const auto& c : components_) m += c.weight * c.mean;
  return m;
}

double Mixture1D::sd() const {
  const double m = mean();
  double second = 0.0;
  for (const auto& c : components_) second += c.weight * (c.sd * c.sd + c.mean * c.mean);
  return std::sqrt(std::max(0.0, second - m * m));
}

IsotropicMixture::IsotropicMixture(std::vector<double> weights, std::vector<double> flat_means,
                                   std::vector<double> variances, std::size_t dim)
    : dim_(dim), means_(std::move(flat_means)), variances_(std::move(variances)) {
  if (weights.empty() || weights.size() != variances_.size() || means_.size() != weights.size() * dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "isotropic mixture parts disagree in size");
  }
  log_weights_.reserve(weights.size());
  for (double w : weights) log_weights_.push_back(std::log(w));
}

double IsotropicMixture::log_density(std::span<const double> x) const {
  if (x.size() != dim_) throw Error(ErrorCode::kDimensionMismatch, "point dimension does not match mixture");
  const std::size_t K = log_weights_.size();
  std::vector<double> logits(K);
  const double d = static_cast<double>(dim_);
  for (std::size_t k = 0; k < K; ++k) {
    const double* m = means_.data() + k * dim_;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) sq += (x[j] - m[j]) * (x[j] - m[j]);
    logits[k] = log_weights_[k] - 0.5 * sq / variances_[k] - 0.5 * d * std::log(2.0 * std::numbers::pi * variances_[k]);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  return top + std::log(sum);
}

void IsotropicMixture::score(std::span<const double> x, std::span<double> out) const {
  if (x.size() != dim_ || out.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "point dimension does not match mixture");
  }
  const std::size_t K = log_weights_.size();
  std::vector<double> logits(K);
  const double d = static_cast<double>(dim_);
  for (std::size_t k = 0; k < K; ++k) {
    const double* m = means_.data() + k * dim_;
    double sq = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) sq += (x[j] - m[j]) * (x[j] - m[j]);
    logits[k] = log_weights_[k] - 0.5 * sq / variances_[k] - 0.5 * d * std::log(variances_[k]);
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    sum += l;
  }
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    const double p = logits[k] / sum;
    const double* m = means_.data() + k * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] -= p * (x[j] - m[j]) / variances_[k];
  }
}

TargetDistribution::TargetDistribution(GaussianMixture gmm) : gmm_(std::move(gmm)) {}

TargetDistribution::TargetDistribution(GaussianMixture gmm, double delta, IsotropicGaussian contaminant)
    : gmm_(std::move(gmm)), delta_(delta) {
  if (!(delta >= 0.0 && delta < 1.0)) throw Error(ErrorCode::kBadDelta, "delta must lie in [0, 1)");
  if (contaminant.center.empty()) contaminant.center.assign(gmm_.dim(), 0.0);
  if (contaminant.center.size() != gmm_.dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "contaminant dimension does not match the mixture");
  }
  if (!(contaminant.scale > 0.0)) throw Error(ErrorCode::kBadDelta, "contaminant scale must be positive");
  if (delta > 0.0) contaminant_ = std::move(contaminant);
}

TargetDistribution contaminate_target(const GaussianMixture& gmm, double delta, IsotropicGaussian contaminant) {
  return TargetDistribution(gmm, delta, std::move(contaminant));
}

void TargetDistribution::draw(Rng& rng, std::span<double> out) const {
  if (contaminant_ && rng.uniform() < delta_) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = contaminant_->center[j] + contaminant_->scale * rng.normal();
    return;
  }
  gmm_.draw(rng, out);
}

SampleBatch TargetDistribution::sample(std::size_t n, std::uint64_t seed, unsigned threads) const {
  if (n == 0) throw Error(ErrorCode::kZeroCount, "sample count must be at least 1");
  if (is_pure()) return gmm_.sample(n, seed, threads);
  SampleBatch batch(dim(), n, seed, "target");
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = make_stream(seed, StreamTag::kTargetSample, i);
      draw(rng, batch.row(i));
    }
  });
  return batch;
}

Mixture1D TargetDistribution::project(std::span<const double> u) const {
  if (u.size() != dim()) throw Error(ErrorCode::kDimensionMismatch, "direction dimension does not match target");
  double norm = 0.0;
  for (double v : u) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0)) throw Error(ErrorCode::kDegenerateRange, "projection direction is zero");
  std::vector<Component1D> comps;
  comps.reserve(gmm_.components() + 1);
  const double keep = 1.0 - delta_;
  for (std::size_t k = 0; k < gmm_.components(); ++k) {
    const auto m = gmm_.mean(k);
    double proj = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) proj += m[j] * u[j];
    comps.push_back({keep * gmm_.weights()[k], proj / norm, 1.0});
  }
  if (contaminant_) {
    double proj = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) proj += contaminant_->center[j] * u[j];
    comps.push_back({delta_, proj / norm, contaminant_->scale});
  }
  return Mixture1D(std::move(comps));
}

IsotropicMixture TargetDistribution::diffused(double alpha_bar, double one_minus_alpha_bar) const {
  const std::size_t d = dim();
  const std::size_t K = gmm_.components();
  const double root = std::sqrt(alpha_bar);
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> variances;
  for (std::size_t k = 0; k < K; ++k) {
    weights.push_back((1.0 - delta_) * gmm_.weights()[k]);
    for (double v : gmm_.mean(k)) means.push_back(root * v);
    variances.push_back(1.0);
  }
  if (contaminant_) {
    weights.push_back(delta_);
    for (double v : contaminant_->center) means.push_back(root * v);
    const double s2 = contaminant_->scale * contaminant_->scale;
    variances.push_back(alpha_bar * s2 + one_minus_alpha_bar);
  }
  return IsotropicMixture(std::move(weights), std::move(means), std::move(variances), d);
}

std::string TargetDistribution::descriptor() const {
  std::string out = fmt::format("gmm(K={},d={})", gmm_.components(), gmm_.dim());
  if (contaminant_) out += fmt::format("+contam(delta={},scale={})", delta_, contaminant_->scale);
  return out;
}

}  // namespace gmmddpm
