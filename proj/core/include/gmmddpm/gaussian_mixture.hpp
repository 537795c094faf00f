#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gmmddpm/random.hpp"
#include "gmmddpm/sample_batch.hpp"

namespace gmmddpm {

// Posterior probability that a point came from each component.
struct PosteriorWeights {
  std::vector<double> values;
};

// Isotropic Gaussian mixture sum_k w_k N(m_k, I_d). Immutable after
// construction; every evaluation method is const and thread-safe.
//
// A diffused marginal is itself a GaussianMixture whose means are already
// multiplied by sqrt(alpha_bar), so score and Jacobian code never rescales.
class GaussianMixture {
 public:
  GaussianMixture(std::vector<double> weights, const std::vector<std::vector<double>>& means);
  GaussianMixture(std::vector<double> weights, std::vector<double> flat_means, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t components() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> log_weights() const noexcept { return log_weights_; }
  std::span<const double> mean(std::size_t k) const { return {means_.data() + k * dim_, dim_}; }
  std::span<const double> flat_means() const noexcept { return means_; }
  double max_mean_norm() const noexcept { return max_mean_norm_; }

  // Law of sqrt(a) X + sqrt(1 - a) W for X from this mixture: means scaled by sqrt(a).
  GaussianMixture diffused(double alpha_bar) const;

  double log_density(std::span<const double> x) const;

  void posterior_weights(std::span<const double> x, std::span<double> out) const;
  PosteriorWeights posterior_weights(std::span<const double> x) const;

  // grad log p(x) = -x + sum_k pi_k(x) m_k.
  void score(std::span<const double> x, std::span<double> out) const;
  std::vector<double> score(std::span<const double> x) const;

  // tr(I + J(x)), the posterior variance of the (stored) means. Never negative.
  double jacobian_trace(std::span<const double> x) const;

  std::vector<double> mixture_mean() const;
  // Row-major d x d covariance I + sum w m m^T - mbar mbar^T.
  std::vector<double> mixture_covariance() const;

  SampleBatch sample(std::size_t n, std::uint64_t seed, unsigned threads = 1) const;
  // Same draws as sample(), plus the component index of every point.
  SampleBatch sample(std::size_t n, std::uint64_t seed, std::vector<std::size_t>& labels,
                     unsigned threads = 1) const;

  // Draws one point using the caller's stream; used by composite targets.
  void draw(Rng& rng, std::span<double> out, std::size_t* label = nullptr) const;

 private:
  void validate_and_init();
  std::size_t pick_component(double u) const noexcept;
  void component_logits(std::span<const double> x, std::span<double> out) const;

  std::size_t dim_ = 0;
  std::vector<double> weights_;
  std::vector<double> log_weights_;
  std::vector<double> cumulative_;
  std::vector<double> means_;
  double max_mean_norm_ = 0.0;
};

GaussianMixture diffused_marginal(const GaussianMixture& gmm, double alpha_bar);

}  // namespace gmmddpm
