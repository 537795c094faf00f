#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/mixture1d.hpp"
#include "gmmddpm/random.hpp"
#include "gmmddpm/sample_batch.hpp"

namespace gmmddpm {

// N(center, scale^2 I_d).
struct IsotropicGaussian {
  std::vector<double> center;
  double scale = 1.0;
};

// Mixture of isotropic Gaussians with per-component variance. Used for the
// forward marginals of a contaminated target, which are not unit-variance.
class IsotropicMixture {
 public:
  IsotropicMixture(std::vector<double> weights, std::vector<double> flat_means, std::vector<double> variances,
                   std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  double log_density(std::span<const double> x) const;
  void score(std::span<const double> x, std::span<double> out) const;

 private:
  std::size_t dim_;
  std::vector<double> log_weights_;
  std::vector<double> means_;
  std::vector<double> variances_;
};

// A samplable target: a GMM, optionally contaminated as (1 - delta) GMM + delta Q.
// Only the GMM part is used for scores; the contaminant is Gaussian so the
// projected law stays available for distance estimates.
class TargetDistribution {
 public:
  explicit TargetDistribution(GaussianMixture gmm);
  TargetDistribution(GaussianMixture gmm, double delta, IsotropicGaussian contaminant);

  const GaussianMixture& gmm() const noexcept { return gmm_; }
  double delta() const noexcept { return delta_; }
  const std::optional<IsotropicGaussian>& contaminant() const noexcept { return contaminant_; }
  std::size_t dim() const noexcept { return gmm_.dim(); }
  bool is_pure() const noexcept { return delta_ == 0.0; }

  void draw(Rng& rng, std::span<double> out) const;
  SampleBatch sample(std::size_t n, std::uint64_t seed, unsigned threads = 1) const;

  // Law of u^T X for X from the target, u normalised internally.
  Mixture1D project(std::span<const double> u) const;

  // Law of sqrt(ab) X + sqrt(1 - ab) W.
  IsotropicMixture diffused(double alpha_bar, double one_minus_alpha_bar) const;

  std::string descriptor() const;

 private:
  GaussianMixture gmm_;
  double delta_ = 0.0;
  std::optional<IsotropicGaussian> contaminant_;
};

// (1 - delta) gmm + delta contaminant; TV to the gmm is at most delta.
TargetDistribution contaminate_target(const GaussianMixture& gmm, double delta, IsotropicGaussian contaminant);

}  // namespace gmmddpm
