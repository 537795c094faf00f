#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/mixture1d.hpp"
#include "gmmddpm/sample_batch.hpp"
#include "gmmddpm/target.hpp"

namespace gmmddpm {

struct TvEstimate {
  double value = 0.0;
  std::string method;       // grid-1d | sliced
  std::size_t resolution = 0;  // bins for grid-1d, projections for sliced
  double mc_error = 0.0;
};

inline constexpr std::size_t kDefaultBins = 200;
inline constexpr std::size_t kMinBins = 50;
inline constexpr double kRangeSds = 6.0;

// Half the L1 distance between the binned target mass and the empirical
// histogram, with the two tails outside the range treated as extra cells.
// The default range is mean +- 6 sd of the target.
TvEstimate tv_1d_grid(const Mixture1D& target, std::span<const double> samples, std::size_t bins = kDefaultBins,
                      std::optional<std::pair<double, double>> range = std::nullopt);
TvEstimate tv_1d_grid(const Mixture1D& target, const SampleBatch& samples, std::size_t bins = kDefaultBins,
                      std::optional<std::pair<double, double>> range = std::nullopt);

struct SlicedTv {
  TvEstimate max;   // lower bound on the joint TV
  double mean = 0.0;
  std::vector<std::vector<double>> directions;  // unit vectors
  std::vector<TvEstimate> per_direction;
};

// Random unit directions drawn from stream (seed, projection, m).
std::vector<std::vector<double>> random_directions(std::size_t d, std::size_t count, std::uint64_t seed);

// Unit directions through every pair of distinct component means.
std::vector<std::vector<double>> mean_pair_directions(const GaussianMixture& gmm);

// count random directions, followed by the mean-pair directions when requested.
SlicedTv sliced_tv(const TargetDistribution& target, const SampleBatch& samples, std::size_t projections,
                   std::size_t bins, std::uint64_t seed, bool include_mean_pairs = true, unsigned threads = 1);
SlicedTv sliced_tv(const GaussianMixture& target, const SampleBatch& samples, std::size_t projections,
                   std::size_t bins, std::uint64_t seed, bool include_mean_pairs = true, unsigned threads = 1);
SlicedTv sliced_tv(const TargetDistribution& target, const SampleBatch& samples,
                   const std::vector<std::vector<double>>& directions, std::size_t bins, unsigned threads = 1);

struct MmdEstimate {
  double value = 0.0;  // unbiased MMD^2, may be slightly negative
  double std_error = 0.0;
  double bandwidth = 0.0;
};

// Median of pairwise distances over a permutation-invariant subsample of the pooled points.
double median_heuristic_bandwidth(const SampleBatch& a, const SampleBatch& b);

// Gaussian kernel exp(-|x - y|^2 / (2 h^2)); bandwidth <= 0 selects the median heuristic.
MmdEstimate mmd(const SampleBatch& a, const SampleBatch& b, double bandwidth = 0.0, unsigned threads = 1);

struct MomentReport {
  double mean_gap = 0.0;
  double mean_gap_se = 0.0;
  double cov_gap = 0.0;  // Frobenius
  double cov_gap_se = 0.0;
  std::vector<double> occupancy;  // average posterior weight per component
  std::vector<double> occupancy_se;
  std::vector<double> weights;
};

MomentReport moment_diagnostics(const SampleBatch& samples, const GaussianMixture& target);

struct RateFit {
  double a = 0.0;
  double b = 0.0;
  double r2 = 0.0;
};

// Least squares on (log T, log tv) for tv ~ a T^-b.
RateFit fit_rate(std::vector<std::pair<double, double>> points);

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
};

LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

struct RankCorrelation {
  double rho = 0.0;
  double p_greater = 1.0;  // one-sided, H1: rho > 0
};

// Spearman rank correlation. The p-value enumerates all permutations for
// n <= 8 and uses the t approximation beyond that.
RankCorrelation spearman(std::span<const double> x, std::span<const double> y);

}  // namespace gmmddpm
