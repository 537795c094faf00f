#include "gmmddpm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmmddpm/error.hpp"
#include "gmmddpm/parallel.hpp"
#include "gmmddpm/random.hpp"

namespace gmmddpm {

TvEstimate tv_1d_grid(const Mixture1D& target, std::span<const double> samples, std::size_t bins,
                      std::optional<std::pair<double, double>> range) {
  if (bins < kMinBins) throw Error(ErrorCode::kDegenerateRange, "tv_1d_grid needs at least 50 bins");
  if (samples.empty()) throw Error(ErrorCode::kTooFewSamples, "tv_1d_grid needs samples");
  const auto [lo, hi] = range.value_or(std::pair{target.mean() - kRangeSds * target.sd(),
                                                 target.mean() + kRangeSds * target.sd()});
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo)) {
    throw Error(ErrorCode::kDegenerateRange, "histogram range must be a finite, nonempty interval");
  }
  const double cdf_lo = target.cdf(lo);
  const double cdf_hi = target.cdf(hi);
  if (cdf_hi - cdf_lo < 0.999) throw Error(ErrorCode::kDegenerateRange, "range covers less than 99.9% of the target");

  // Cells: 0 = lower tail, 1..bins = grid, bins + 1 = upper tail.
  const std::size_t cells = bins + 2;
  std::vector<double> target_mass(cells);
  const double width = (hi - lo) / static_cast<double>(bins);
  target_mass[0] = cdf_lo;
  double prev = cdf_lo;
  for (std::size_t j = 1; j <= bins; ++j) {
    const double edge = j == bins ? hi : lo + width * static_cast<double>(j);
    const double c = j == bins ? cdf_hi : target.cdf(edge);
    target_mass[j] = std::max(0.0, c - prev);
    prev = c;
  }
  target_mass[bins + 1] = 1.0 - cdf_hi;

  std::vector<std::size_t> counts(cells, 0);
  for (double x : samples) {
    std::size_t cell;
    if (x < lo) {
      cell = 0;
    } else if (x >= hi || std::isnan(x)) {
      cell = bins + 1;
    } else {
      cell = 1 + std::min(bins - 1, static_cast<std::size_t>((x - lo) / width));
    }
    ++counts[cell];
  }

  const double n = static_cast<double>(samples.size());
  double tv = 0.0;
  double signed_mass = 0.0;
  double abs_mass = 0.0;
  for (std::size_t j = 0; j < cells; ++j) {
    const double q = static_cast<double>(counts[j]) / n;
    const double diff = q - target_mass[j];
    tv += std::abs(diff);
    if (diff != 0.0) {
      signed_mass += diff > 0 ? q : -q;
      abs_mass += q;
    }
  }
  TvEstimate est;
  est.value = std::clamp(0.5 * tv, 0.0, 1.0);
  est.method = "grid-1d";
  est.resolution = bins;
  // Delta method with the sign pattern held fixed.
  est.mc_error = 0.5 * std::sqrt(std::max(0.0, abs_mass - signed_mass * signed_mass) / n);
  return est;
}

TvEstimate tv_1d_grid(const Mixture1D& target, const SampleBatch& samples, std::size_t bins,
                      std::optional<std::pair<double, double>> range) {
  if (samples.dim != 1) throw Error(ErrorCode::kWrongDimension, "tv_1d_grid expects one-dimensional samples");
  return tv_1d_grid(target, std::span<const double>(samples.points), bins, range);
}

std::vector<std::vector<double>> random_directions(std::size_t d, std::size_t count, std::uint64_t seed) {
  std::vector<std::vector<double>> dirs;
  dirs.reserve(count);
  for (std::size_t m = 0; m < count; ++m) {
    Rng rng = make_stream(seed, StreamTag::kProjection, m);
    std::vector<double> u(d);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : u) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : u) v /= norm;
    dirs.push_back(std::move(u));
  }
  return dirs;
}

std::vector<std::vector<double>> mean_pair_directions(const GaussianMixture& gmm) {
  std::vector<std::vector<double>> dirs;
  const std::size_t K = gmm.components();
  const std::size_t d = gmm.dim();
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = i + 1; j < K; ++j) {
      std::vector<double> u(d);
      double norm = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        u[c] = gmm.mean(i)[c] - gmm.mean(j)[c];
        norm += u[c] * u[c];
      }
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;
      for (double& v : u) v /= norm;
      dirs.push_back(std::move(u));
    }
  }
  return dirs;
}

SlicedTv sliced_tv(const TargetDistribution& target, const SampleBatch& samples,
                   const std::vector<std::vector<double>>& directions, std::size_t bins, unsigned threads) {
  if (directions.empty()) throw Error(ErrorCode::kZeroCount, "sliced TV needs at least one direction");
  if (samples.dim != target.dim()) throw Error(ErrorCode::kDimensionMismatch, "samples and target differ in dimension");
  for (const auto& u : directions) {
    if (u.size() != target.dim()) throw Error(ErrorCode::kDimensionMismatch, "direction has the wrong dimension");
  }
  SlicedTv out;
  out.per_direction.resize(directions.size());
  parallel_for(directions.size(), threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t m = begin; m < end; ++m) {
      const auto projected = samples.project(directions[m]);
      out.per_direction[m] = tv_1d_grid(target.project(directions[m]), projected, bins);
    }
  });
  out.directions = directions;
  for (auto& u : out.directions) {
    const double norm = std::sqrt(std::inner_product(u.begin(), u.end(), u.begin(), 0.0));
    for (double& v : u) v /= norm;
  }
  std::size_t best = 0;
  double total = 0.0;
  for (std::size_t m = 0; m < out.per_direction.size(); ++m) {
    total += out.per_direction[m].value;
    if (out.per_direction[m].value > out.per_direction[best].value) best = m;
  }
  out.max = out.per_direction[best];
  out.max.method = "sliced";
  out.max.resolution = directions.size();
  out.mean = total / static_cast<double>(directions.size());
  return out;
}

SlicedTv sliced_tv(const TargetDistribution& target, const SampleBatch& samples, std::size_t projections,
                   std::size_t bins, std::uint64_t seed, bool include_mean_pairs, unsigned threads) {
  if (projections == 0) throw Error(ErrorCode::kZeroCount, "sliced TV needs at least one projection");
  auto dirs = random_directions(target.dim(), projections, seed);
  if (include_mean_pairs) {
    for (auto& u : mean_pair_directions(target.gmm())) dirs.push_back(std::move(u));
  }
  return sliced_tv(target, samples, dirs, bins, threads);
}

SlicedTv sliced_tv(const GaussianMixture& target, const SampleBatch& samples, std::size_t projections,
                   std::size_t bins, std::uint64_t seed, bool include_mean_pairs, unsigned threads) {
  return sliced_tv(TargetDistribution(target), samples, projections, bins, seed, include_mean_pairs, threads);
}

namespace {

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
  return s;
}

}  // namespace

double median_heuristic_bandwidth(const SampleBatch& a, const SampleBatch& b) {
  constexpr std::size_t kMaxPoints = 1000;
  const std::size_t d = a.dim;
  std::vector<std::span<const double>> pooled;
  pooled.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) pooled.push_back(a.row(i));
  for (std::size_t i = 0; i < b.size(); ++i) pooled.push_back(b.row(i));
  // Lexicographic order makes the subsample independent of input order.
  std::sort(pooled.begin(), pooled.end(), [d](auto x, auto y) {
    return std::lexicographical_compare(x.begin(), x.begin() + d, y.begin(), y.begin() + d);
  });
  std::vector<std::span<const double>> pick;
  const std::size_t m = std::min(kMaxPoints, pooled.size());
  for (std::size_t i = 0; i < m; ++i) pick.push_back(pooled[i * pooled.size() / m]);
  std::vector<double> dist;
  dist.reserve(m * (m - 1) / 2);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) dist.push_back(std::sqrt(squared_distance(pick[i], pick[j])));
  }
  if (dist.empty()) return 1.0;
  auto mid = dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2);
  std::nth_element(dist.begin(), mid, dist.end());
  return *mid > 0.0 ? *mid : 1.0;
}

MmdEstimate mmd(const SampleBatch& a, const SampleBatch& b, double bandwidth, unsigned threads) {
  if (a.dim != b.dim) throw Error(ErrorCode::kDimensionMismatch, "MMD samples differ in dimension");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (n < 2 || m < 2) throw Error(ErrorCode::kTooFewSamples, "MMD needs at least two points per sample");
  MmdEstimate est;
  est.bandwidth = bandwidth > 0.0 ? bandwidth : median_heuristic_bandwidth(a, b);
  const double gamma = 1.0 / (2.0 * est.bandwidth * est.bandwidth);
  auto kern = [gamma](std::span<const double> x, std::span<const double> y) {
    return std::exp(-gamma * squared_distance(x, y));
  };

  // Per-point first-order projections of the two-sample U statistic.
  std::vector<double> fa(n), fb(m);
  std::vector<double> within_a(n), within_b(m), cross_a(n);
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double w = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) w += kern(a.row(i), a.row(j));
      }
      for (std::size_t j = 0; j < m; ++j) c += kern(a.row(i), b.row(j));
      within_a[i] = w;
      cross_a[i] = c;
      fa[i] = w / static_cast<double>(n - 1) - c / static_cast<double>(m);
    }
  });
  parallel_for(m, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      double w = 0.0, c = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (j != i) w += kern(b.row(i), b.row(j));
      }
      for (std::size_t j = 0; j < n; ++j) c += kern(b.row(i), a.row(j));
      within_b[i] = w;
      fb[i] = w / static_cast<double>(m - 1) - c / static_cast<double>(n);
    }
  });
  const double saa = std::accumulate(within_a.begin(), within_a.end(), 0.0);
  const double sbb = std::accumulate(within_b.begin(), within_b.end(), 0.0);
  const double sab = std::accumulate(cross_a.begin(), cross_a.end(), 0.0);
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  est.value = saa / (nd * (nd - 1.0)) + sbb / (md * (md - 1.0)) - 2.0 * sab / (nd * md);

  auto variance = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size() - 1);
  };
  est.std_error = std::sqrt(4.0 * variance(fa) / nd + 4.0 * variance(fb) / md);
  return est;
}

MomentReport moment_diagnostics(const SampleBatch& samples, const GaussianMixture& target) {
  if (samples.dim != target.dim()) throw Error(ErrorCode::kDimensionMismatch, "samples and target differ in dimension");
  const std::size_t n = samples.size();
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "moment diagnostics need at least two points");
  const std::size_t d = samples.dim;
  const std::size_t K = target.components();
  const double nd = static_cast<double>(n);

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += x[j];
  }
  for (double& v : mean) v /= nd;

  // Second and fourth centred product moments, upper triangle.
  std::vector<double> s2(d * d, 0.0), s4(d * d, 0.0);
  std::vector<double> c(d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = samples.row(i);
    for (std::size_t j = 0; j < d; ++j) c[j] = x[j] - mean[j];
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t k = j; k < d; ++k) {
        const double p = c[j] * c[k];
        s2[j * d + k] += p;
        s4[j * d + k] += p * p;
      }
    }
  }

  MomentReport rep;
  const auto target_mean = target.mixture_mean();
  const auto target_cov = target.mixture_covariance();
  double gap2 = 0.0;
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    gap2 += (mean[j] - target_mean[j]) * (mean[j] - target_mean[j]);
    trace += s2[j * d + j] / (nd - 1.0);
  }
  rep.mean_gap = std::sqrt(gap2);
  // Typical norm of the sampling error of the mean.
  rep.mean_gap_se = std::sqrt(trace / nd);

  double frob2 = 0.0;
  double var_sum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t k = j; k < d; ++k) {
      const double cov = s2[j * d + k] / (nd - 1.0);
      const double second = s2[j * d + k] / nd;
      const double var = std::max(0.0, s4[j * d + k] / nd - second * second) / nd;
      const double mult = j == k ? 1.0 : 2.0;
      const double diff = cov - target_cov[j * d + k];
      frob2 += mult * diff * diff;
      var_sum += mult * var;
    }
  }
  rep.cov_gap = std::sqrt(frob2);
  rep.cov_gap_se = std::sqrt(var_sum);

  std::vector<double> occ(K, 0.0), occ2(K, 0.0), post(K);
  for (std::size_t i = 0; i < n; ++i) {
    target.posterior_weights(samples.row(i), post);
    for (std::size_t k = 0; k < K; ++k) {
      occ[k] += post[k];
      occ2[k] += post[k] * post[k];
    }
  }
  rep.occupancy.resize(K);
  rep.occupancy_se.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double m1 = occ[k] / nd;
    rep.occupancy[k] = m1;
    rep.occupancy_se[k] = std::sqrt(std::max(0.0, occ2[k] / nd - m1 * m1) / nd);
  }
  rep.weights.assign(target.weights().begin(), target.weights().end());
  return rep;
}

RateFit fit_rate(std::vector<std::pair<double, double>> points) {
  std::sort(points.begin(), points.end());
  for (const auto& [T, tv] : points) {
    if (!(T > 0.0) || !(tv > 0.0)) throw Error(ErrorCode::kNonPositiveEstimate, "rate fit needs positive T and TV");
  }
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].first == points[i - 1].first) throw Error(ErrorCode::kTooFewPoints, "rate fit needs distinct T values");
  }
  if (points.size() < 4) throw Error(ErrorCode::kTooFewPoints, "rate fit needs at least four T values");
  std::vector<double> lx, ly;
  for (const auto& [T, tv] : points) {
    lx.push_back(std::log(T));
    ly.push_back(std::log(tv));
  }
  const LinearFit lin = fit_linear(lx, ly);
  return {std::exp(lin.intercept), -lin.slope, lin.r2};
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kDimensionMismatch, "fit needs paired values");
  if (x.size() < 2) throw Error(ErrorCode::kTooFewPoints, "fit needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw Error(ErrorCode::kTooFewPoints, "fit needs at least two distinct x values");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.intercept + fit.slope * x[i]);
    ss_res += r * r;
  }
  fit.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Upper tail of Student's t via the regularized incomplete beta continued fraction.
double incomplete_beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-14;
  constexpr double kTiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double regularized_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * incomplete_beta_cf(a, b, x) / a;
  return 1.0 - front * incomplete_beta_cf(b, a, 1.0 - x) / b;
}

double student_t_upper(double t, double dof) {
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * regularized_beta(0.5 * dof, 0.5, x);
  return t >= 0.0 ? tail : 1.0 - tail;
}

}  // namespace

RankCorrelation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kDimensionMismatch, "rank correlation needs paired values");
  if (x.size() < 3) throw Error(ErrorCode::kTooFewPoints, "rank correlation needs at least three points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  RankCorrelation out;
  out.rho = pearson(rx, ry);
  const std::size_t n = x.size();
  if (n <= 8) {
    std::vector<double> perm = ry;
    std::sort(perm.begin(), perm.end());
    std::size_t total = 0, hits = 0;
    do {
      ++total;
      if (pearson(rx, perm) >= out.rho - 1e-12) ++hits;
    } while (std::next_permutation(perm.begin(), perm.end()));
    out.p_greater = static_cast<double>(hits) / static_cast<double>(total);
  } else {
    const double dof = static_cast<double>(n) - 2.0;
    const double r = std::clamp(out.rho, -0.999999999999, 0.999999999999);
    out.p_greater = student_t_upper(r * std::sqrt(dof / (1.0 - r * r)), dof);
  }
  return out;
}

}  // namespace gmmddpm
