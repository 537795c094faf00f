// Acceptance checks, one per criterion. Each run prints a single line
//   criterion N: PASS|FAIL  <measured values and thresholds>
// and exits non-zero on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/experiment.hpp"
#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/metrics.hpp"
#include "gmmddpm/probes.hpp"
#include "gmmddpm/random.hpp"
#include "gmmddpm/sampler.hpp"
#include "gmmddpm/schedule.hpp"
#include "gmmddpm/score_oracle.hpp"

namespace {

using namespace gmmddpm;

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, std::string note) {
    pass = pass && ok;
    notes.push_back(std::move(note));
  }
};

std::string config_path(const std::string& name) { return std::string(GMMDDPM_CONFIG_DIR) + "/" + name; }

// Random mixture with d <= 6, K <= 8, means spread over a few units.
GaussianMixture random_mixture(Rng& rng) {
  const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform() * 6);
  const std::size_t K = 1 + static_cast<std::size_t>(rng.uniform() * 8);
  std::vector<double> w(K);
  std::vector<std::vector<double>> means(K, std::vector<double>(d));
  for (std::size_t k = 0; k < K; ++k) {
    w[k] = 0.05 + rng.uniform();
    for (double& v : means[k]) v = 2.5 * rng.normal();
  }
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return GaussianMixture(std::move(w), means);
}

// Five-point central difference of f along coordinate j.
template <typename F>
double central_diff(F&& f, std::vector<double> x, std::size_t j, double h) {
  const double x0 = x[j];
  auto at = [&](double offset) {
    x[j] = x0 + offset;
    return f(x);
  };
  return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
}

Outcome criterion_1() {
  Outcome out;
  Rng rng(derive_seed(101, StreamTag::kMisc));
  double worst_score = 0.0;
  double worst_trace = 0.0;
  const double h = 1e-3;
  for (int instance = 0; instance < 50; ++instance) {
    const GaussianMixture base = random_mixture(rng);
    const double ab = 0.01 + 0.98 * rng.uniform();
    const GaussianMixture g = base.diffused(ab);
    const std::size_t d = g.dim();
    for (int p = 0; p < 20; ++p) {
      std::vector<double> x(d);
      g.draw(rng, x);
      if (p % 4 == 0) {
        for (double& v : x) v += 2.0 * rng.normal();
      }
      const auto s = g.score(x);
      double err = 0.0;
      double norm = 0.0;
      double div = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double fd = central_diff([&](const std::vector<double>& y) { return g.log_density(y); }, x, j, h);
        err += (fd - s[j]) * (fd - s[j]);
        norm += s[j] * s[j];
        div += central_diff([&](const std::vector<double>& y) { return g.score(y)[j]; }, x, j, h);
      }
      worst_score = std::max(worst_score, std::sqrt(err / norm));
      worst_trace = std::max(worst_trace, std::abs(g.jacobian_trace(x) - (div + static_cast<double>(d))));
    }
  }
  out.check(worst_score < 1e-5, fmt::format("max score rel err {:.2e} (< 1e-5)", worst_score));
  out.check(worst_trace < 1e-4, fmt::format("max trace abs err {:.2e} (< 1e-4)", worst_trace));
  return out;
}

Outcome criterion_2() {
  Outcome out;
  for (std::size_t T : {16u, 64u, 256u, 1024u}) {
    const auto s = build_schedule(T, 2.0, 10.0);
    const double Td = static_cast<double>(T);
    const double step_bound = 10.0 * std::log(Td) / Td;
    double worst = 0.0;
    bool ok = true;
    for (std::size_t t = 2; t <= T; ++t) {
      ok = ok && s.one_minus_alpha(t) <= step_bound;
      worst = std::max(worst, s.one_minus_alpha(t) / step_bound);
    }
    const double first_bound = std::pow(Td, -10.0 / 4.0);
    const bool first_ok = s.one_minus_alpha(1) <= first_bound;
    const bool valid = validate_schedule(s).ok;
    out.check(ok && first_ok && valid,
              fmt::format("T={} max (1-a_t)/bound {:.4f}, (1-a_1)/T^(-c1/4) {:.2e}, validator {}", T, worst,
                          s.one_minus_alpha(1) / first_bound, valid ? "ok" : "violations"));
  }
  return out;
}

Outcome criterion_3() {
  Outcome out;
  const std::size_t T = 64;
  const std::size_t n = 100000;
  const auto sched = build_schedule(T);
  double worst = 0.0;
  for (std::size_t d : {1u, 4u, 16u}) {
    std::vector<double> mu(d, 0.0);
    mu[0] = 3.0;
    const GaussianMixture g({1.0}, std::vector<std::vector<double>>{mu});
    const auto oracle = exact_oracle(g, sched);
    const auto traj = ddpm_sample(*oracle, sched, d, n, 303 + d, SnapshotPolicy::halving(T), 0);
    const auto moments = gaussian_moment_oracle(mu, sched);
    const double nn = static_cast<double>(n);
    for (const auto& snap : traj.snapshots) {
      const auto& ref = moments[T - snap.t];
      for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += snap.batch.row(i)[j];
        mean /= nn;
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += std::pow(snap.batch.row(i)[j] - mean, 2);
        var /= nn - 1.0;
        const double z_mean = std::abs(mean - ref.mean[j]) / std::sqrt(ref.variance / nn);
        const double z_var = std::abs(var - ref.variance) / (ref.variance * std::sqrt(2.0 / (nn - 1.0)));
        worst = std::max({worst, z_mean, z_var});
      }
    }
  }
  out.check(worst < 5.0, fmt::format("max |z| over steps, coordinates, mean and variance {:.2f} (< 5)", worst));
  return out;
}

ExperimentReport sweep(const std::string& cfg, unsigned threads) {
  RunOptions options;
  options.threads = threads;
  return run_sweep(parse_config(config_path(cfg)), options);
}

Outcome criterion_4() {
  Outcome out;
  const auto report = sweep("rate_T.cfg", 0);
  out.check(!report.any_failed(), "all cells ran");
  const auto& fit = report.fits.at("T").at(0);
  const double b = fit.at("b");
  const double r2 = fit.at("r2");
  const auto& last = fit.at("points").back();
  const double ratio = last.at(1).get<double>() / last.at(2).get<double>();
  out.check(b >= 0.8, fmt::format("b {:.3f} (>= 0.8)", b));
  out.check(r2 >= 0.9, fmt::format("r2 {:.3f} (>= 0.9)", r2));
  out.check(ratio <= 2.0, fmt::format("TV(512) {:.4f} / null floor {:.4f} = {:.2f} (<= 2)", last.at(1).get<double>(),
                                      last.at(2).get<double>(), ratio));
  return out;
}

Outcome spread_check(const std::string& cfg, const char* axis) {
  Outcome out;
  const auto report = sweep(cfg, 0);
  out.check(!report.any_failed(), "all cells ran");
  const auto& fit = report.fits.at(axis).at(0);
  std::string values;
  for (const auto& p : fit.at("points")) values += fmt::format(" {}:{:.4f}", p.at(0).get<double>(), p.at(1).get<double>());
  out.check(fit.at("ratio").get<double>() < 2.0,
            fmt::format("TV by {}{}; max/min {:.3f} (< 2)", axis, values, fit.at("ratio").get<double>()));
  if (std::string(axis) == "d") {
    const double p = fit.at("spearman_p_greater");
    out.check(p >= 0.05, fmt::format("spearman rho {:.3f}, one-sided p {:.3f} (>= 0.05)",
                                     fit.at("spearman_rho").get<double>(), p));
  }
  return out;
}

Outcome criterion_7() {
  Outcome out;
  const auto report = sweep("score_error.cfg", 0);
  out.check(!report.any_failed(), "all cells ran");
  const auto& fit = report.fits.at("amplitude").at(0);
  std::string values;
  for (const auto& p : fit.at("points")) {
    values += fmt::format(" a={}:eps={:.4f},tv={:.4f}", p.at(0).get<double>(), p.at(1).get<double>(),
                          p.at(2).get<double>());
  }
  out.check(fit.at("nondecreasing").get<bool>(), fmt::format("TV nondecreasing in a;{}", values));
  out.check(fit.at("slope").get<double>() > 0.0, fmt::format("slope {:.4f} (> 0)", fit.at("slope").get<double>()));
  out.check(fit.at("r2").get<double>() >= 0.7, fmt::format("r2 {:.3f} (>= 0.7)", fit.at("r2").get<double>()));
  return out;
}

Outcome criterion_8() {
  Outcome out;
  const auto report = sweep("contamination.cfg", 0);
  out.check(!report.any_failed(), "all cells ran");
  const auto& fit = report.fits.at("delta").at(0);
  double excess = 0.0;
  std::string values;
  for (const auto& p : fit.at("points")) {
    values += fmt::format(" delta={}:tv={:.4f}", p.at(0).get<double>(), p.at(1).get<double>());
    if (p.at(0).get<double>() == 0.05) excess = p.at(2);
  }
  out.check(excess <= 0.15, fmt::format("baseline {:.4f};{}; excess at 0.05 {:.4f} (<= 0.15)",
                                        fit.at("baseline").get<double>(), values, excess));
  return out;
}

Outcome criterion_9() {
  Outcome out;
  // (a) identities on random (t, x).
  {
    Rng rng(derive_seed(909, StreamTag::kMisc));
    const auto sched = build_schedule(64);
    double worst_sum = 0.0;
    double worst_jensen = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const GaussianMixture g = random_mixture(rng);
      const std::size_t t = 1 + static_cast<std::size_t>(rng.uniform() * 64);
      const GaussianMixture m = g.diffused(sched.alpha_bar(t));
      std::vector<double> x(g.dim());
      m.draw(rng, x);
      const auto z = zeta(g, sched, t, x);
      const auto pi = m.posterior_weights(x).values;
      const auto score = m.score(x);
      const double a = sched.alpha(t);
      const double om = sched.one_minus_alpha(t);
      // Rounding in sum pi zeta is relative to the terms that cancel inside each zeta_k.
      std::vector<double> centre(g.dim(), 0.0);
      for (std::size_t k = 0; k < z.size(); ++k) {
        for (std::size_t j = 0; j < g.dim(); ++j) centre[j] += pi[k] * m.mean(k)[j];
      }
      double snorm = 0.0;
      for (double v : score) snorm += v * v;
      snorm = std::sqrt(snorm);
      double sum = 0.0;
      double scale = 0.0;
      double jensen = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) {
        double q = 0.0;
        double shift = 0.0;
        for (std::size_t j = 0; j < g.dim(); ++j) {
          q += std::pow(x[j] - m.mean(k)[j], 2);
          shift += std::pow(centre[j] - m.mean(k)[j], 2);
        }
        sum += pi[k] * z[k];
        scale += pi[k] * (om * (1 + a) / (2 * a * a) * q + om / (a * a) * snorm * std::sqrt(shift));
        jensen += pi[k] * std::exp(-z[k]);
      }
      if (scale > 0.0) worst_sum = std::max(worst_sum, std::abs(sum) / scale);
      worst_jensen = std::max(worst_jensen, 1.0 - jensen);
    }
    out.check(worst_sum < 1e-9, fmt::format("(a) max |sum pi zeta| relative to its terms {:.1e} (< 1e-9)", worst_sum));
    out.check(worst_jensen <= 1e-12, fmt::format("(a) min jensen sum 1 - {:.1e} (>= 1 up to rounding)", worst_jensen));
  }
  // (b)-(d) on the geometry of the dimension sweep.
  const auto spec = parse_config(config_path("dimension.cfg"));
  const std::size_t T = spec.T.front();
  const std::size_t K = spec.K.front();
  const auto sched = build_schedule(T, spec.c0, spec.c1);
  const std::uint64_t seed = derive_seed(spec.seed, StreamTag::kProbe);
  double worst_ratio = 0.0;
  double worst_typical = 0.0;
  double worst_tweedie = 0.0;
  for (std::size_t d : spec.d) {
    const GaussianMixture g = build_target_gmm(spec, K, d);
    for (std::size_t t : SnapshotPolicy::halving(T).steps) {
      worst_ratio = std::max(worst_ratio, trace_quantiles(g, sched, t, 100000, seed, 0).ratio_to_log_kt);
      worst_typical = std::max(worst_typical, typical_set_probability(g, sched, t, 100000, 8.0, 8.0, seed, 0).estimate);
      worst_tweedie = std::max(worst_tweedie, tweedie_bound_check(g, sched, t, 100000, 4.0, seed, 0).estimate);
    }
  }
  out.check(worst_ratio <= 10.0, fmt::format("(b) max trace q0.999 / log(KT) {:.4f} (<= 10)", worst_ratio));
  out.check(worst_typical < 1e-3, fmt::format("(c) max typical-set violation {:.1e} (< 1e-3)", worst_typical));
  out.check(worst_tweedie < 1e-3, fmt::format("(d) max clip violation {:.1e} (< 1e-3)", worst_tweedie));
  return out;
}

Outcome criterion_10() {
  Outcome out;
  const auto one = report_csv(sweep("rate_T.cfg", 1));
  const auto three = report_csv(sweep("rate_T.cfg", 3));
  out.check(one == three, fmt::format("rate sweep CSV with 1 and 3 threads {} ({} bytes)",
                                      one == three ? "identical" : "differs", one.size()));
  return out;
}

struct Criterion {
  std::function<Outcome()> run;
  double budget_seconds;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> which;
  app.add_option("--criterion", which, "criterion numbers 1-10 (default: all)")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) {
    for (int i = 1; i <= 10; ++i) which.push_back(i);
  }

  const std::vector<Criterion> criteria = {
      {criterion_1, 10},
      {criterion_2, 1},
      {criterion_3, 60},
      {criterion_4, 900},
      {[] { return spread_check("dimension.cfg", "d"); }, 600},
      {[] { return spread_check("components.cfg", "K"); }, 600},
      {criterion_7, 600},
      {criterion_8, 300},
      {criterion_9, 300},
      {criterion_10, 1800},
  };
  bool all_pass = true;
  for (int i : which) {
    const auto& c = criteria[static_cast<std::size_t>(i - 1)];
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.check(false, fmt::format("error: {}", e.what()));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.check(seconds < c.budget_seconds, fmt::format("{:.1f}s (< {}s)", seconds, c.budget_seconds));

    std::string line = fmt::format("criterion {}: {}", i, out.pass ? "PASS" : "FAIL");
    for (std::size_t k = 0; k < out.notes.size(); ++k) line += (k ? "; " : "  ") + out.notes[k];
    std::puts(line.c_str());
    std::fflush(stdout);
    all_pass = all_pass && out.pass;
  }
  return all_pass ? 0 : 1;
}
