#include "gmmddpm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/io.hpp"
#include "gmmddpm/kv_document.hpp"
#include "gmmddpm/metrics.hpp"
#include "gmmddpm/random.hpp"
#include "gmmddpm/sampler.hpp"
#include "gmmddpm/schedule.hpp"
#include "gmmddpm/score_oracle.hpp"
#include "gmmddpm/target.hpp"

namespace gmmddpm {

std::string_view to_string(Placement placement) {
  switch (placement) {
    case Placement::kSimplex: return "simplex";
    case Placement::kRandomBall: return "random-ball";
    case Placement::kRandomSphere: return "random-sphere";
  }
  return "simplex";
}

namespace {

const std::set<std::string, std::less<>> kMetricNames{"sliced_tv", "null_floor", "mmd", "moments", "score_error"};
const std::set<std::string, std::less<>> kProbeNames{"typical_set", "trace_quantiles", "tweedie"};

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::kValidationError, message); }

[[noreturn]] void bad_field(const KvEntry& e, std::string_view expected) {
  throw Error(ErrorCode::kParseError, fmt::format("line {}: field `{}`: expected {}", e.line, e.key, expected));
}

template <typename V>
V get_as(const KvEntry& e, std::string_view expected) {
  try {
    return e.value.get<V>();
  } catch (const nlohmann::json::exception&) {
    bad_field(e, expected);
  }
}

std::size_t get_count(const KvEntry& e) {
  if (e.value.is_number_integer() && e.value.get<long long>() >= 0) return e.value.get<std::size_t>();
  // Allow 1e5 style counts as long as they are whole numbers.
  if (e.value.is_number_float()) {
    const double v = e.value.get<double>();
    if (v >= 0.0 && v == std::floor(v) && v < 1e15) return static_cast<std::size_t>(v);
  }
  bad_field(e, "a nonnegative integer");
}

double get_number(const KvEntry& e) {
  if (!e.value.is_number()) bad_field(e, "a number");
  return e.value.get<double>();
}

bool get_bool(const KvEntry& e) {
  if (!e.value.is_boolean()) bad_field(e, "true or false");
  return e.value.get<bool>();
}

std::string get_string(const KvEntry& e) {
  if (!e.value.is_string()) bad_field(e, "a string");
  return e.value.get<std::string>();
}

// A scalar is read as a one-element list.
std::vector<std::size_t> get_count_list(const KvEntry& e) {
  std::vector<std::size_t> out;
  if (!e.value.is_array()) return {get_count(e)};
  for (const auto& v : e.value) out.push_back(get_count(KvEntry{e.key, v, e.line}));
  return out;
}

std::vector<double> get_number_list(const KvEntry& e) {
  std::vector<double> out;
  if (!e.value.is_array()) return {get_number(e)};
  for (const auto& v : e.value) out.push_back(get_number(KvEntry{e.key, v, e.line}));
  return out;
}

std::vector<std::string> get_string_list(const KvEntry& e) {
  std::vector<std::string> out;
  if (!e.value.is_array()) return {get_string(e)};
  for (const auto& v : e.value) out.push_back(get_string(KvEntry{e.key, v, e.line}));
  return out;
}

Placement parse_placement(const KvEntry& e) {
  const std::string s = get_string(e);
  if (s == "simplex") return Placement::kSimplex;
  if (s == "random-ball") return Placement::kRandomBall;
  if (s == "random-sphere") return Placement::kRandomSphere;
  bad_field(e, "simplex, random-ball or random-sphere");
}

double simplex_radius(double scale, std::size_t K) {
  return scale * std::sqrt(static_cast<double>(K - 1) / (2.0 * static_cast<double>(K)));
}

}  // namespace

ExperimentSpec parse_config_text(std::string_view text, const std::string& base_dir) {
  const KvDocument doc = KvDocument::parse(text);
  ExperimentSpec spec;
  bool have_seed = false;
  bool have_d = false;
  bool have_K = false;
  for (const KvEntry& e : doc.entries()) {
    const std::string& k = e.key;
    if (k == "seed") {
      if (!e.value.is_number_unsigned()) bad_field(e, "an unsigned 64-bit integer");
      spec.seed = e.value.get<std::uint64_t>();
      have_seed = true;
    } else if (k == "n") {
      spec.n = get_count(e);
    } else if (k == "T") {
      spec.T = get_count_list(e);
    } else if (k == "d") {
      spec.d = get_count_list(e);
      have_d = true;
    } else if (k == "K") {
      spec.K = get_count_list(e);
      have_K = true;
    } else if (k == "amplitude") {
      spec.amplitude = get_number_list(e);
    } else if (k == "delta") {
      spec.delta = get_number_list(e);
    } else if (k == "target.file") {
      std::filesystem::path p(get_string(e));
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      spec.target.file = std::filesystem::absolute(p).lexically_normal().string();
    } else if (k == "target.weights") {
      spec.target.weights = get_as<std::vector<double>>(e, "a list of numbers");
    } else if (k == "target.means") {
      spec.target.means = get_as<std::vector<std::vector<double>>>(e, "a list of coordinate lists");
    } else if (k == "target.placement") {
      spec.target.placement = parse_placement(e);
    } else if (k == "target.scale") {
      spec.target.scale = get_number(e);
    } else if (k == "target.c_R") {
      spec.target.c_R = get_number(e);
    } else if (k == "contaminant.scale") {
      spec.target.contaminant_scale = get_number(e);
    } else if (k == "schedule.c0") {
      spec.c0 = get_number(e);
    } else if (k == "schedule.c1") {
      spec.c1 = get_number(e);
    } else if (k == "oracle.kind") {
      spec.oracle.kind = get_string(e);
    } else if (k == "oracle.clip") {
      spec.oracle.clip = get_bool(e);
    } else if (k == "oracle.C_clip") {
      spec.oracle.c_clip = get_number(e);
    } else if (k == "metrics") {
      spec.metrics.names = get_string_list(e);
    } else if (k == "metrics.projections") {
      spec.metrics.projections = get_count(e);
    } else if (k == "metrics.bins") {
      spec.metrics.bins = get_count(e);
    } else if (k == "metrics.mean_pairs") {
      spec.metrics.mean_pairs = get_bool(e);
    } else if (k == "metrics.mmd_n") {
      spec.metrics.mmd_n = get_count(e);
    } else if (k == "metrics.score_error_n") {
      spec.metrics.score_error_n = get_count(e);
    } else if (k == "probes") {
      spec.probes.names = e.value.is_array() && e.value.empty() ? std::vector<std::string>{} : get_string_list(e);
    } else if (k == "probes.n") {
      spec.probes.n = get_count(e);
    } else if (k == "probes.C1") {
      spec.probes.c1 = get_number(e);
    } else if (k == "probes.C2") {
      spec.probes.c2 = get_number(e);
    } else if (k == "probes.steps") {
      spec.probes.steps = e.value.is_array() && e.value.empty() ? std::vector<std::size_t>{} : get_count_list(e);
    } else {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: unknown field `{}`", e.line, k));
    }
  }
  if (!have_seed) invalid("`seed` is required; runs never default to a wall-clock seed");

  // Explicit mixtures fix K and d.
  if (!spec.target.file.empty() || !spec.target.means.empty()) {
    if (!spec.target.file.empty() && !spec.target.means.empty()) invalid("give either target.file or target.means");
    GaussianMixture gmm = spec.target.file.empty() ? GaussianMixture(spec.target.weights, spec.target.means)
                                                   : load_gmm_file(spec.target.file);
    if ((have_d && spec.d != std::vector<std::size_t>{gmm.dim()}) ||
        (have_K && spec.K != std::vector<std::size_t>{gmm.components()})) {
      invalid("d and K cannot be swept when the target mixture is given explicitly");
    }
    spec.d = {gmm.dim()};
    spec.K = {gmm.components()};
  } else if (!spec.target.weights.empty()) {
    invalid("target.weights needs target.means");
  }
  validate_spec(spec);
  return spec;
}

ExperimentSpec parse_config(const std::string& path) {
  const std::string base = std::filesystem::path(path).parent_path().string();
  return parse_config_text(read_text_file(path), base.empty() ? "." : base);
}

void validate_spec(const ExperimentSpec& spec) {
  if (spec.T.empty()) invalid("T list must be nonempty");
  if (spec.d.empty() || spec.K.empty() || spec.amplitude.empty() || spec.delta.empty()) {
    invalid("sweep lists must be nonempty");
  }
  for (std::size_t T : spec.T) {
    if (T < 2) invalid("every T must be at least 2");
  }
  for (std::size_t d : spec.d) {
    if (d < 1) invalid("every d must be at least 1");
  }
  for (std::size_t K : spec.K) {
    if (K < 1) invalid("every K must be at least 1");
  }
  if (!(spec.c0 > 0.0) || !(spec.c1 > 0.0)) invalid("schedule constants c0 and c1 must be positive");
  if (!(spec.c1 / spec.c0 > 4.0)) invalid(fmt::format("schedule needs c1/c0 > 4, got {}", spec.c1 / spec.c0));
  if (spec.n < 1) invalid("n must be at least 1");
  if (!(spec.oracle.c_clip > 0.0)) invalid("C_clip must be positive");
  if (spec.oracle.kind != "exact" && spec.oracle.kind != "gaussian-field" && spec.oracle.kind != "mean-jitter") {
    invalid(fmt::format("unknown oracle kind `{}`", spec.oracle.kind));
  }
  for (double a : spec.amplitude) {
    if (!(a >= 0.0)) invalid("amplitudes must be nonnegative");
    if (spec.oracle.kind == "exact" && a != 0.0) invalid("a nonzero amplitude needs a perturbed oracle kind");
  }
  for (double delta : spec.delta) {
    if (!(delta >= 0.0 && delta < 1.0)) invalid("delta must lie in [0, 1)");
  }
  if (!(spec.target.contaminant_scale > 0.0)) invalid("contaminant.scale must be positive");
  for (const auto& m : spec.metrics.names) {
    if (!kMetricNames.contains(m)) invalid(fmt::format("unknown metric `{}`", m));
  }
  for (const auto& p : spec.probes.names) {
    if (!kProbeNames.contains(p)) invalid(fmt::format("unknown probe `{}`", p));
  }
  if (spec.metrics.projections < 1) invalid("metrics.projections must be at least 1");
  if (spec.metrics.bins < kMinBins) invalid("metrics.bins must be at least 50");
  if (spec.metrics.mmd_n < 2) invalid("metrics.mmd_n must be at least 2");
  if (spec.metrics.score_error_n < 100) invalid("metrics.score_error_n must be at least 100");
  if (!spec.probes.names.empty() && spec.probes.n < 1000) invalid("probes.n must be at least 1000");
  if (!(spec.probes.c1 > 0.0) || !(spec.probes.c2 > 0.0)) invalid("probe constants C1 and C2 must be positive");
  for (std::size_t t : spec.probes.steps) {
    if (t < 1 || t > *std::min_element(spec.T.begin(), spec.T.end())) invalid("probe steps must lie in 1..min(T)");
  }
  if (!(spec.target.scale >= 0.0)) invalid("target.scale must be nonnegative");
  if (!(spec.target.c_R > 0.0)) invalid("target.c_R must be positive");

  // Mean norms may grow at most polynomially in T: |mu_k| <= T^c_R for every swept T.
  const double cap = std::pow(static_cast<double>(*std::min_element(spec.T.begin(), spec.T.end())), spec.target.c_R);
  double largest = 0.0;
  if (!spec.target.means.empty()) {
    largest = GaussianMixture(spec.target.weights, spec.target.means).max_mean_norm();
  } else if (!spec.target.file.empty()) {
    largest = load_gmm_file(spec.target.file).max_mean_norm();
  } else {
    for (std::size_t K : spec.K) {
      const double r = spec.target.placement == Placement::kSimplex ? simplex_radius(spec.target.scale, K)
                                                                    : spec.target.scale;
      largest = std::max(largest, r);
    }
  }
  if (largest > cap) {
    invalid(fmt::format("mean norm {} exceeds the component-norm cap T^c_R = {}", largest, cap));
  }
}

std::string serialize_config(const ExperimentSpec& spec) {
  KvDocument doc;
  doc.set("seed", spec.seed);
  doc.set("n", spec.n);
  doc.set("T", spec.T);
  doc.set("d", spec.d);
  doc.set("K", spec.K);
  doc.set("amplitude", spec.amplitude);
  doc.set("delta", spec.delta);
  if (!spec.target.file.empty()) doc.set("target.file", spec.target.file);
  if (!spec.target.means.empty()) {
    doc.set("target.weights", spec.target.weights);
    doc.set("target.means", spec.target.means);
  }
  doc.set("target.placement", std::string(to_string(spec.target.placement)));
  doc.set("target.scale", spec.target.scale);
  doc.set("target.c_R", spec.target.c_R);
  doc.set("contaminant.scale", spec.target.contaminant_scale);
  doc.set("schedule.c0", spec.c0);
  doc.set("schedule.c1", spec.c1);
  doc.set("oracle.kind", spec.oracle.kind);
  doc.set("oracle.clip", spec.oracle.clip);
  doc.set("oracle.C_clip", spec.oracle.c_clip);
  doc.set("metrics", spec.metrics.names);
  doc.set("metrics.projections", spec.metrics.projections);
  doc.set("metrics.bins", spec.metrics.bins);
  doc.set("metrics.mean_pairs", spec.metrics.mean_pairs);
  doc.set("metrics.mmd_n", spec.metrics.mmd_n);
  doc.set("metrics.score_error_n", spec.metrics.score_error_n);
  doc.set("probes", spec.probes.names);
  doc.set("probes.n", spec.probes.n);
  doc.set("probes.C1", spec.probes.c1);
  doc.set("probes.C2", spec.probes.c2);
  doc.set("probes.steps", spec.probes.steps);
  return doc.serialize();
}

std::string config_hash(const ExperimentSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_config(spec)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

GaussianMixture build_target_gmm(const ExperimentSpec& spec, std::size_t K, std::size_t d) {
  if (!spec.target.means.empty()) return GaussianMixture(spec.target.weights, spec.target.means);
  if (!spec.target.file.empty()) return load_gmm_file(spec.target.file);
  std::vector<double> weights(K, 1.0 / static_cast<double>(K));
  std::vector<double> means(K * d, 0.0);
  switch (spec.target.placement) {
    case Placement::kSimplex: {
      // Helmert coordinates of the regular simplex e_k - 1/K, scaled to pairwise distance `scale`.
      const double s = spec.target.scale / std::sqrt(2.0);
      const std::size_t used = std::min(K - 1, d);
      for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t j = 1; j <= used; ++j) {
          const double norm = std::sqrt(static_cast<double>(j * (j + 1)));
          double c = 0.0;
          if (k < j) c = 1.0 / norm;
          else if (k == j) c = -static_cast<double>(j) / norm;
          means[k * d + (j - 1)] = s * c;
        }
      }
      break;
    }
    case Placement::kRandomBall:
    case Placement::kRandomSphere: {
      Rng rng = make_stream(spec.seed, StreamTag::kGeometry, K, d);
      for (std::size_t k = 0; k < K; ++k) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          means[k * d + j] = rng.normal();
          norm += means[k * d + j] * means[k * d + j];
        }
        norm = std::sqrt(norm);
        double radius = spec.target.scale;
        if (spec.target.placement == Placement::kRandomBall) {
          radius *= std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
        }
        for (std::size_t j = 0; j < d; ++j) means[k * d + j] *= norm > 0.0 ? radius / norm : 0.0;
      }
      break;
    }
  }
  return GaussianMixture(std::move(weights), std::move(means), d);
}

std::vector<CellCoords> expand_grid(const ExperimentSpec& spec) {
  std::vector<CellCoords> cells;
  for (std::size_t d : spec.d) {
    for (std::size_t K : spec.K) {
      for (double a : spec.amplitude) {
        for (double delta : spec.delta) {
          for (std::size_t T : spec.T) cells.push_back({T, d, K, a, delta});
        }
      }
    }
  }
  return cells;
}

const MetricValue* CellResult::find(std::string_view metric) const {
  const auto it = std::find_if(metrics.begin(), metrics.end(), [&](const MetricValue& m) { return m.metric == metric; });
  return it == metrics.end() ? nullptr : &*it;
}

bool ExperimentReport::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok; });
}

namespace {

bool wants(const std::vector<std::string>& names, std::string_view name) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

std::vector<std::size_t> halving_steps(std::size_t T) {
  std::vector<std::size_t> steps;
  for (std::size_t t = T; t >= 1; t /= 2) steps.push_back(t);
  return steps;
}

std::string oracle_label(const ExperimentSpec& spec) {
  std::string label = spec.oracle.kind;
  if (spec.oracle.clip) label += fmt::format("+clip{}", spec.oracle.c_clip);
  return label;
}

OraclePtr build_oracle(const ExperimentSpec& spec, const GaussianMixture& gmm, const NoiseSchedule& sched,
                       double amplitude) {
  OraclePtr oracle = exact_oracle(gmm, sched);
  if (spec.oracle.kind != "exact") {
    oracle = perturb_oracle(oracle, parse_perturb_model(spec.oracle.kind), amplitude,
                            derive_seed(spec.seed, StreamTag::kPerturbation));
  }
  if (spec.oracle.clip) oracle = clip_oracle(oracle, sched, gmm.dim(), spec.oracle.c_clip);
  return oracle;
}

double ci_to_se(const ProportionEstimate& p) { return (p.ci_high - p.ci_low) / (2.0 * 1.959963984540054); }

void run_probes(const ExperimentSpec& spec, const GaussianMixture& gmm, const NoiseSchedule& sched,
                const RunOptions& options, CellResult& cell) {
  const std::size_t T = sched.steps();
  const auto steps = spec.probes.steps.empty() ? halving_steps(T) : spec.probes.steps;
  const std::uint64_t probe_seed = derive_seed(spec.seed, StreamTag::kProbe);
  auto base_row = [&](std::string name, std::size_t t) {
    ProbeRow row;
    row.probe = std::move(name);
    row.t = t;
    row.K = gmm.components();
    row.d = gmm.dim();
    row.T = T;
    return row;
  };
  auto push = [&](ProbeRow row, double se) {
    cell.metrics.push_back({fmt::format("probe.{}@t={}", row.probe, row.t), row.estimate, se, spec.probes.n});
    cell.probes.push_back(std::move(row));
  };
  for (std::size_t t : steps) {
    if (wants(spec.probes.names, "typical_set")) {
      const auto p = typical_set_probability(gmm, sched, t, spec.probes.n, spec.probes.c1, spec.probes.c2,
                                             probe_seed, options.threads);
      ProbeRow row = base_row("typical_set", t);
      row.estimate = p.estimate;
      row.ci_low = p.ci_low;
      row.ci_high = p.ci_high;
      row.thresholds = {{"C1", spec.probes.c1}, {"C2", spec.probes.c2}};
      push(std::move(row), ci_to_se(p));
    }
    if (wants(spec.probes.names, "trace_quantiles")) {
      const auto q = trace_quantiles(gmm, sched, t, spec.probes.n, probe_seed, options.threads);
      ProbeRow row = base_row("trace_quantiles", t);
      row.estimate = q.ratio_to_log_kt;
      row.ci_low = q.ratio_to_log_kt;
      row.ci_high = q.ratio_to_log_kt;
      row.thresholds = {{"levels", q.levels}, {"quantiles", q.quantiles}};
      push(std::move(row), 0.0);
    }
    if (wants(spec.probes.names, "tweedie")) {
      const auto p = tweedie_bound_check(gmm, sched, t, spec.probes.n, spec.oracle.c_clip, probe_seed,
                                         options.threads);
      ProbeRow row = base_row("tweedie", t);
      row.estimate = p.estimate;
      row.ci_low = p.ci_low;
      row.ci_high = p.ci_high;
      row.thresholds = {{"C_clip", spec.oracle.c_clip}, {"threshold", clip_threshold(sched, gmm.dim(), t, spec.oracle.c_clip)}};
      push(std::move(row), ci_to_se(p));
    }
  }
}

void run_score_error(const ExperimentSpec& spec, const TargetDistribution& target, const NoiseSchedule& sched,
                     const ScoreOracle& oracle, const RunOptions& options, CellResult& cell) {
  const auto rep = measure_score_error(oracle, target, sched, spec.metrics.score_error_n,
                                       derive_seed(spec.seed, StreamTag::kScoreError), options.threads);
  const std::size_t n = spec.metrics.score_error_n;
  cell.metrics.push_back({"epsilon_score", rep.epsilon_score, 0.0, n});
  cell.metrics.push_back({"epsilon_score_gmm", rep.epsilon_score_gmm, 0.0, n});
  if (rep.epsilon_score_target) cell.metrics.push_back({"epsilon_score_target", *rep.epsilon_score_target, 0.0, n});
}

}  // namespace

CellResult run_cell(const ExperimentSpec& spec, const CellCoords& coords, std::size_t run_id,
                    const RunOptions& options) {
  CellResult cell;
  cell.run_id = run_id;
  cell.coords = coords;
  cell.oracle = oracle_label(spec);
  cell.seed = spec.seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const GaussianMixture gmm = build_target_gmm(spec, coords.K, coords.d);
    const TargetDistribution target =
        coords.delta > 0.0
            ? contaminate_target(gmm, coords.delta,
                                 IsotropicGaussian{std::vector<double>(gmm.dim(), 0.0), spec.target.contaminant_scale})
            : TargetDistribution(gmm);
    const NoiseSchedule sched = build_schedule(coords.T, spec.c0, spec.c1);

    if (options.work == CellWork::kProbesOnly) {
      run_probes(spec, gmm, sched, options, cell);
    } else {
      const OraclePtr oracle = build_oracle(spec, gmm, sched, coords.amplitude);
      if (options.work == CellWork::kScoreErrorOnly) {
        run_score_error(spec, target, sched, *oracle, options, cell);
      } else {
        const auto& names = spec.metrics.names;
        const SampleBatch out =
            ddpm_sample(*oracle, sched, gmm.dim(), spec.n, spec.seed, SnapshotPolicy::none(), options.threads).output;
        const bool need_dirs = wants(names, "sliced_tv") || wants(names, "null_floor");
        std::vector<std::vector<double>> dirs;
        if (need_dirs) {
          dirs = random_directions(gmm.dim(), spec.metrics.projections, spec.seed);
          if (spec.metrics.mean_pairs) {
            for (auto& u : mean_pair_directions(gmm)) dirs.push_back(std::move(u));
          }
        }
        if (wants(names, "sliced_tv")) {
          const auto s = sliced_tv(target, out, dirs, spec.metrics.bins, options.threads);
          cell.metrics.push_back({"sliced_tv", s.max.value, s.max.mc_error, s.max.resolution});
          cell.metrics.push_back({"sliced_tv_mean", s.mean, 0.0, s.max.resolution});
        }
        if (wants(names, "null_floor")) {
          // Same estimator on exact target draws of the same size.
          const SampleBatch ref = target.sample(spec.n, derive_seed(spec.seed, StreamTag::kNullCalibration),
                                                options.threads);
          const auto s = sliced_tv(target, ref, dirs, spec.metrics.bins, options.threads);
          cell.metrics.push_back({"sliced_tv_null", s.max.value, s.max.mc_error, s.max.resolution});
        }
        if (wants(names, "mmd")) {
          const std::size_t m = std::min(spec.metrics.mmd_n, spec.n);
          SampleBatch head(out.dim, m, out.seed, out.meta);
          std::copy_n(out.points.begin(), m * out.dim, head.points.begin());
          const SampleBatch ref = target.sample(m, derive_seed(spec.seed, StreamTag::kMisc, 1), options.threads);
          const auto est = mmd(head, ref, 0.0, options.threads);
          cell.metrics.push_back({"mmd2", est.value, est.std_error, m});
        }
        if (wants(names, "moments")) {
          const auto rep = moment_diagnostics(out, gmm);
          cell.metrics.push_back({"mean_gap", rep.mean_gap, rep.mean_gap_se, spec.n});
          cell.metrics.push_back({"cov_gap", rep.cov_gap, rep.cov_gap_se, spec.n});
          for (std::size_t k = 0; k < rep.occupancy.size(); ++k) {
            cell.metrics.push_back({fmt::format("occupancy_{}", k), rep.occupancy[k], rep.occupancy_se[k], spec.n});
          }
        }
        if (wants(names, "score_error")) run_score_error(spec, target, sched, *oracle, options, cell);
        if (!spec.probes.names.empty()) run_probes(spec, gmm, sched, options, cell);
      }
    }
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = fmt::format("cell T={} d={} K={} amplitude={} delta={}: {}", coords.T, coords.d, coords.K,
                             coords.amplitude, coords.delta, e.what());
  }
  cell.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return cell;
}

ExperimentReport run_sweep(const ExperimentSpec& spec, const RunOptions& options) {
  validate_spec(spec);
  ExperimentReport report;
  report.spec = spec;
  report.config_hash = config_hash(spec);
  const auto grid = expand_grid(spec);
  // Cells run one after another; each one spreads its chains over the workers.
  for (std::size_t i = 0; i < grid.size(); ++i) {
    report.cells.push_back(run_cell(spec, grid[i], i, options));
    if (options.on_cell) options.on_cell(report.cells.back());
  }
  report.fits = compute_fits(spec, report.cells);
  return report;
}

namespace {

double metric_or_nan(const CellResult& c, std::string_view name) {
  const MetricValue* m = c.find(name);
  return m == nullptr ? std::numeric_limits<double>::quiet_NaN() : m->value;
}

nlohmann::json coords_json(const CellCoords& c) {
  return {{"T", c.T}, {"d", c.d}, {"K", c.K}, {"amplitude", c.amplitude}, {"delta", c.delta}};
}

// Groups cells that agree on every coordinate except the one named.
template <typename Key>
std::vector<std::vector<const CellResult*>> group_by_other(const std::vector<CellResult>& cells, Key key) {
  std::vector<std::vector<const CellResult*>> groups;
  std::vector<nlohmann::json> keys;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const nlohmann::json k = key(c.coords);
    const auto it = std::find(keys.begin(), keys.end(), k);
    if (it == keys.end()) {
      keys.push_back(k);
      groups.push_back({&c});
    } else {
      groups[static_cast<std::size_t>(it - keys.begin())].push_back(&c);
    }
  }
  return groups;
}

nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json compute_fits(const ExperimentSpec& spec, const std::vector<CellResult>& cells) {
  nlohmann::json fits = nlohmann::json::object();
  constexpr std::string_view kTv = "sliced_tv";

  if (spec.T.size() >= 2) {
    auto& out = fits["T"] = nlohmann::json::array();
    for (const auto& g : group_by_other(cells, [](const CellCoords& c) {
           return nlohmann::json{c.d, c.K, c.amplitude, c.delta};
         })) {
      nlohmann::json entry = {{"d", g[0]->coords.d}, {"K", g[0]->coords.K},
                              {"amplitude", g[0]->coords.amplitude}, {"delta", g[0]->coords.delta}};
      std::vector<std::pair<double, double>> pts;
      nlohmann::json points = nlohmann::json::array();
      for (const auto* c : g) {
        const double tv = metric_or_nan(*c, kTv);
        pts.emplace_back(static_cast<double>(c->coords.T), tv);
        points.push_back({c->coords.T, json_number(tv), json_number(metric_or_nan(*c, "sliced_tv_null"))});
      }
      entry["points"] = points;
      try {
        const RateFit f = fit_rate(pts);
        entry["a"] = f.a;
        entry["b"] = f.b;
        entry["r2"] = f.r2;
      } catch (const std::exception& e) {
        entry["error"] = e.what();
      }
      out.push_back(entry);
    }
  }

  auto spread = [&](const char* axis, auto coord, auto other) {
    auto& out = fits[axis] = nlohmann::json::array();
    for (const auto& g : group_by_other(cells, other)) {
      std::vector<double> xs, ys;
      nlohmann::json points = nlohmann::json::array();
      for (const auto* c : g) {
        const double tv = metric_or_nan(*c, kTv);
        xs.push_back(static_cast<double>(coord(c->coords)));
        ys.push_back(tv);
        points.push_back({coord(c->coords), json_number(tv)});
      }
      nlohmann::json entry = {{"fixed", coords_json(g[0]->coords)}, {"points", points}};
      entry["fixed"].erase(axis);
      const bool finite = std::all_of(ys.begin(), ys.end(), [](double v) { return std::isfinite(v); });
      if (finite && !ys.empty()) {
        const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
        entry["min"] = *lo;
        entry["max"] = *hi;
        entry["ratio"] = *lo > 0.0 ? nlohmann::json(*hi / *lo) : nlohmann::json(nullptr);
        if (xs.size() >= 3) {
          const auto rc = spearman(xs, ys);
          entry["spearman_rho"] = rc.rho;
          entry["spearman_p_greater"] = rc.p_greater;
        }
      }
      out.push_back(entry);
    }
  };
  if (spec.d.size() >= 2) {
    spread("d", [](const CellCoords& c) { return c.d; },
           [](const CellCoords& c) { return nlohmann::json{c.T, c.K, c.amplitude, c.delta}; });
  }
  if (spec.K.size() >= 2) {
    spread("K", [](const CellCoords& c) { return c.K; },
           [](const CellCoords& c) { return nlohmann::json{c.T, c.d, c.amplitude, c.delta}; });
  }

  if (spec.amplitude.size() >= 2) {
    auto& out = fits["amplitude"] = nlohmann::json::array();
    for (const auto& g : group_by_other(cells, [](const CellCoords& c) {
           return nlohmann::json{c.T, c.d, c.K, c.delta};
         })) {
      std::vector<double> eps, tvs;
      nlohmann::json points = nlohmann::json::array();
      bool nondecreasing = true;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double tv = metric_or_nan(*g[i], kTv);
        const double e = metric_or_nan(*g[i], "epsilon_score");
        points.push_back({g[i]->coords.amplitude, json_number(e), json_number(tv)});
        if (i > 0 && !(tv >= metric_or_nan(*g[i - 1], kTv))) nondecreasing = false;
        eps.push_back(e);
        tvs.push_back(tv);
      }
      nlohmann::json entry = {{"fixed", coords_json(g[0]->coords)}, {"points", points},
                              {"nondecreasing", nondecreasing}};
      entry["fixed"].erase("amplitude");
      const bool finite = std::all_of(eps.begin(), eps.end(), [](double v) { return std::isfinite(v); }) &&
                          std::all_of(tvs.begin(), tvs.end(), [](double v) { return std::isfinite(v); });
      if (finite) {
        try {
          const LinearFit f = fit_linear(eps, tvs);
          entry["slope"] = f.slope;
          entry["intercept"] = f.intercept;
          entry["r2"] = f.r2;
        } catch (const std::exception& e) {
          entry["error"] = e.what();
        }
      }
      out.push_back(entry);
    }
  }

  if (spec.delta.size() >= 2) {
    auto& out = fits["delta"] = nlohmann::json::array();
    for (const auto& g : group_by_other(cells, [](const CellCoords& c) {
           return nlohmann::json{c.T, c.d, c.K, c.amplitude};
         })) {
      nlohmann::json entry = {{"fixed", coords_json(g[0]->coords)}};
      entry["fixed"].erase("delta");
      double baseline = std::numeric_limits<double>::quiet_NaN();
      for (const auto* c : g) {
        if (c->coords.delta == 0.0) baseline = metric_or_nan(*c, kTv);
      }
      nlohmann::json points = nlohmann::json::array();
      for (const auto* c : g) {
        const double tv = metric_or_nan(*c, kTv);
        points.push_back({c->coords.delta, json_number(tv), json_number(tv - baseline)});
      }
      entry["baseline"] = json_number(baseline);
      entry["points"] = points;
      out.push_back(entry);
    }
  }
  return fits;
}

namespace {

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

}  // namespace

std::string report_csv(const ExperimentReport& report) {
  std::string out = "run_id,T,d,K,oracle,amplitude,delta,metric,value,mc_error,resolution,seed\n";
  for (const auto& c : report.cells) {
    const std::string prefix = fmt::format("{},{},{},{},{},{},{}", c.run_id, c.coords.T, c.coords.d, c.coords.K,
                                           c.oracle, csv_number(c.coords.amplitude), csv_number(c.coords.delta));
    if (!c.ok) {
      out += fmt::format("{},failed,nan,nan,0,{}\n", prefix, c.seed);
      continue;
    }
    for (const auto& m : c.metrics) {
      out += fmt::format("{},{},{},{},{},{}\n", prefix, m.metric, csv_number(m.value), csv_number(m.mc_error),
                         m.resolution, c.seed);
    }
  }
  return out;
}

nlohmann::json report_json(const ExperimentReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : report.cells) {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& m : c.metrics) {
      metrics[m.metric] = {{"value", json_number(m.value)}, {"mc_error", json_number(m.mc_error)},
                           {"resolution", m.resolution}};
    }
    nlohmann::json probes = nlohmann::json::array();
    for (const auto& p : c.probes) probes.push_back(to_json(p));
    nlohmann::json cell = {{"run_id", c.run_id},   {"coords", coords_json(c.coords)},
                           {"oracle", c.oracle},   {"seed", c.seed},
                           {"config_hash", report.config_hash}, {"status", c.ok ? "ok" : "failed"},
                           {"metrics", metrics},   {"probes", probes}};
    if (!c.ok) cell["error"] = c.error;
    cells.push_back(std::move(cell));
  }
  return {{"config", serialize_config(report.spec)},
          {"config_hash", report.config_hash},
          {"seed", report.spec.seed},
          {"cells", cells},
          {"fits", report.fits}};
}

nlohmann::json timing_json(const ExperimentReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  double total = 0.0;
  for (const auto& c : report.cells) {
    cells.push_back({{"run_id", c.run_id}, {"wall_seconds", c.wall_seconds}});
    total += c.wall_seconds;
  }
  return {{"config_hash", report.config_hash}, {"total_seconds", total}, {"cells", cells}};
}

}  // namespace gmmddpm
