#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmddpm/gaussian_mixture.hpp"
#include "gmmddpm/probes.hpp"

namespace gmmddpm {

enum class Placement { kSimplex, kRandomBall, kRandomSphere };

std::string_view to_string(Placement placement);

struct TargetSpec {
  std::string file;  // absolute path of a GMM file; empty when unused
  std::vector<double> weights;             // inline mixture, if given
  std::vector<std::vector<double>> means;
  Placement placement = Placement::kSimplex;
  // Simplex: distance between any two means. Ball and sphere: radius.
  double scale = 4.0;
  double c_R = 1.0;  // mean norms must stay below T^c_R
  double contaminant_scale = 2.0;  // contaminant is N(0, scale^2 I)

  bool generated() const noexcept { return file.empty() && means.empty(); }
  bool operator==(const TargetSpec&) const = default;
};

struct OracleSpec {
  std::string kind = "exact";  // exact | gaussian-field | mean-jitter
  bool clip = true;
  double c_clip = 4.0;
  bool operator==(const OracleSpec&) const = default;
};

struct MetricSpec {
  // sliced_tv | null_floor | mmd | moments | score_error
  std::vector<std::string> names{"sliced_tv", "null_floor"};
  std::size_t projections = 32;
  std::size_t bins = 200;
  bool mean_pairs = true;
  std::size_t mmd_n = 2000;
  std::size_t score_error_n = 1000;
  bool operator==(const MetricSpec&) const = default;
};

struct ProbeSpec {
  // typical_set | trace_quantiles | tweedie
  std::vector<std::string> names;
  std::size_t n = 100000;
  double c1 = kDefaultProbeC1;
  double c2 = kDefaultProbeC2;
  std::vector<std::size_t> steps;  // empty: T, T/2, ..., 1
  bool operator==(const ProbeSpec&) const = default;
};

struct ExperimentSpec {
  TargetSpec target;
  std::vector<std::size_t> T;
  std::vector<std::size_t> d{1};
  std::vector<std::size_t> K{1};
  std::vector<double> amplitude{0.0};
  std::vector<double> delta{0.0};
  double c0 = 2.0;
  double c1 = 10.0;
  OracleSpec oracle;
  MetricSpec metrics;
  ProbeSpec probes;
  std::size_t n = 100000;
  std::uint64_t seed = 0;
  bool operator==(const ExperimentSpec&) const = default;
};

// Relative GMM file paths resolve against base_dir.
ExperimentSpec parse_config_text(std::string_view text, const std::string& base_dir = ".");
ExperimentSpec parse_config(const std::string& path);
std::string serialize_config(const ExperimentSpec& spec);
// Throws ValidationError naming the violated invariant.
void validate_spec(const ExperimentSpec& spec);
// FNV-1a of the serialized config, as 16 hex digits.
std::string config_hash(const ExperimentSpec& spec);

// Mixture for one (K, d) cell. Random placements use stream (seed, geometry, K, d).
GaussianMixture build_target_gmm(const ExperimentSpec& spec, std::size_t K, std::size_t d);

struct CellCoords {
  std::size_t T = 0;
  std::size_t d = 0;
  std::size_t K = 0;
  double amplitude = 0.0;
  double delta = 0.0;
};

// Cells ordered d, K, amplitude, delta, T with T varying fastest.
std::vector<CellCoords> expand_grid(const ExperimentSpec& spec);

struct MetricValue {
  std::string metric;
  double value = 0.0;
  double mc_error = 0.0;
  std::size_t resolution = 0;
};

struct CellResult {
  std::size_t run_id = 0;
  CellCoords coords;
  std::string oracle;
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;
  std::vector<MetricValue> metrics;
  std::vector<ProbeRow> probes;
  double wall_seconds = 0.0;  // kept out of the deterministic outputs

  const MetricValue* find(std::string_view metric) const;
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::string config_hash;
  std::vector<CellResult> cells;
  nlohmann::json fits;

  bool any_failed() const;
};

enum class CellWork { kFull, kProbesOnly, kScoreErrorOnly };

struct RunOptions {
  unsigned threads = 1;
  CellWork work = CellWork::kFull;
  std::function<void(const CellResult&)> on_cell;
};

CellResult run_cell(const ExperimentSpec& spec, const CellCoords& coords, std::size_t run_id,
                    const RunOptions& options = {});
ExperimentReport run_sweep(const ExperimentSpec& spec, const RunOptions& options = {});

// Per-axis summaries: rate fits over T, spread and rank trend over d and K,
// monotonicity and TV-vs-epsilon fits over amplitude, excess over delta.
nlohmann::json compute_fits(const ExperimentSpec& spec, const std::vector<CellResult>& cells);

// run_id,T,d,K,oracle,amplitude,delta,metric,value,mc_error,resolution,seed
std::string report_csv(const ExperimentReport& report);
nlohmann::json report_json(const ExperimentReport& report);
nlohmann::json timing_json(const ExperimentReport& report);

}  // namespace gmmddpm
