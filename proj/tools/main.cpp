#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gmmddpm/charts.hpp"
#include "gmmddpm/error.hpp"
#include "gmmddpm/experiment.hpp"
#include "gmmddpm/io.hpp"
#include "gmmddpm/sampler.hpp"
#include "gmmddpm/schedule.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitCellFailed = 2;

struct CommonOptions {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string format = "both";
};

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("gmmddpm");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("GMMDDPM_LOG");
  const std::string level = env == nullptr ? "info" : env;
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
    if (level != "info") spdlog::warn("GMMDDPM_LOG={} not recognised; using info", level);
  }
}

std::string out_path(const CommonOptions& o, const std::string& name) {
  return (std::filesystem::path(o.out) / name).string();
}

gmmddpm::ExperimentSpec load_spec(const CommonOptions& o) {
  gmmddpm::ExperimentSpec spec = gmmddpm::parse_config(o.config);
  if (o.seed) spec.seed = *o.seed;
  spdlog::debug("config hash {}", gmmddpm::config_hash(spec));
  return spec;
}

void emit_report(const CommonOptions& o, const gmmddpm::ExperimentReport& report, const std::string& stem) {
  if (o.format == "csv" || o.format == "both") {
    gmmddpm::write_text_file(out_path(o, stem + ".csv"), gmmddpm::report_csv(report));
    spdlog::info("wrote {}", out_path(o, stem + ".csv"));
  }
  if (o.format == "json" || o.format == "both") {
    gmmddpm::write_text_file(out_path(o, stem + ".json"), gmmddpm::report_json(report).dump(2) + "\n");
    spdlog::info("wrote {}", out_path(o, stem + ".json"));
  }
  gmmddpm::write_text_file(out_path(o, stem + "_timing.json"), gmmddpm::timing_json(report).dump(2) + "\n");
}

gmmddpm::RunOptions run_options(const CommonOptions& o, gmmddpm::CellWork work) {
  gmmddpm::RunOptions opts;
  opts.threads = o.threads;
  opts.work = work;
  opts.on_cell = [](const gmmddpm::CellResult& c) {
    if (!c.ok) {
      spdlog::error("{}", c.error);
      return;
    }
    const auto* tv = c.find("sliced_tv");
    spdlog::info("cell {} T={} d={} K={} a={} delta={}{} ({:.1f}s)", c.run_id, c.coords.T, c.coords.d, c.coords.K,
                 c.coords.amplitude, c.coords.delta, tv ? fmt::format(" sliced_tv={:.4f}", tv->value) : "",
                 c.wall_seconds);
  };
  return opts;
}

int run_grid(const CommonOptions& o, gmmddpm::CellWork work, const std::string& stem) {
  auto spec = load_spec(o);
  if (work == gmmddpm::CellWork::kProbesOnly && spec.probes.names.empty()) {
    spec.probes.names = {"typical_set", "trace_quantiles", "tweedie"};
  }
  const auto report = gmmddpm::run_sweep(spec, run_options(o, work));
  emit_report(o, report, stem);
  return report.any_failed() ? kExitCellFailed : kExitOk;
}

int run_sample(const CommonOptions& o, std::size_t cell_index) {
  const auto spec = load_spec(o);
  const auto grid = gmmddpm::expand_grid(spec);
  if (cell_index >= grid.size()) throw CLI::ValidationError("--cell", "index outside the sweep grid");
  const auto& c = grid[cell_index];
  const auto gmm = gmmddpm::build_target_gmm(spec, c.K, c.d);
  const auto sched = gmmddpm::build_schedule(c.T, spec.c0, spec.c1);
  gmmddpm::OraclePtr oracle = gmmddpm::exact_oracle(gmm, sched);
  if (spec.oracle.kind != "exact") {
    oracle = gmmddpm::perturb_oracle(oracle, gmmddpm::parse_perturb_model(spec.oracle.kind), c.amplitude,
                                     gmmddpm::derive_seed(spec.seed, gmmddpm::StreamTag::kPerturbation));
  }
  if (spec.oracle.clip) oracle = gmmddpm::clip_oracle(oracle, sched, gmm.dim(), spec.oracle.c_clip);
  const auto traj = gmmddpm::ddpm_sample(*oracle, sched, gmm.dim(), spec.n, spec.seed,
                                         gmmddpm::SnapshotPolicy::none(), o.threads);
  const gmmddpm::HeaderFields header{{"seed", std::to_string(spec.seed)},
                                     {"T", std::to_string(c.T)},
                                     {"c0", fmt::format("{}", spec.c0)},
                                     {"c1", fmt::format("{}", spec.c1)},
                                     {"oracle", oracle->descriptor()},
                                     {"config_hash", gmmddpm::config_hash(spec)}};
  gmmddpm::write_batch_csv(out_path(o, "samples.csv"), traj.output, header);
  gmmddpm::save_gmm_file(out_path(o, "target.gmm"), gmm);
  gmmddpm::write_text_file(out_path(o, "schedule.csv"), gmmddpm::schedule_csv(sched));
  spdlog::info("wrote {} samples to {}", traj.output.size(), out_path(o, "samples.csv"));
  return kExitOk;
}

int run_chart(const CommonOptions& o, const std::string& report_path) {
  const auto report = nlohmann::json::parse(gmmddpm::read_text_file(report_path));
  for (const auto& path : gmmddpm::write_charts(gmmddpm::render_charts(report), o.out)) spdlog::info("wrote {}", path);
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_config) {
  auto* cfg = cmd->add_option("--config", o.config, "Experiment config (key = value lines)");
  if (needs_config) cfg->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Master seed, overrides the config");
  cmd->add_option("--threads", o.threads, "Worker threads, 0 for all cores (speed only)")->capture_default_str();
  cmd->add_option("--format", o.format, "Report format")
      ->check(CLI::IsMember({"csv", "json", "both"}))
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"DDPM sampling experiments on Gaussian-mixture targets"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::size_t cell_index = 0;
  std::string report_path;

  auto* sample = app.add_subcommand("sample", "Run one cell of the grid and dump its samples");
  add_common(sample, opts, true);
  sample->add_option("--cell", cell_index, "Index into the expanded sweep grid")->capture_default_str();
  auto* sweep = app.add_subcommand("sweep", "Run the full grid and write the report");
  add_common(sweep, opts, true);
  auto* probe = app.add_subcommand("probe", "Run only the theory probes for each cell");
  add_common(probe, opts, true);
  auto* score_error = app.add_subcommand("score-error", "Measure the realized score error for each cell");
  add_common(score_error, opts, true);
  auto* chart = app.add_subcommand("chart", "Render SVG charts from a report JSON");
  add_common(chart, opts, false);
  chart->add_option("--report", report_path, "Report JSON (default: <out>/sweep.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help exits 0; every usage error maps onto the generic error code.
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (*sample) return run_sample(opts, cell_index);
    if (*sweep) return run_grid(opts, gmmddpm::CellWork::kFull, "sweep");
    if (*probe) return run_grid(opts, gmmddpm::CellWork::kProbesOnly, "probe");
    if (*score_error) return run_grid(opts, gmmddpm::CellWork::kScoreErrorOnly, "score_error");
    if (*chart) return run_chart(opts, report_path.empty() ? out_path(opts, "sweep.json") : report_path);
  } catch (const gmmddpm::Error& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
  return kExitOk;
}
