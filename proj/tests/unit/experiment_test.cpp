#include <cmath>
#include <filesystem>
#include <regex>
#include <string>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "gmmddpm/charts.hpp"
#include "gmmddpm/error.hpp"
#include "gmmddpm/experiment.hpp"
#include "gmmddpm/io.hpp"
#include "gmmddpm/kv_document.hpp"

namespace {

using namespace gmmddpm;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kIoError;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gmmddpm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

TEST(KvDocument, ParsesJsonAndBareValues) {
  const auto doc = KvDocument::parse("# header\nT = [8, 16]  # trailing\nname = simplex\nlabel = \"a # b\"\n\nx=1.5\n");
  ASSERT_EQ(doc.entries().size(), 4u);
  EXPECT_EQ(doc.find("T")->value, nlohmann::json::array({8, 16}));
  EXPECT_EQ(doc.find("name")->value, "simplex");
  EXPECT_EQ(doc.find("label")->value, "a # b");
  EXPECT_EQ(doc.find("x")->value, 1.5);
  EXPECT_EQ(doc.find("x")->line, 6u);
}

TEST(KvDocument, ReportsLineOfSyntaxErrors) {
  try {
    KvDocument::parse("a = 1\nnot a pair\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { KvDocument::parse("a = 1\na = 2\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { KvDocument::parse("a = [1, 2\n"); }), ErrorCode::kParseError);
}

TEST(KvDocument, SerializeRoundTrip) {
  const auto doc = KvDocument::parse("a = 1\nb = [1.5, 2]\nc = \"x\"\n");
  const auto again = KvDocument::parse(doc.serialize());
  ASSERT_EQ(again.entries().size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(doc.entries()[i].value, again.entries()[i].value);
}

TEST(Config, MinimalConfigGetsDefaults) {
  const auto spec = parse_config_text("seed = 3\nT = [16, 32]\ntarget.placement = simplex\n");
  EXPECT_EQ(spec.seed, 3u);
  EXPECT_EQ(spec.c0, 2.0);
  EXPECT_EQ(spec.c1, 10.0);
  EXPECT_EQ(spec.oracle.c_clip, 4.0);
  EXPECT_EQ(spec.n, 100000u);
  EXPECT_EQ(spec.T, (std::vector<std::size_t>{16, 32}));
}

TEST(Config, RejectsSmallScheduleRatio) {
  try {
    parse_config_text("seed = 1\nT = 16\nschedule.c0 = 2\nschedule.c1 = 6\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidationError);
    EXPECT_NE(std::string(e.what()).find("c1/c0 > 4"), std::string::npos);
  }
}

TEST(Config, RejectsMeanAboveNormCap) {
  try {
    parse_config_text("seed = 1\nT = [8]\ntarget.weights = [0.5, 0.5]\ntarget.means = [[0], [100]]\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kValidationError);
    EXPECT_NE(std::string(e.what()).find("component-norm"), std::string::npos);
  }
}

TEST(Config, OtherFailures) {
  EXPECT_EQ(code_of([] { parse_config_text("T = [8]\n"); }), ErrorCode::kValidationError);
  EXPECT_EQ(code_of([] { parse_config_text("seed = 1\nT = [8]\nbogus = 2\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_config_text("seed = 1\nT = [\"eight\"]\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(code_of([] { parse_config_text("seed = 1\nT = []\n"); }), ErrorCode::kValidationError);
  EXPECT_EQ(code_of([] { parse_config_text("seed = 1\nT = 8\namplitude = [0.1]\n"); }), ErrorCode::kValidationError);
  EXPECT_EQ(code_of([] { parse_config_text("seed = 1\nT = 8\nmetrics = [\"kl\"]\n"); }), ErrorCode::kValidationError);
}

TEST(Config, RoundTrip) {
  const auto spec = parse_config_text(
      "seed = 18446744073709551615\nT = [8, 16, 32, 64]\nd = [2, 8]\nK = [3]\ntarget.scale = 2.5\n"
      "oracle.kind = gaussian-field\namplitude = [0, 0.1, 0.2]\nmetrics = [\"sliced_tv\", \"score_error\"]\n"
      "probes = [\"tweedie\"]\nprobes.steps = [1, 4]\n");
  const auto again = parse_config_text(serialize_config(spec));
  EXPECT_EQ(spec, again);
  EXPECT_EQ(config_hash(spec), config_hash(again));
  EXPECT_EQ(config_hash(spec).size(), 16u);
}

TEST(Config, GmmFileTarget) {
  const auto dir = scratch_dir("gmmfile");
  GaussianMixture g({0.25, 0.75}, {{1.0, 0.0}, {-1.0, 2.0}});
  save_gmm_file((dir / "target.gmm").string(), g);
  write_text_file((dir / "run.cfg").string(), "seed = 2\nT = 16\ntarget.file = target.gmm\n");
  const auto spec = parse_config((dir / "run.cfg").string());
  EXPECT_EQ(spec.d, std::vector<std::size_t>{2});
  EXPECT_EQ(spec.K, std::vector<std::size_t>{2});
  const auto loaded = build_target_gmm(spec, 2, 2);
  EXPECT_EQ(loaded.weights()[1], 0.75);
  EXPECT_EQ(loaded.mean(1)[1], 2.0);
}

TEST(TargetGenerators, SimplexPairwiseDistance) {
  auto spec = parse_config_text("seed = 1\nT = 8\ntarget.scale = 4\n");
  const auto g = build_target_gmm(spec, 3, 5);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      double sq = 0.0;
      for (std::size_t c = 0; c < 5; ++c) sq += std::pow(g.mean(i)[c] - g.mean(j)[c], 2);
      EXPECT_NEAR(std::sqrt(sq), 4.0, 1e-12);
    }
    for (std::size_t c = 2; c < 5; ++c) EXPECT_EQ(g.mean(i)[c], 0.0);
  }
}

TEST(TargetGenerators, SphereRadius) {
  auto spec = parse_config_text("seed = 1\nT = 8\ntarget.placement = random-sphere\ntarget.scale = 2.5\n");
  const auto g = build_target_gmm(spec, 16, 8);
  for (std::size_t k = 0; k < 16; ++k) {
    double sq = 0.0;
    for (double v : g.mean(k)) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq), 2.5, 1e-12);
  }
  EXPECT_EQ(build_target_gmm(spec, 16, 8).flat_means()[5], g.flat_means()[5]);
}

ExperimentSpec smoke_spec() {
  return parse_config_text(
      "seed = 5\nn = 3000\nT = [8, 16, 32, 64]\nK = 2\nd = 2\ntarget.scale = 3\n"
      "metrics = [\"sliced_tv\", \"null_floor\", \"moments\", \"mmd\", \"score_error\"]\n"
      "metrics.mmd_n = 300\nmetrics.score_error_n = 100\nprobes = [\"typical_set\"]\nprobes.n = 1000\n"
      "probes.steps = [1, 8]\n");
}

TEST(RunSweep, SingleCellSmoke) {
  const auto spec = parse_config_text("seed = 1\nn = 2000\nT = 64\nK = 1\nd = 1\n");
  const auto report = run_sweep(spec);
  ASSERT_EQ(report.cells.size(), 1u);
  EXPECT_TRUE(report.cells[0].ok);
  const auto* tv = report.cells[0].find("sliced_tv");
  ASSERT_NE(tv, nullptr);
  EXPECT_LT(tv->value, 0.2);
  EXPECT_FALSE(report.any_failed());
  EXPECT_EQ(report_json(report)["cells"][0]["config_hash"], report.config_hash);
}

TEST(RunSweep, DeterministicAcrossRunsAndThreads) {
  const auto spec = smoke_spec();
  RunOptions one;
  one.threads = 1;
  RunOptions three;
  three.threads = 3;
  const auto a = run_sweep(spec, one);
  const auto b = run_sweep(spec, one);
  const auto c = run_sweep(spec, three);
  EXPECT_EQ(report_csv(a), report_csv(b));
  EXPECT_EQ(report_csv(a), report_csv(c));
  EXPECT_EQ(report_json(a).dump(), report_json(c).dump());
  ASSERT_TRUE(a.fits.contains("T"));
  EXPECT_TRUE(a.fits["T"][0].contains("b"));
}

TEST(RunSweep, CsvSchema) {
  const auto report = run_sweep(smoke_spec());
  const std::string csv = report_csv(report);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "run_id,T,d,K,oracle,amplitude,delta,metric,value,mc_error,resolution,seed");
  EXPECT_NE(csv.find(",sliced_tv,"), std::string::npos);
  EXPECT_NE(csv.find(",probe.typical_set@t=8,"), std::string::npos);
  EXPECT_NE(csv.find(",epsilon_score,"), std::string::npos);
}

TEST(RunSweep, FailedCellIsRecorded) {
  const auto spec = smoke_spec();
  const auto bad = run_cell(spec, CellCoords{1, 2, 2, 0.0, 0.0}, 7);
  EXPECT_FALSE(bad.ok);
  EXPECT_NE(bad.error.find("T=1"), std::string::npos);
  ExperimentReport report;
  report.spec = spec;
  report.cells = {bad};
  EXPECT_TRUE(report.any_failed());
  EXPECT_NE(report_csv(report).find(",failed,"), std::string::npos);
}

TEST(Charts, OneSvgPerAxisWithSlopeAnnotation) {
  const auto report = run_sweep(smoke_spec());
  const auto charts = render_charts(report);
  ASSERT_EQ(charts.size(), 1u);
  EXPECT_EQ(charts[0].name, "tv_vs_T.svg");
  const std::string expected = fmt::format("b = {:.3f}", report.fits["T"][0]["b"].get<double>());
  EXPECT_NE(charts[0].svg.find(expected), std::string::npos);
  EXPECT_EQ(charts[0].svg.find("href"), std::string::npos);
}

TEST(Charts, PointsInsidePlotArea) {
  const auto report = run_sweep(smoke_spec());
  const std::string svg = render_charts(report)[0].svg;
  const std::regex circle(R"re(<circle cx="([-0-9.]+)" cy="([-0-9.]+)")re");
  std::size_t count = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), circle); it != std::sregex_iterator(); ++it) {
    const double cx = std::stod((*it)[1]);
    const double cy = std::stod((*it)[2]);
    EXPECT_GE(cx, 70.0);
    EXPECT_LE(cx, 640.0 - 180.0);
    EXPECT_GE(cy, 40.0);
    EXPECT_LE(cy, 420.0 - 50.0);
    ++count;
  }
  EXPECT_EQ(count, 4u);
}

TEST(Charts, EmptyReportRejected) {
  const auto report = run_sweep(parse_config_text("seed = 1\nn = 500\nT = 8\n"));
  EXPECT_EQ(code_of([&] { render_charts(report); }), ErrorCode::kEmptyReport);
  EXPECT_EQ(code_of([] { render_charts(nlohmann::json::object()); }), ErrorCode::kEmptyReport);
}

TEST(Io, BatchCsvRoundTrip) {
  const auto dir = scratch_dir("batch");
  GaussianMixture g({1.0}, {{0.0, 1.0, 2.0}});
  const auto b = g.sample(20, 3);
  write_batch_csv((dir / "b.csv").string(), b, {{"seed", "3"}, {"T", "8"}});
  const std::string text = read_text_file((dir / "b.csv").string());
  EXPECT_EQ(text.rfind("# seed = 3\n# T = 8\nx0,x1,x2\n", 0), 0u);
  const auto back = read_batch_csv((dir / "b.csv").string());
  EXPECT_EQ(back.dim, 3u);
  EXPECT_EQ(back.points, b.points);
}

TEST(Io, MissingFile) {
  EXPECT_EQ(code_of([] { read_text_file("/nonexistent/gmmddpm/file"); }), ErrorCode::kIoError);
}

}  // namespace
