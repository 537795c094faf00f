#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmddpm/experiment.hpp"

namespace gmmddpm {

struct ChartFile {
  std::string name;  // e.g. tv_vs_T.svg
  std::string svg;
};

// One self-contained SVG per swept axis, drawn from the report JSON alone.
// Throws EmptyReport when the report has no axis with two or more values.
std::vector<ChartFile> render_charts(const nlohmann::json& report);
std::vector<ChartFile> render_charts(const ExperimentReport& report);

// Returns the written paths.
std::vector<std::string> write_charts(const std::vector<ChartFile>& charts, const std::string& dir);

}  // namespace gmmddpm
