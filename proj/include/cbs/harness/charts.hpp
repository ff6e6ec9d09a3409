// SVG line charts over per-round CSV logs.
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cbs::harness {

struct RoundTable {
  std::string name;  // legend label (file stem)
  std::map<std::string, std::vector<double>> columns;
};

/// Reads a RoundLog CSV; throws std::invalid_argument naming the first missing or
/// unexpected column.
RoundTable read_round_csv(const std::filesystem::path& path);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // non-finite points are skipped
};

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series);

/// Writes reward.svg (V_t), regret.svg (regret_cumulative) and epsilon.svg into out_dir.
/// Returns the written paths.
std::vector<std::filesystem::path> emit_charts(const std::vector<std::filesystem::path>& csv_paths,
                                               const std::filesystem::path& out_dir);

}  // namespace cbs::harness
