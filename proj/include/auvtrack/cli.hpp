#pragma once

#include "auvtrack/episode_io.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace auvtrack {

inline constexpr const char* kVersion = "0.1.0";

/// The auvtrack command line. Returns 0 on success, 1 when a stage or a
/// check fails, 2 on a usage error. Log level comes from FISHER_LOG.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

/// Columns: t, x_i, y_i, theta_i per agent, target_x, target_y, lambda,
/// min_distance, danger. One row per recorded step, t after the step.
std::string plot_csv_header(int n_agents);
void write_plot_csv(const std::filesystem::path& path, const EpisodeRecord& e);

/// Manifest written as <dir>/manifest.json by every artifact-producing run.
nlohmann::json read_manifest(const std::filesystem::path& dir);
/// Equality of two manifests ignoring the wall_clock block.
bool manifests_match(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace auvtrack
