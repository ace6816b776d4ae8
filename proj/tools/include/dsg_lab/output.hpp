// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <dsg/serialization.hpp>

namespace dsg::lab {

inline constexpr const char* kTrajectoryCsvHeader = "traj,t,loss,grad_norm,step_norm,manifold_dev,residual";

/// Shortest round-trip decimal form; "nan", "inf", "-inf" for non-finite values.
std::string format_double(double value);

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<Trajectory>& trajectories);

/// Plain table: header plus rows of preformatted cells.
void write_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows);

/// Pretty-printed with two-space indent and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& j);

/// Scatter of 2-D samples over density contours of the clean prior.
void write_scatter_svg(const std::filesystem::path& path, const Prior& prior, const std::vector<Trajectory>& samples,
                       const std::string& title);

// Round-trip checks run on every file before a command exits; they throw
// std::runtime_error describing the first problem found.
void validate_trajectory_csv(const std::filesystem::path& path, std::size_t expected_rows);
void validate_table_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                        std::size_t expected_rows);
Json validate_json(const std::filesystem::path& path, const std::vector<std::string>& required_keys);
void validate_svg(const std::filesystem::path& path);

/// Contour segments of a scalar field sampled on a regular grid, as
/// (x0, y0, x1, y1) in grid coordinates (column, row).
struct Segment {
  double x0, y0, x1, y1;
};
std::vector<Segment> marching_squares(const Matrix& field, double level);

}  // namespace dsg::lab
