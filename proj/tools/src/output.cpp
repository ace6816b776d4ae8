// SPDX-License-Identifier: Apache-2.0
#include "dsg_lab/output.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace dsg::lab {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read back '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fixed(double v, int precision = 2) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::fixed, precision);
  if (ec != std::errc{}) return "0";
  return {buf.data(), end};
}

void append_optional(std::string& line, const std::optional<double>& v) {
  line += ',';
  if (v) line += format_double(*v);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string> lines_of(const std::string& text, const fs::path& path) {
  if (text.empty() || text.back() != '\n') throw std::runtime_error("'" + path.string() + "' must end with a newline");
  std::vector<std::string> lines = split(text.substr(0, text.size() - 1), '\n');
  return lines;
}

bool parses_as_double(const std::string& cell) {
  if (cell.empty()) return false;
  double v = 0.0;
  auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  return ec == std::errc{} && end == cell.data() + cell.size();
}

bool parses_as_integer(const std::string& cell) {
  if (cell.empty()) return false;
  long long v = 0;
  auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  return ec == std::errc{} && end == cell.data() + cell.size();
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double: conversion failed");
  return {buf.data(), end};
}

void write_trajectory_csv(const fs::path& path, const std::vector<Trajectory>& trajectories) {
  std::string out = kTrajectoryCsvHeader;
  out += '\n';
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    for (const StepRecord& r : trajectories[i].steps) {
      std::string line = std::to_string(i);
      line += ',';
      line += std::to_string(r.t);
      append_optional(line, r.loss);
      line += ',';
      line += format_double(r.grad_norm);
      line += ',';
      line += format_double(r.step_norm);
      append_optional(line, r.manifold_dev);
      append_optional(line, r.residual);
      out += line;
      out += '\n';
    }
  }
  write_file(path, out);
}

void write_table_csv(const fs::path& path, const std::vector<std::string>& header,
                     const std::vector<std::vector<std::string>>& rows) {
  auto join = [](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line + '\n';
  };
  std::string out = join(header);
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw std::logic_error("write_table_csv: row width mismatch");
    out += join(row);
  }
  write_file(path, out);
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

void validate_trajectory_csv(const fs::path& path, std::size_t expected_rows) {
  const std::vector<std::string> lines = lines_of(read_file(path), path);
  if (lines.front() != kTrajectoryCsvHeader) throw std::runtime_error("'" + path.string() + "': bad header");
  if (lines.size() - 1 != expected_rows) {
    throw std::runtime_error("'" + path.string() + "': expected " + std::to_string(expected_rows) + " rows, found " +
                             std::to_string(lines.size() - 1));
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    const std::string where = "'" + path.string() + "' line " + std::to_string(i + 1);
    if (cells.size() != 7) throw std::runtime_error(where + ": expected 7 fields");
    if (!parses_as_integer(cells[0]) || !parses_as_integer(cells[1])) {
      throw std::runtime_error(where + ": traj and t must be integers");
    }
    for (std::size_t c : {3, 4}) {
      if (!parses_as_double(cells[c])) throw std::runtime_error(where + ": field " + std::to_string(c + 1));
    }
    for (std::size_t c : {2, 5, 6}) {
      if (!cells[c].empty() && !parses_as_double(cells[c])) {
        throw std::runtime_error(where + ": field " + std::to_string(c + 1));
      }
    }
  }
}

void validate_table_csv(const fs::path& path, const std::vector<std::string>& header, std::size_t expected_rows) {
  const std::vector<std::string> lines = lines_of(read_file(path), path);
  if (split(lines.front(), ',') != header) throw std::runtime_error("'" + path.string() + "': bad header");
  if (lines.size() - 1 != expected_rows) throw std::runtime_error("'" + path.string() + "': wrong row count");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (split(lines[i], ',').size() != header.size()) {
      throw std::runtime_error("'" + path.string() + "' line " + std::to_string(i + 1) + ": wrong field count");
    }
  }
}

Json validate_json(const fs::path& path, const std::vector<std::string>& required_keys) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("'" + path.string() + "' is not valid JSON: " + e.what());
  }
  for (const std::string& key : required_keys) {
    if (!j.contains(key)) throw std::runtime_error("'" + path.string() + "' lacks key '" + key + "'");
  }
  return j;
}

void validate_svg(const fs::path& path) {
  const std::string text = read_file(path);
  if (text.rfind("<svg ", 0) != 0 || text.find("</svg>") == std::string::npos) {
    throw std::runtime_error("'" + path.string() + "' is not a complete SVG document");
  }
  std::size_t opened = 0;
  std::size_t closed = 0;
  for (std::size_t pos = 0; (pos = text.find("<g", pos)) != std::string::npos; ++pos) ++opened;
  for (std::size_t pos = 0; (pos = text.find("</g>", pos)) != std::string::npos; ++pos) ++closed;
  if (opened != closed) throw std::runtime_error("'" + path.string() + "': unbalanced groups");
}

// ---------------------------------------------------------------------------

std::vector<Segment> marching_squares(const Matrix& field, double level) {
  std::vector<Segment> out;
  struct Point {
    double x, y;
  };
  auto cross = [level](double a, double b) { return (a - level) / (a - b); };
  for (Eigen::Index i = 0; i + 1 < field.rows(); ++i) {
    for (Eigen::Index j = 0; j + 1 < field.cols(); ++j) {
      const double v00 = field(i, j), v01 = field(i, j + 1), v10 = field(i + 1, j), v11 = field(i + 1, j + 1);
      const bool a = v00 > level, b = v01 > level, c = v10 > level, d = v11 > level;
      const auto x = static_cast<double>(j), y = static_cast<double>(i);
      std::optional<Point> top, right, bottom, left;
      if (a != b) top = Point{x + cross(v00, v01), y};
      if (b != d) right = Point{x + 1.0, y + cross(v01, v11)};
      if (c != d) bottom = Point{x + cross(v10, v11), y + 1.0};
      if (a != c) left = Point{x, y + cross(v00, v10)};

      std::vector<Point> pts;
      for (const auto& p : {top, right, bottom, left}) {
        if (p) pts.push_back(*p);
      }
      if (pts.size() == 2) {
        out.push_back({pts[0].x, pts[0].y, pts[1].x, pts[1].y});
      } else if (pts.size() == 4) {
        // Saddle: decide by the cell-centre value which corners connect.
        const bool centre = 0.25 * (v00 + v01 + v10 + v11) > level;
        if (centre == a) {
          out.push_back({top->x, top->y, right->x, right->y});
          out.push_back({bottom->x, bottom->y, left->x, left->y});
        } else {
          out.push_back({top->x, top->y, left->x, left->y});
          out.push_back({right->x, right->y, bottom->x, bottom->y});
        }
      }
    }
  }
  return out;
}

void write_scatter_svg(const fs::path& path, const Prior& prior, const std::vector<Trajectory>& samples,
                       const std::string& title) {
  if (prior.dimension() != 2) throw std::invalid_argument("scatter: prior must be two-dimensional");
  constexpr int kSize = 480;
  constexpr int kMargin = 30;
  constexpr int kGrid = 121;
  constexpr double kNearClean = 1.0 - 1e-6;

  double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
  bool first = true;
  auto include = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    if (first) {
      lo_x = hi_x = x;
      lo_y = hi_y = y;
      first = false;
    }
    lo_x = std::min(lo_x, x);
    hi_x = std::max(hi_x, x);
    lo_y = std::min(lo_y, y);
    hi_y = std::max(hi_y, y);
  };
  if (const auto* gmm = dynamic_cast<const GaussianMixturePrior*>(&prior)) {
    for (std::size_t k = 0; k < gmm->components(); ++k) {
      const double s = 3.0 * std::max(gmm->stds()[k], 0.1);
      include(gmm->means()[k][0] - s, gmm->means()[k][1] - s);
      include(gmm->means()[k][0] + s, gmm->means()[k][1] + s);
    }
  } else {
    const Vector c = prior.clean_mean();
    include(c[0] - 3.0, c[1] - 3.0);
    include(c[0] + 3.0, c[1] + 3.0);
  }
  for (const Trajectory& t : samples) include(t.x0[0], t.x0[1]);
  const double pad_x = 0.05 * (hi_x - lo_x) + 1e-9, pad_y = 0.05 * (hi_y - lo_y) + 1e-9;
  lo_x -= pad_x;
  hi_x += pad_x;
  lo_y -= pad_y;
  hi_y += pad_y;

  const double span = kSize - 2.0 * kMargin;
  auto px = [&](double x) { return kMargin + (x - lo_x) / (hi_x - lo_x) * span; };
  auto py = [&](double y) { return kSize - kMargin - (y - lo_y) / (hi_y - lo_y) * span; };

  Matrix density(kGrid, kGrid);
  Vector point(2);
  for (int i = 0; i < kGrid; ++i) {
    for (int j = 0; j < kGrid; ++j) {
      point << lo_x + (hi_x - lo_x) * j / (kGrid - 1.0), lo_y + (hi_y - lo_y) * i / (kGrid - 1.0);
      density(i, j) = std::exp(prior.log_density(point, kNearClean));
    }
  }
  const double peak = density.maxCoeff();

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kSize) + "\" height=\"" +
                    std::to_string(kSize) + "\" viewBox=\"0 0 " + std::to_string(kSize) + " " +
                    std::to_string(kSize) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(kMargin) + "\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\">" + title +
         "</text>\n";
  svg += "<g fill=\"none\" stroke=\"#4477aa\" stroke-width=\"1\">\n";
  for (double frac : {0.05, 0.2, 0.4, 0.6, 0.8}) {
    std::string d;
    for (const Segment& s : marching_squares(density, frac * peak)) {
      auto gx = [&](double c) { return px(lo_x + (hi_x - lo_x) * c / (kGrid - 1.0)); };
      auto gy = [&](double r) { return py(lo_y + (hi_y - lo_y) * r / (kGrid - 1.0)); };
      d += "M" + fixed(gx(s.x0)) + " " + fixed(gy(s.y0)) + "L" + fixed(gx(s.x1)) + " " + fixed(gy(s.y1));
    }
    if (!d.empty()) svg += "<path d=\"" + d + "\"/>\n";
  }
  svg += "</g>\n<g fill=\"#cc3311\" fill-opacity=\"0.6\">\n";
  for (const Trajectory& t : samples) {
    if (!std::isfinite(t.x0[0]) || !std::isfinite(t.x0[1])) continue;
    svg += "<circle cx=\"" + fixed(px(t.x0[0])) + "\" cy=\"" + fixed(py(t.x0[1])) + "\" r=\"2\"/>\n";
  }
  svg += "</g>\n<rect x=\"" + std::to_string(kMargin) + "\" y=\"" + std::to_string(kMargin) + "\" width=\"" +
         fixed(span, 0) + "\" height=\"" + fixed(span, 0) + "\" fill=\"none\" stroke=\"black\"/>\n</svg>\n";
  write_file(path, svg);
}

}  // namespace dsg::lab
