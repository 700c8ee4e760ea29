// Copyright 2026 The instructrl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "instructrl/report.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "instructrl/errors.h"

namespace instructrl {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

void CsvTable::add_row(std::vector<std::string> row) {
  if (!header.empty() && row.size() != header.size())
    throw ContractViolation("csv row width does not match the header");
  rows.push_back(std::move(row));
}

std::string CsvTable::to_string() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& r) {
    for (size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_field(r[i]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

void CsvTable::save(const std::filesystem::path& path) const { write_text_file(path, to_string()); }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw ContractViolation("format_number failed");
  return std::string(buf, end);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out) throw ConfigError("short write to " + path.string());
}

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, std::span<const PlotSeries> series) {
  const double W = 640, H = 420, left = 70, right = 160, top = 40, bottom = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - e);
      y1 = std::max(y1, s.y[i] + e);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto sy = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << px(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n";
  // axes and ticks
  o << "<line x1=\"" << px(left) << "\" y1=\"" << px(H - bottom) << "\" x2=\"" << px(W - right)
    << "\" y2=\"" << px(H - bottom) << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << px(left) << "\" y1=\"" << px(top) << "\" x2=\"" << px(left) << "\" y2=\""
    << px(H - bottom) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = x0 + (x1 - x0) * t / 5, yv = y0 + (y1 - y0) * t / 5;
    char xb[32], yb[32];
    std::snprintf(xb, sizeof xb, "%.3g", xv);
    std::snprintf(yb, sizeof yb, "%.3g", yv);
    o << "<text x=\"" << px(sx(xv)) << "\" y=\"" << px(H - bottom + 16)
      << "\" text-anchor=\"middle\">" << xb << "</text>\n";
    o << "<text x=\"" << px(left - 6) << "\" y=\"" << px(sy(yv) + 4) << "\" text-anchor=\"end\">"
      << yb << "</text>\n";
    o << "<line x1=\"" << px(left) << "\" y1=\"" << px(sy(yv)) << "\" x2=\"" << px(W - right)
      << "\" y2=\"" << px(sy(yv)) << "\" stroke=\"#eee\"/>\n";
  }
  o << "<text x=\"" << px((left + W - right) / 2) << "\" y=\"" << px(H - 18)
    << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << px((top + H - bottom) / 2)
    << ") rotate(-90)\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
  for (size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (size_t i = 0; i < s.x.size(); ++i) pts += px(sx(s.x[i])) + "," + px(sy(s.y[i])) + " ";
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\""
      << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << " points=\"" << pts << "\"/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle cx=\"" << px(sx(s.x[i])) << "\" cy=\"" << px(sy(s.y[i]))
        << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      if (i < s.err.size() && s.err[i] > 0)
        o << "<line x1=\"" << px(sx(s.x[i])) << "\" y1=\"" << px(sy(s.y[i] - s.err[i]))
          << "\" x2=\"" << px(sx(s.x[i])) << "\" y2=\"" << px(sy(s.y[i] + s.err[i]))
          << "\" stroke=\"" << color << "\"/>\n";
    }
    const double ly = top + 18 * k + 10;
    o << "<line x1=\"" << px(W - right + 12) << "\" y1=\"" << px(ly) << "\" x2=\""
      << px(W - right + 32) << "\" y2=\"" << px(ly) << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6,4\"" : "") << "/>\n";
    o << "<text x=\"" << px(W - right + 38) << "\" y=\"" << px(ly + 4) << "\">"
      << xml_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_heatmap(const std::string& title, std::span<const std::string> row_labels,
                        std::span<const std::string> col_labels, std::span<const double> values) {
  const size_t R = row_labels.size(), C = col_labels.size();
  if (values.size() != R * C) throw ContractViolation("heatmap: value count mismatch");
  const double cell = 28, left = 60, top = 70;
  const double W = left + cell * C + 20, H = top + cell * R + 20;
  double mx = 0;
  for (double v : values) mx = std::max(mx, v);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << px(W / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
    << xml_escape(title) << "</text>\n";
  for (size_t j = 0; j < C; ++j)
    o << "<text x=\"" << px(left + cell * j + cell / 2) << "\" y=\"" << px(top - 8)
      << "\" text-anchor=\"middle\">" << xml_escape(col_labels[j]) << "</text>\n";
  for (size_t i = 0; i < R; ++i) {
    o << "<text x=\"" << px(left - 6) << "\" y=\"" << px(top + cell * i + cell / 2 + 4)
      << "\" text-anchor=\"end\">" << xml_escape(row_labels[i]) << "</text>\n";
    for (size_t j = 0; j < C; ++j) {
      const double v = values[i * C + j];
      const int shade = mx > 0 ? static_cast<int>(std::lround(255 * (1 - v / mx))) : 255;
      char fill[16];
      std::snprintf(fill, sizeof fill, "#%02x%02xff", shade, shade);
      o << "<rect x=\"" << px(left + cell * j) << "\" y=\"" << px(top + cell * i) << "\" width=\""
        << cell << "\" height=\"" << cell << "\" fill=\"" << fill
        << "\" stroke=\"#ccc\"><title>" << xml_escape(row_labels[i]) << " -> "
        << xml_escape(col_labels[j]) << ": " << format_number(v) << "</title></rect>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace instructrl
