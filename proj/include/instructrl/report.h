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

// CSV tables and small SVG charts for analysis output. CSV is the contract;
// the SVGs are a convenience view of the same numbers.

#ifndef INSTRUCTRL_REPORT_H_
#define INSTRUCTRL_REPORT_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace instructrl {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  // RFC 4180 quoting where needed; "\n" line ends.
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;
};

// Shortest decimal that round-trips (std::to_chars).
std::string format_number(double v);

void write_text_file(const std::filesystem::path& path, const std::string& content);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
  std::vector<double> err;  // optional error bars (same length as y)
  bool dashed = false;
};

std::string svg_line_plot(const std::string& title, const std::string& x_label,
                          const std::string& y_label, std::span<const PlotSeries> series);
// values is rows x cols, row-major. Darker is larger.
std::string svg_heatmap(const std::string& title, std::span<const std::string> row_labels,
                        std::span<const std::string> col_labels, std::span<const double> values);

}  // namespace instructrl

#endif  // INSTRUCTRL_REPORT_H_
