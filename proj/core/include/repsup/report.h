// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tabular reports (CSV and Markdown) and standalone SVG heatmaps.
//
// Metric columns, in order: BLEU (add-1), Rouge-L, rep-2, rep-3, rep-w,
// rep-r, div, and uniq-1 in screening mode.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "repsup/attribution.h"
#include "repsup/metrics.h"
#include "repsup/trainer.h"

namespace repsup {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> metric_headers(bool screening = false);
/// Fixed-precision cells: BLEU and rep-n with 2 decimals, fractions with 4.
std::vector<std::string> metric_cells(const MetricsReport& report, bool screening = false);

/// One row per (label, report); the label column is headed `label_header`.
Table metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                    const std::string& label_header = "Method", bool screening = false);

/// Weight, PredToken, T, then the metric columns. Failed cells show
/// "failed" in every metric column.
Table sweep_table(const std::vector<SweepCell>& cells);

/// RFC 4180 quoting where needed; "\n" line endings.
std::string to_csv(const Table& table);
/// GitHub-flavoured pipe table.
std::string to_markdown(const Table& table);

/// Matrix as CSV with a leading label column.
std::string matrix_csv(const DenseMatrix& m, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels);

/// Self-contained SVG heatmap (white = 0, dark blue = max of the matrix).
std::string heatmap_svg(const DenseMatrix& m, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title);

/// Fixed "%.*f" formatting, independent of the global locale.
std::string format_fixed(double value, int decimals);

}  // namespace repsup
