// Copyright 2026 The repsup Authors
// SPDX-License-Identifier: Apache-2.0

#include "repsup/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace repsup {

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string format_general(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::string format_fixed(double value, int decimals) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string s = buf;
  if (s == "-0" || s.rfind("-0.", 0) == 0) {
    if (s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  }
  return s;
}

std::vector<std::string> metric_headers(bool screening) {
  std::vector<std::string> h = {"BLEU (add-1)↑", "Rouge-L↑", "rep-2↓", "rep-3↓",
                                "rep-w↓",        "rep-r↓",   "div↑"};
  if (screening) h.push_back("uniq-1↑");
  return h;
}

std::vector<std::string> metric_cells(const MetricsReport& r, bool screening) {
  std::vector<std::string> c = {format_fixed(r.bleu, 2),  format_fixed(r.rouge_l, 4),
                                format_fixed(r.rep2, 2),  format_fixed(r.rep3, 2),
                                format_fixed(r.rep_w, 4), format_fixed(r.rep_r, 4),
                                format_fixed(r.div, 4)};
  if (screening) c.push_back(std::to_string(r.uniq1));
  return c;
}

Table metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                    const std::string& label_header, bool screening) {
  Table t;
  t.header.push_back(label_header);
  for (auto& h : metric_headers(screening)) t.header.push_back(h);
  for (const auto& [label, report] : rows) {
    std::vector<std::string> row{label};
    for (auto& c : metric_cells(report, screening)) row.push_back(c);
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table sweep_table(const std::vector<SweepCell>& cells) {
  Table t;
  t.header = {"Weight", "PredToken", "T"};
  const auto metrics = metric_headers();
  t.header.insert(t.header.end(), metrics.begin(), metrics.end());
  for (const auto& cell : cells) {
    std::vector<std::string> row{format_general(cell.weight), std::to_string(cell.window),
                                 format_general(cell.temperature)};
    if (cell.report) {
      for (auto& c : metric_cells(*cell.report)) row.push_back(c);
    } else {
      row.insert(row.end(), metrics.size(), "failed");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string to_csv(const Table& table) {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(',');
      out += csv_cell(cells[i]);
    }
    out.push_back('\n');
  };
  line(table.header);
  for (const auto& r : table.rows) line(r);
  return out;
}

std::string to_markdown(const Table& table) {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& cells) {
    out += "|";
    for (const auto& c : cells) out += " " + md_cell(c) + " |";
    out.push_back('\n');
  };
  line(table.header);
  out += "|";
  for (std::size_t i = 0; i < table.header.size(); ++i) out += i ? " ---: |" : " --- |";
  out.push_back('\n');
  for (const auto& r : table.rows) line(r);
  return out;
}

std::string matrix_csv(const DenseMatrix& m, const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels) {
  Table t;
  t.header.push_back("");
  for (std::size_t c = 0; c < m.cols; ++c) {
    t.header.push_back(c < col_labels.size() ? col_labels[c] : std::to_string(c));
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    std::vector<std::string> row{r < row_labels.size() ? row_labels[r] : std::to_string(r)};
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(format_fixed(m.at(r, c), 6));
    t.rows.push_back(std::move(row));
  }
  return to_csv(t);
}

std::string heatmap_svg(const DenseMatrix& m, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels, const std::string& title) {
  constexpr int kCell = 28, kLeft = 110, kTop = 110, kPad = 20;
  const int width = kLeft + static_cast<int>(m.cols) * kCell + kPad;
  const int height = kTop + static_cast<int>(m.rows) * kCell + kPad;
  double hi = 0.0;
  for (double v : m.values) hi = std::max(hi, v);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"monospace\" "
     << "font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kPad << "\" y=\"18\" font-size=\"13\">" << xml_escape(title) << "</text>\n";
  for (std::size_t c = 0; c < m.cols; ++c) {
    const int x = kLeft + static_cast<int>(c) * kCell + kCell / 2;
    const std::string label = c < col_labels.size() ? col_labels[c] : std::to_string(c);
    os << "<text x=\"" << x << "\" y=\"" << kTop - 6 << "\" transform=\"rotate(-60 " << x << ' '
       << kTop - 6 << ")\">" << xml_escape(label) << "</text>\n";
  }
  for (std::size_t r = 0; r < m.rows; ++r) {
    const int y = kTop + static_cast<int>(r) * kCell;
    const std::string label = r < row_labels.size() ? row_labels[r] : std::to_string(r);
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + kCell / 2 + 4
       << "\" text-anchor=\"end\">" << xml_escape(label) << "</text>\n";
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double v = m.at(r, c);
      const double s = hi > 0.0 ? std::clamp(v / hi, 0.0, 1.0) : 0.0;
      const auto channel = [s](int full) {
        return static_cast<int>(std::lround(255.0 + (full - 255.0) * s));
      };
      os << "<rect x=\"" << kLeft + static_cast<int>(c) * kCell << "\" y=\"" << y
         << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\"rgb(" << channel(8)
         << ',' << channel(48) << ',' << channel(107) << ")\"><title>"
         << format_fixed(v, 4) << "</title></rect>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace repsup
