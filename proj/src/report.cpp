#include "driftbench/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "driftbench/errors.hpp"
#include "driftbench/io.hpp"
#include "driftbench/snapshot.hpp"

namespace driftbench {

namespace {

bool selected(const SplitReport& r, const ReportSelector& s) {
  return r.view == s.view && r.metric == s.metric && r.split == s.split;
}

// pppl: lower is better; every other metric: higher is better.
bool better(const std::string& metric, double a, double b) { return metric == "pppl" ? a < b : a > b; }

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
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

std::string offset_label(long off) {
  if (off == 0) return "t";
  return off < 0 ? "t" + std::to_string(off) : "t+" + std::to_string(off);
}

}  // namespace

std::vector<std::string> order_backends(std::vector<std::string> names) {
  std::sort(names.begin(), names.end(), [](const auto& a, const auto& b) { return bucket_id_less(a, b); });
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

ResultTable emit_model_by_bucket_table(std::span<const SplitReport> reports, const ReportSelector& selector) {
  ResultTable t;
  t.selector = selector;
  t.title = selector.view + " / " + selector.metric + " / " + selector.split;
  std::map<std::pair<std::string, std::string>, double> values;
  std::vector<std::string> backends, buckets;
  for (const auto& r : reports) {
    if (!selected(r, selector)) continue;
    values[{r.backend, r.bucket}] = r.value;
    backends.push_back(r.backend);
    buckets.push_back(r.bucket);
  }
  t.rows = order_backends(std::move(backends));
  t.columns = order_backends(std::move(buckets));
  for (const auto& b : t.rows) {
    std::vector<std::optional<double>> row;
    for (const auto& c : t.columns) {
      auto it = values.find({b, c});
      row.push_back(it == values.end() ? std::nullopt : std::optional<double>(it->second));
    }
    t.cells.push_back(std::move(row));
    t.cell_buckets.push_back(t.columns);
  }
  return t;
}

WindowView emit_window_view(std::span<const SplitReport> reports, const ReportSelector& selector,
                            std::size_t window) {
  if (window == 0 || window % 2 == 0) throw ConfigError("window must be odd and >= 1");
  WindowView w;
  w.selector = selector;
  w.window = window;
  std::map<std::pair<std::string, std::string>, double> values;
  std::vector<std::string> backends;
  for (const auto& r : reports) {
    if (!selected(r, selector)) continue;
    values[{r.backend, r.bucket}] = r.value;
    backends.push_back(r.backend);
  }
  long half = static_cast<long>(window / 2);
  for (const auto& name : order_backends(std::move(backends))) {
    if (!is_bucket_id(name)) {
      w.skipped.push_back(name);
      continue;
    }
    WindowRow row;
    row.backend = name;
    auto first = TimeBucket::parse(name);
    for (long i = 0; i < half; ++i) first = first.prev();
    for (auto b = first; row.buckets.size() < window; b = b.next()) {
      row.buckets.push_back(b.bucket_id);
      auto it = values.find({name, b.bucket_id});
      row.values.push_back(it == values.end() ? std::nullopt : std::optional<double>(it->second));
    }
    const auto& mid = row.values[static_cast<std::size_t>(half)];
    bool others = false, peak = mid.has_value();
    for (std::size_t i = 0; i < row.values.size() && peak; ++i) {
      if (i == static_cast<std::size_t>(half) || !row.values[i]) continue;
      others = true;
      peak = better(selector.metric, *mid, *row.values[i]);
    }
    row.peak_in_middle = peak && others;
    w.rows.push_back(std::move(row));
  }
  return w;
}

ResultTable WindowView::as_table() const {
  ResultTable t;
  t.selector = selector;
  t.title = selector.view + " / " + selector.metric + " / " + selector.split + " (window " +
            std::to_string(window) + ")";
  long half = static_cast<long>(window / 2);
  for (long off = -half; off <= half; ++off) t.columns.push_back(offset_label(off));
  for (const auto& r : rows) {
    t.rows.push_back(r.backend);
    t.cells.push_back(r.values);
    t.cell_buckets.push_back(r.buckets);
  }
  return t;
}

std::string table_to_csv(const ResultTable& t) {
  std::string out = "backend";
  for (const auto& c : t.columns) out += "," + c;
  out += '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out += t.rows[r];
    for (const auto& cell : t.cells[r]) out += "," + (cell ? format_double(*cell) : std::string());
    out += '\n';
  }
  return out;
}

std::string window_to_csv(const WindowView& w) {
  auto t = w.as_table();
  std::string out = "backend";
  for (const auto& c : t.columns) out += "," + c;
  for (const auto& c : t.columns) out += ",bucket_" + c;
  out += ",peak_in_middle\n";
  for (const auto& row : w.rows) {
    out += row.backend;
    for (const auto& v : row.values) out += "," + (v ? format_double(*v) : std::string());
    for (const auto& b : row.buckets) out += "," + b;
    out += row.peak_in_middle ? ",1\n" : ",0\n";
  }
  return out;
}

std::string table_to_svg(const ResultTable& t) {
  constexpr double kWidth = 720, kHeight = 420, kLeft = 70, kRight = 150, kTop = 40, kBottom = 70;
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                   "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& row : t.cells) {
    for (const auto& c : row) {
      if (c && std::isfinite(*c)) {
        lo = std::min(lo, *c);
        hi = std::max(hi, *c);
      }
    }
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  auto x_at = [&](std::size_t i) {
    return t.columns.size() <= 1 ? kLeft + plot_w / 2 : kLeft + plot_w * static_cast<double>(i) / static_cast<double>(t.columns.size() - 1);
  };
  auto y_at = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kLeft << "\" y=\"22\" font-size=\"14\">" << xml_escape(t.title) << "</text>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w << "\" y2=\""
    << kTop + plot_h << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double v = lo + (hi - lo) * i / 4.0;
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << y_at(v) + 4 << "\" text-anchor=\"end\">" << fmt3(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    s << "<text x=\"" << x_at(i) << "\" y=\"" << kTop + plot_h + 16 << "\" text-anchor=\"end\" transform=\"rotate(-40 "
      << x_at(i) << ' ' << kTop + plot_h + 16 << ")\">" << xml_escape(t.columns[i]) << "</text>\n";
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const char* color = kPalette[r % (sizeof kPalette / sizeof *kPalette)];
    std::string points;
    for (std::size_t c = 0; c < t.cells[r].size(); ++c) {
      const auto& v = t.cells[r][c];
      if (!v || !std::isfinite(*v)) continue;
      points += (points.empty() ? "" : " ") + fmt3(x_at(c)) + "," + fmt3(y_at(*v));
      s << "<circle cx=\"" << x_at(c) << "\" cy=\"" << y_at(*v) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    if (!points.empty()) {
      s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    }
    double ly = kTop + 14.0 * static_cast<double>(r);
    s << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\"" << color
      << "\"/>\n";
    s << "<text x=\"" << kWidth - kRight + 28 << "\" y=\"" << ly + 9 << "\">" << xml_escape(t.rows[r]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string split_statistics_csv(std::span<const BucketSplits> splits) {
  std::string out = "bucket,unchanged,updated,deleted,new,total,pct_unchanged,pct_updated\n";
  char buf[64];
  for (const auto& s : splits) {
    auto total = s.counts.total();
    auto pct = [&](SplitLabel l) {
      std::snprintf(buf, sizeof buf, "%.1f", total ? 100.0 * static_cast<double>(s.counts[l]) / static_cast<double>(total) : 0.0);
      return std::string(buf);
    };
    out += s.bucket_id + ',' + std::to_string(s.counts[SplitLabel::kUnchanged]) + ',' +
           std::to_string(s.counts[SplitLabel::kUpdated]) + ',' + std::to_string(s.counts[SplitLabel::kDeleted]) +
           ',' + std::to_string(s.counts[SplitLabel::kNew]) + ',' + std::to_string(total) + ',' +
           pct(SplitLabel::kUnchanged) + ',' + pct(SplitLabel::kUpdated) + '\n';
  }
  return out;
}

}  // namespace driftbench
