#pragma once

// Result tables mirroring the model x bucket layouts, the t-1/t/t+1 window
// view, split statistics and a small SVG line-chart renderer.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "driftbench/metrics.hpp"
#include "driftbench/splits.hpp"

namespace driftbench {

struct ReportSelector {
  std::string view;
  std::string metric;
  std::string split = std::string(kOverallSplit);
};

struct ResultTable {
  std::string title;
  ReportSelector selector;
  std::vector<std::string> rows;     // backends
  std::vector<std::string> columns;  // buckets or window offsets
  std::vector<std::vector<std::optional<double>>> cells;
  // Bucket behind each cell; differs per row in window views.
  std::vector<std::vector<std::string>> cell_buckets;

  std::optional<double> at(std::size_t r, std::size_t c) const { return cells[r][c]; }
};

// Chronological when names are bucket ids; other names follow, alphabetically.
std::vector<std::string> order_backends(std::vector<std::string> names);

// Rows = backends, columns = buckets; missing cells are absent.
ResultTable emit_model_by_bucket_table(std::span<const SplitReport> reports,
                                       const ReportSelector& selector);

struct WindowRow {
  std::string backend;
  std::vector<std::string> buckets;  // centered on the backend's own bucket
  std::vector<std::optional<double>> values;
  // Middle cell strictly above every other present cell.
  bool peak_in_middle = false;
};

struct WindowView {
  ReportSelector selector;
  std::size_t window = 3;
  std::vector<WindowRow> rows;
  std::vector<std::string> skipped;  // backend names that are not bucket ids

  // Columns "t-1", "t", "t+1", ... for CSV output.
  ResultTable as_table() const;
};

// Throws ConfigError if window is even or zero.
WindowView emit_window_view(std::span<const SplitReport> reports, const ReportSelector& selector,
                            std::size_t window);

std::string table_to_csv(const ResultTable& t);
std::string window_to_csv(const WindowView& w);

// Line chart: one polyline per row over the table's columns.
std::string table_to_svg(const ResultTable& t);

// Per-bucket counts per label, with %unchanged and %updated.
std::string split_statistics_csv(std::span<const BucketSplits> splits);

}  // namespace driftbench
