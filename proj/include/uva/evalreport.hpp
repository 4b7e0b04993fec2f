#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace uva {

struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) noexcept {
    tp += o.tp, fp += o.fp, fn += o.fn, tn += o.tn;
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Predicted positive iff score >= threshold.
ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels, double threshold);

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when a ratio was 0/0 and reported as 0.
  bool degenerate = false;
};

Metrics metrics(const ConfusionMatrix& cm);

/// One rendered table line: a (model, configuration, threshold) cell.
struct MetricsRow {
  std::string model;
  std::string configuration;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  bool degenerate = false;
  ConfusionMatrix counts;
};

MetricsRow make_row(std::string model, std::string configuration, double threshold, const ConfusionMatrix& cm);

std::vector<MetricsRow> threshold_sweep(std::span<const double> scores, std::span<const int> labels,
                                        std::span<const double> thresholds, const std::string& model = "",
                                        const std::string& configuration = "");

enum class TableStyle { Markdown, Csv };

TableStyle parse_table_style(std::string_view name);

/// Columns: model, configuration, accuracy, precision, recall, f1 (4 decimals).
std::string render(const std::vector<MetricsRow>& rows, TableStyle style);

/// Reads back the output of render(). Only the rendered columns are recovered.
std::vector<MetricsRow> parse_table(std::string_view text, TableStyle style);

/// Lossless JSON dump consumed by the `report` command.
std::string rows_to_json(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> rows_from_json(std::string_view text);

/// Sorted by (model, configuration), stable for equal keys.
std::vector<MetricsRow> merge_rows(std::vector<std::vector<MetricsRow>> groups);

}  // namespace uva
