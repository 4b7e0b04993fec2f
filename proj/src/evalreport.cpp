#include "uva/evalreport.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>

#include "uva/common.hpp"

namespace uva {

using nlohmann::json;

ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  if (scores.size() != labels.size())
    throw invalid_argument("confusion: " + std::to_string(scores.size()) + " scores but " +
                           std::to_string(labels.size()) + " labels");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] != 0;
    if (pred && truth) {
      ++cm.tp;
    } else if (pred) {
      ++cm.fp;
    } else if (truth) {
      ++cm.fn;
    } else {
      ++cm.tn;
    }
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  Metrics m;
  auto ratio = [&m](double num, double den) {
    if (den == 0.0) {
      m.degenerate = true;
      return 0.0;
    }
    return num / den;
  };
  const auto tp = static_cast<double>(cm.tp);
  m.accuracy = ratio(static_cast<double>(cm.tp + cm.tn), static_cast<double>(cm.total()));
  m.precision = ratio(tp, static_cast<double>(cm.tp + cm.fp));
  m.recall = ratio(tp, static_cast<double>(cm.tp + cm.fn));
  m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

MetricsRow make_row(std::string model, std::string configuration, double threshold, const ConfusionMatrix& cm) {
  const Metrics m = metrics(cm);
  MetricsRow row;
  row.model = std::move(model);
  row.configuration = std::move(configuration);
  row.accuracy = m.accuracy;
  row.precision = m.precision;
  row.recall = m.recall;
  row.f1 = m.f1;
  row.threshold = threshold;
  row.degenerate = m.degenerate;
  row.counts = cm;
  return row;
}

std::vector<MetricsRow> threshold_sweep(std::span<const double> scores, std::span<const int> labels,
                                        std::span<const double> thresholds, const std::string& model,
                                        const std::string& configuration) {
  if (thresholds.empty()) throw invalid_argument("threshold sweep needs at least one threshold");
  std::vector<MetricsRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) rows.push_back(make_row(model, configuration, t, confusion(scores, labels, t)));
  return rows;
}

TableStyle parse_table_style(std::string_view name) {
  if (name == "markdown" || name == "md") return TableStyle::Markdown;
  if (name == "csv") return TableStyle::Csv;
  throw invalid_argument("unknown table style '" + std::string(name) + "' (markdown, csv)");
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> parse_csv_line(std::string_view line, std::size_t lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError(lineno, "unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

constexpr const char* kColumns[] = {"Model", "Configuration", "Accuracy", "Precision", "Recall", "F1"};

}  // namespace

std::string render(const std::vector<MetricsRow>& rows, TableStyle style) {
  std::string out;
  if (style == TableStyle::Csv) {
    out = "model,configuration,accuracy,precision,recall,f1\n";
    for (const auto& r : rows)
      out += csv_field(r.model) + "," + csv_field(r.configuration) + "," + fixed4(r.accuracy) + "," +
             fixed4(r.precision) + "," + fixed4(r.recall) + "," + fixed4(r.f1) + "\n";
    return out;
  }
  out = "|";
  for (const char* c : kColumns) out += std::string(" ") + c + " |";
  out += "\n|---|---|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    // Pipes inside labels would break the table; they are escaped.
    auto esc = [](const std::string& s) {
      std::string e;
      for (char c : s) {
        if (c == '|') e += '\\';
        e += c;
      }
      return e;
    };
    out += "| " + esc(r.model) + " | " + esc(r.configuration) + " | " + fixed4(r.accuracy) + " | " +
           fixed4(r.precision) + " | " + fixed4(r.recall) + " | " + fixed4(r.f1) + " |\n";
  }
  return out;
}

std::vector<MetricsRow> parse_table(std::string_view text, TableStyle style) {
  std::vector<MetricsRow> rows;
  std::size_t lineno = 0;
  for (auto line : split(text, '\n')) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    if (style == TableStyle::Csv) {
      if (lineno == 1) continue;
      cells = parse_csv_line(line, lineno);
    } else {
      if (lineno <= 2) continue;
      if (line.front() != '|' || line.back() != '|') throw ParseError(lineno, "markdown row must start and end with '|'");
      std::string cur;
      for (std::size_t i = 1; i + 1 < line.size(); ++i) {
        if (line[i] == '\\' && i + 2 < line.size() && line[i + 1] == '|') {
          cur += '|';
          ++i;
        } else if (line[i] == '|') {
          cells.emplace_back(trim(cur));
          cur.clear();
        } else {
          cur += line[i];
        }
      }
      cells.emplace_back(trim(cur));
    }
    if (cells.size() != 6) throw ParseError(lineno, "expected 6 columns, got " + std::to_string(cells.size()));
    MetricsRow r;
    r.model = cells[0];
    r.configuration = cells[1];
    r.accuracy = parse_double(cells[2], lineno);
    r.precision = parse_double(cells[3], lineno);
    r.recall = parse_double(cells[4], lineno);
    r.f1 = parse_double(cells[5], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string rows_to_json(const std::vector<MetricsRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    arr.push_back({{"model", r.model},
                   {"configuration", r.configuration},
                   {"accuracy", r.accuracy},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1},
                   {"threshold", r.threshold},
                   {"degenerate", r.degenerate},
                   {"tp", r.counts.tp},
                   {"fp", r.counts.fp},
                   {"fn", r.counts.fn},
                   {"tn", r.counts.tn}});
  }
  return json{{"rows", arr}}.dump(2) + "\n";
}

std::vector<MetricsRow> rows_from_json(std::string_view text) {
  std::vector<MetricsRow> rows;
  try {
    json doc = json::parse(text);
    for (const auto& j : doc.at("rows")) {
      MetricsRow r;
      r.model = j.at("model").get<std::string>();
      r.configuration = j.at("configuration").get<std::string>();
      r.accuracy = j.at("accuracy").get<double>();
      r.precision = j.at("precision").get<double>();
      r.recall = j.at("recall").get<double>();
      r.f1 = j.at("f1").get<double>();
      r.threshold = j.at("threshold").get<double>();
      r.degenerate = j.value("degenerate", false);
      r.counts = {j.value("tp", std::uint64_t{0}), j.value("fp", std::uint64_t{0}), j.value("fn", std::uint64_t{0}),
                  j.value("tn", std::uint64_t{0})};
      rows.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("metrics dump: ") + e.what());
  }
  return rows;
}

std::vector<MetricsRow> merge_rows(std::vector<std::vector<MetricsRow>> groups) {
  std::vector<MetricsRow> all;
  for (auto& g : groups) all.insert(all.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
  std::stable_sort(all.begin(), all.end(), [](const MetricsRow& a, const MetricsRow& b) {
    if (a.model != b.model) return a.model < b.model;
    return a.configuration < b.configuration;
  });
  return all;
}

}  // namespace uva
