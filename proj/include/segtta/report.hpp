#ifndef SEGTTA_REPORT_HPP
#define SEGTTA_REPORT_HPP

// Result tables (CSV / markdown) and the JSON form of a RunResult.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "segtta/error.hpp"
#include "segtta/metrics.hpp"
#include "segtta/pipeline.hpp"

namespace segtta {

enum class ReportFormat { Csv, Markdown };

inline ReportFormat report_format_from(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "markdown" || s == "md") return ReportFormat::Markdown;
  fail(ErrorCode::InvalidArgument, "unknown report format '" + s + "' (csv|markdown)");
}

namespace detail {

inline std::string format_value(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

inline std::string format_delta(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.6f", *v);
  std::string s = buf;
  return s == "-0.000000" ? "+0.000000" : s;
}

struct Row {
  std::string method;
  std::string case_id;
  std::vector<std::optional<double>> metrics;
  std::optional<double> foreground;
};

/// Metric columns: binary tasks report IoU/Dice/HD95, multi-class tasks
/// mIoU/aIoU/mDice/aDice/HD95.
inline std::vector<std::string> metric_columns(int num_classes) {
  if (num_classes == 2) return {"IoU", "Dice", "HD95"};
  return {"mIoU", "aIoU", "mDice", "aDice", "HD95"};
}

inline std::vector<std::optional<double>> metric_values(int num_classes, const MetricReport* r) {
  const std::size_t n = num_classes == 2 ? 3 : 5;
  if (!r) return std::vector<std::optional<double>>(n);
  if (num_classes == 2) return {r->miou, r->mdice, r->hd95_mm};
  return {r->miou, r->aiou, r->mdice, r->adice, r->hd95_mm};
}

inline std::vector<std::optional<double>> metric_values(int num_classes, const Aggregate& a) {
  const std::size_t n = num_classes == 2 ? 3 : 5;
  if (a.cases == 0) return std::vector<std::optional<double>>(n);
  if (num_classes == 2) return {a.miou, a.mdice, a.hd95_mm};
  return {a.miou, a.aiou, a.mdice, a.adice, a.hd95_mm};
}

inline std::vector<std::vector<std::string>> report_table(const RunResult& r) {
  const bool with_fg = r.kind == "sweep";
  std::vector<std::string> header{"method", "case"};
  for (const auto& c : metric_columns(r.num_classes)) header.push_back(c);
  if (with_fg) header.push_back("FG_mm3");
  for (const auto& c : metric_columns(r.num_classes)) header.push_back("d" + c);

  const auto case_row = [&](const std::string& variant, const CaseOutcome& c) {
    auto it = c.metrics.find(variant);
    Row row{variant, c.case_id, metric_values(r.num_classes, it == c.metrics.end() ? nullptr : &it->second), {}};
    if (auto fg = c.foreground_mm3.find(variant); fg != c.foreground_mm3.end()) row.foreground = fg->second;
    return row;
  };
  const auto mean_row = [&](const std::string& variant) {
    auto it = r.aggregates.find(variant);
    const Aggregate a = it == r.aggregates.end() ? Aggregate{} : it->second;
    return Row{variant, "mean", metric_values(r.num_classes, a), a.foreground_mm3};
  };
  const auto render = [&](const Row& row, const Row& ref) {
    std::vector<std::string> cells{row.method, row.case_id};
    for (const auto& v : row.metrics) cells.push_back(format_value(v));
    if (with_fg) cells.push_back(format_value(row.foreground));
    for (std::size_t k = 0; k < row.metrics.size(); ++k) {
      std::optional<double> d;
      if (row.metrics[k] && ref.metrics[k]) d = *row.metrics[k] - *ref.metrics[k];
      cells.push_back(format_delta(d));
    }
    return cells;
  };

  std::vector<std::vector<std::string>> table{header};
  bool any_case = false;
  for (const auto& c : r.cases) any_case = any_case || !c.error;
  if (!any_case) return table;
  for (const auto& variant : r.variants) {
    for (const auto& c : r.cases) {
      if (c.error) continue;
      table.push_back(render(case_row(variant, c), case_row(r.reference, c)));
    }
    table.push_back(render(mean_row(variant), mean_row(r.reference)));
  }
  return table;
}

}  // namespace detail

/// Renders the per-case and mean rows of every variant, with signed deltas
/// against the reference variant.
inline std::string emit_report(const RunResult& r, ReportFormat format) {
  const auto table = detail::report_table(r);
  std::ostringstream out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& row = table[i];
    if (format == ReportFormat::Csv) {
      for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << row[k];
      out << '\n';
    } else {
      out << '|';
      for (const auto& cell : row) out << ' ' << cell << " |";
      out << '\n';
      if (i == 0) {
        out << '|';
        for (std::size_t k = 0; k < row.size(); ++k) out << (k < 2 ? "---|" : "---:|");
        out << '\n';
      }
    }
  }
  return out.str();
}

inline void write_report(const RunResult& r, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot create '" + path.string() + "'");
  out << emit_report(r, format);
  if (!out) fail(ErrorCode::IoFailure, "write error in '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const MetricReport& m) {
  nlohmann::json iou = nlohmann::json::object(), dice = nlohmann::json::object();
  for (const auto& [k, v] : m.per_class_iou) iou[std::to_string(k)] = v;
  for (const auto& [k, v] : m.per_class_dice) dice[std::to_string(k)] = v;
  nlohmann::json j{{"per_class_iou", iou}, {"per_class_dice", dice}, {"miou", m.miou}, {"mdice", m.mdice},
                   {"aiou", m.aiou},       {"adice", m.adice}};
  j["hd95_mm"] = m.hd95_mm ? nlohmann::json(*m.hd95_mm) : nlohmann::json(nullptr);
  if (!m.undefined_reason.empty()) j["undefined_reason"] = m.undefined_reason;
  return j;
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport m;
  for (const auto& [k, v] : j.at("per_class_iou").items()) m.per_class_iou[std::stoi(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("per_class_dice").items()) m.per_class_dice[std::stoi(k)] = v.get<double>();
  m.miou = j.at("miou").get<double>();
  m.mdice = j.at("mdice").get<double>();
  m.aiou = j.at("aiou").get<double>();
  m.adice = j.at("adice").get<double>();
  if (!j.at("hd95_mm").is_null()) m.hd95_mm = j.at("hd95_mm").get<double>();
  if (j.contains("undefined_reason")) m.undefined_reason = j.at("undefined_reason").get<std::string>();
  return m;
}

inline nlohmann::json to_json(const Aggregate& a) {
  nlohmann::json j{{"cases", a.cases}, {"miou", a.miou},   {"mdice", a.mdice},
                   {"aiou", a.aiou},   {"adice", a.adice}, {"hd95_undefined", a.hd95_undefined},
                   {"foreground_mm3", a.foreground_mm3}};
  j["hd95_mm"] = a.hd95_mm ? nlohmann::json(*a.hd95_mm) : nlohmann::json(nullptr);
  return j;
}

inline Aggregate aggregate_from_json(const nlohmann::json& j) {
  Aggregate a;
  a.cases = j.at("cases").get<std::size_t>();
  a.miou = j.at("miou").get<double>();
  a.mdice = j.at("mdice").get<double>();
  a.aiou = j.at("aiou").get<double>();
  a.adice = j.at("adice").get<double>();
  a.hd95_undefined = j.at("hd95_undefined").get<std::size_t>();
  a.foreground_mm3 = j.at("foreground_mm3").get<double>();
  if (!j.at("hd95_mm").is_null()) a.hd95_mm = j.at("hd95_mm").get<double>();
  return a;
}

/// Timing and cache statistics are left out so the document is reproducible.
inline nlohmann::json to_json(const RunResult& r) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : r.cases) {
    nlohmann::json jc{{"id", c.case_id}};
    if (c.error) jc["error"] = *c.error;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [v, m] : c.metrics) metrics[v] = to_json(m);
    jc["metrics"] = std::move(metrics);
    jc["foreground_mm3"] = c.foreground_mm3;
    cases.push_back(std::move(jc));
  }
  nlohmann::json aggregates = nlohmann::json::object();
  for (const auto& [v, a] : r.aggregates) aggregates[v] = to_json(a);
  return {{"kind", r.kind},           {"dataset", r.dataset}, {"num_classes", r.num_classes},
          {"variants", r.variants},   {"reference", r.reference}, {"cases", std::move(cases)},
          {"aggregates", std::move(aggregates)}, {"config", r.config}};
}

inline RunResult run_result_from_json(const nlohmann::json& j) {
  RunResult r;
  try {
    r.kind = j.at("kind").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.num_classes = j.at("num_classes").get<int>();
    r.variants = j.at("variants").get<std::vector<std::string>>();
    r.reference = j.at("reference").get<std::string>();
    for (const auto& jc : j.at("cases")) {
      CaseOutcome c;
      c.case_id = jc.at("id").get<std::string>();
      if (jc.contains("error")) c.error = jc.at("error").get<std::string>();
      for (const auto& [v, m] : jc.at("metrics").items()) c.metrics[v] = metric_report_from_json(m);
      c.foreground_mm3 = jc.at("foreground_mm3").get<std::map<std::string, double>>();
      r.cases.push_back(std::move(c));
    }
    for (const auto& [v, a] : j.at("aggregates").items()) r.aggregates[v] = aggregate_from_json(a);
    r.config = j.at("config");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed run result: ") + e.what());
  }
  return r;
}

}  // namespace segtta

#endif  // SEGTTA_REPORT_HPP
