#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sdsclip/eval/harness.hpp"

namespace sdsclip::report {

using eval::MetricsRecord;

inline void append_record_jsonl(const std::string& path, const MetricsRecord& rec) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open " + path + " for appending");
  f << rec.to_json().dump() << "\n";
  if (!f) throw std::runtime_error("short write to " + path);
}

inline std::vector<MetricsRecord> read_records_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(MetricsRecord::from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw std::runtime_error(path + ": no records");
  return out;
}

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct MeanStd {
  double mean = 0.0;
  double stdev = 0.0;
  int n = 0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  m.n = static_cast<int>(xs.size());
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= xs.size();
  for (double x : xs) m.stdev += (x - m.mean) * (x - m.mean);
  m.stdev = xs.size() > 1 ? std::sqrt(m.stdev / (xs.size() - 1.0)) : 0.0;
  return m;
}

inline std::string cell(const std::vector<double>& xs) {
  if (xs.empty()) return "";
  const auto m = mean_std(xs);
  return fmt(m.mean) + "±" + fmt(m.stdev);
}

inline const std::vector<std::string>& split_order() {
  static const std::vector<std::string> order = {"winoground", "aro_attribution", "aro_relation", "ordering",
                                                 "zeroshot"};
  return order;
}

inline const std::vector<std::string>& mode_order() {
  static const std::vector<std::string> order = {"none", "clip-only", "clip+sds", "clip+feature-distill"};
  return order;
}

inline int order_index(const std::vector<std::string>& order, const std::string& v) {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == v) return static_cast<int>(i);
  return static_cast<int>(order.size());
}

}  // namespace detail

// Aggregated mean ± stdev over seeds, one row per (split, scorer, mode).
// "overall" is the text score for pair-matching splits and the accuracy for
// the rest; tag and predicate columns are text scores.
struct Table1Row {
  std::string split, scorer, mode;
  int seeds = 0;
  std::string overall, object, relation, both, pred1, pred2;
};

inline std::vector<Table1Row> aggregate_table1(const std::vector<MetricsRecord>& records) {
  std::map<std::tuple<int, std::string, std::string, int, std::string>, std::vector<MetricsRecord>> groups;
  for (const auto& r : records) {
    groups[{detail::order_index(detail::split_order(), r.split), r.split, r.scorer,
            detail::order_index(detail::mode_order(), r.mode), r.mode}]
        .push_back(r);
  }
  std::vector<Table1Row> rows;
  for (const auto& [key, group] : groups) {
    Table1Row row;
    row.split = std::get<1>(key);
    row.scorer = std::get<2>(key);
    row.mode = std::get<4>(key);
    row.seeds = static_cast<int>(group.size());
    std::vector<double> overall, object, relation, both, pred1, pred2;
    for (const auto& r : group) {
      overall.push_back(std::isnan(r.text_score) ? r.accuracy : r.text_score);
      const auto tag = [&r](const char* name, std::vector<double>& out) {
        const auto it = r.tag_scores.find(name);
        if (it != r.tag_scores.end()) out.push_back(it->second.text);
      };
      tag("object", object);
      tag("relation", relation);
      tag("both", both);
      if (r.predicate_scores.count(1)) pred1.push_back(r.predicate_scores.at(1).text);
      if (r.predicate_scores.count(2)) pred2.push_back(r.predicate_scores.at(2).text);
    }
    row.overall = detail::cell(overall);
    row.object = detail::cell(object);
    row.relation = detail::cell(relation);
    row.both = detail::cell(both);
    row.pred1 = detail::cell(pred1);
    row.pred2 = detail::cell(pred2);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_table1_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  const auto rows = aggregate_table1(records);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "split,scorer,mode,seeds,overall,object,relation,both,pred1,pred2\n";
  for (const auto& r : rows) {
    f << r.split << ',' << r.scorer << ',' << r.mode << ',' << r.seeds << ',' << r.overall << ',' << r.object
      << ',' << r.relation << ',' << r.both << ',' << r.pred1 << ',' << r.pred2 << "\n";
  }
}

inline std::vector<Table1Row> parse_table1_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<Table1Row> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    cells.resize(10);
    Table1Row r;
    r.split = cells[0];
    r.scorer = cells[1];
    r.mode = cells[2];
    r.seeds = std::stoi(cells[3]);
    r.overall = cells[4];
    r.object = cells[5];
    r.relation = cells[6];
    r.both = cells[7];
    r.pred1 = cells[8];
    r.pred2 = cells[9];
    rows.push_back(std::move(r));
  }
  return rows;
}

// mean of the "mean" half of a mean±std cell
inline double cell_mean(const std::string& cell) {
  const auto pos = cell.find("±");
  return std::stod(pos == std::string::npos ? cell : cell.substr(0, pos));
}

// ---------------------------------------------------------------------------
// latency / zero-shot side tables and SVG bar charts
// ---------------------------------------------------------------------------

inline void write_latency_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::map<std::string, std::vector<double>> by_scorer;
  for (const auto& r : records)
    if (!std::isnan(r.mean_latency_s)) by_scorer[r.scorer].push_back(r.mean_latency_s);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "scorer,mean_seconds,records\n";
  for (const auto& [scorer, xs] : by_scorer) {
    const auto m = detail::mean_std(xs);
    f << scorer << ',' << detail::fmt(m.mean) << ',' << m.n << "\n";
  }
}

inline void write_zeroshot_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::map<int, std::pair<std::string, std::vector<double>>> by_mode;
  for (const auto& r : records) {
    if (r.split != "zeroshot" || std::isnan(r.accuracy)) continue;
    by_mode[detail::order_index(detail::mode_order(), r.mode)] = {r.mode, {}};
  }
  for (const auto& r : records) {
    if (r.split != "zeroshot" || std::isnan(r.accuracy)) continue;
    by_mode[detail::order_index(detail::mode_order(), r.mode)].second.push_back(r.accuracy);
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "mode,accuracy,stdev,seeds\n";
  for (const auto& [idx, entry] : by_mode) {
    const auto m = detail::mean_std(entry.second);
    f << entry.first << ',' << detail::fmt(m.mean) << ',' << detail::fmt(m.stdev) << ',' << m.n << "\n";
  }
}

// minimal hand-emitted bar chart; no external renderer
inline void write_bar_svg(const std::string& path, const std::string& title,
                          const std::vector<std::pair<std::string, double>>& bars) {
  const int width = 520, height = 300, margin = 50;
  double peak = 1e-12;
  for (const auto& [label, v] : bars) peak = std::max(peak, v);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  f << "  <text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n";
  f << "  <line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\"" << width - 10 << "\" y2=\""
    << height - margin << "\" stroke=\"black\"/>\n";
  const double span = static_cast<double>(width - margin - 20) / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double h = (height - 2 * margin) * bars[i].second / peak;
    const double x = margin + 10 + span * static_cast<double>(i);
    f << "  <rect x=\"" << x << "\" y=\"" << (height - margin - h) << "\" width=\"" << span * 0.6
      << "\" height=\"" << h << "\" fill=\"#4477aa\"/>\n";
    f << "  <text x=\"" << x + span * 0.3 << "\" y=\"" << height - margin + 16
      << "\" text-anchor=\"middle\" font-size=\"11\">" << bars[i].first << "</text>\n";
    f << "  <text x=\"" << x + span * 0.3 << "\" y=\"" << (height - margin - h - 6)
      << "\" text-anchor=\"middle\" font-size=\"10\">" << detail::fmt(bars[i].second) << "</text>\n";
  }
  f << "</svg>\n";
}

inline void write_latency_svg(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::map<std::string, std::vector<double>> by_scorer;
  for (const auto& r : records)
    if (!std::isnan(r.mean_latency_s)) by_scorer[r.scorer].push_back(r.mean_latency_s);
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& [scorer, xs] : by_scorer) bars.emplace_back(scorer, detail::mean_std(xs).mean);
  write_bar_svg(path, "mean seconds per task", bars);
}

inline void write_zeroshot_svg(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::map<int, std::pair<std::string, std::vector<double>>> by_mode;
  for (const auto& r : records) {
    if (r.split != "zeroshot" || std::isnan(r.accuracy)) continue;
    auto& slot = by_mode[detail::order_index(detail::mode_order(), r.mode)];
    slot.first = r.mode;
    slot.second.push_back(r.accuracy);
  }
  std::vector<std::pair<std::string, double>> bars;
  for (const auto& [idx, entry] : by_mode) bars.emplace_back(entry.first, detail::mean_std(entry.second).mean);
  write_bar_svg(path, "zero-shot accuracy by mode", bars);
}

// table1.csv + latency.csv/svg + zeroshot.csv/svg from a records file
inline void emit_reports(const std::string& records_path, const std::string& out_dir) {
  const auto records = read_records_jsonl(records_path);
  write_table1_csv(out_dir + "/table1.csv", records);
  write_latency_csv(out_dir + "/latency.csv", records);
  write_latency_svg(out_dir + "/latency.svg", records);
  write_zeroshot_csv(out_dir + "/zeroshot.csv", records);
  write_zeroshot_svg(out_dir + "/zeroshot.svg", records);
}

inline void write_summary_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "split,scorer,mode,seed,n_tasks,text,image,group,accuracy,object_text,relation_text,both_text,pred1_text,"
       "pred2_text,mean_latency_s,checkpoint\n";
  const auto num = [](double v) { return std::isnan(v) ? std::string() : detail::fmt(v); };
  for (const auto& r : records) {
    const auto tag = [&r](const char* name) {
      const auto it = r.tag_scores.find(name);
      return it == r.tag_scores.end() ? std::string() : detail::fmt(it->second.text);
    };
    f << r.split << ',' << r.scorer << ',' << r.mode << ',' << r.seed << ',' << r.n_tasks << ',' << num(r.text_score)
      << ',' << num(r.image_score) << ',' << num(r.group_score) << ',' << num(r.accuracy) << ',' << tag("object")
      << ',' << tag("relation") << ',' << tag("both") << ','
      << (r.predicate_scores.count(1) ? detail::fmt(r.predicate_scores.at(1).text) : "") << ','
      << (r.predicate_scores.count(2) ? detail::fmt(r.predicate_scores.at(2).text) : "") << ','
      << num(r.mean_latency_s) << ',' << r.checkpoint_hash << "\n";
  }
}

}  // namespace sdsclip::report
