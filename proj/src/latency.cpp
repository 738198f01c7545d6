#include "sphynx/latency.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sphynx/error.hpp"

namespace sphynx::latency {

namespace {

// Shortest decimal string that parses back to exactly v.
std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string line_context(size_t line) {
  std::ostringstream ctx;
  ctx << "line " << line;
  return ctx.str();
}

}  // namespace

LatencyModel calibrate(const std::vector<std::pair<long long, double>>& points) {
  if (points.size() < 2)
    throw Error("degenerate", "calibration needs at least two points");
  double mx = 0.0, my = 0.0;
  for (const auto& [relus, ms] : points) {
    if (relus <= 0 || ms <= 0.0)
      throw Error("invalid-point", "relus and latency must be positive");
    mx += static_cast<double>(relus);
    my += ms;
  }
  mx /= static_cast<double>(points.size());
  my /= static_cast<double>(points.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [relus, ms] : points) {
    const double dx = static_cast<double>(relus) - mx;
    sxx += dx * dx;
    sxy += dx * (ms - my);
  }
  if (sxx == 0.0)
    throw Error("degenerate", "calibration needs two distinct relu counts");
  const double slope = sxy / sxx;  // ms per relu
  if (slope <= 0.0)
    throw Error("negative-slope", "fitted per-relu cost is not positive");
  LatencyModel m;
  m.per_relu_us = slope * 1000.0;
  m.base_ms = my - slope * mx;
  return m;
}

LatencyModel calibrate(const std::vector<RunRecord>& records) {
  std::vector<std::pair<long long, double>> pts;
  pts.reserve(records.size());
  for (const RunRecord& r : records) pts.emplace_back(r.relus, r.latency_ms);
  return calibrate(pts);
}

double predict(const LatencyModel& m, long long relus) {
  return m.base_ms + m.per_relu_us * static_cast<double>(relus) / 1000.0;
}

bool dominates(const RunRecord& a, const RunRecord& b) {
  if (a.latency_ms > b.latency_ms || a.accuracy_pct < b.accuracy_pct) return false;
  return a.latency_ms < b.latency_ms || a.accuracy_pct > b.accuracy_pct;
}

std::vector<RunRecord> pareto_frontier(const std::vector<RunRecord>& records) {
  for (const RunRecord& r : records)
    if (!r.has_accuracy)
      throw Error("pareto", "every record needs accuracy", r.label);
  std::vector<RunRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), [](const RunRecord& a, const RunRecord& b) {
    if (a.latency_ms != b.latency_ms) return a.latency_ms < b.latency_ms;
    if (a.accuracy_pct != b.accuracy_pct) return a.accuracy_pct > b.accuracy_pct;
    return a.label < b.label;
  });
  std::vector<RunRecord> frontier;
  double best_acc = -1.0;
  bool seen = false;
  size_t i = 0;
  while (i < sorted.size()) {
    // Latency-tied group: only its max-accuracy members can survive, and
    // only if they beat everything strictly faster.
    size_t j = i;
    while (j < sorted.size() && sorted[j].latency_ms == sorted[i].latency_ms) ++j;
    const double gmax = sorted[i].accuracy_pct;  // group is accuracy-descending
    if (!seen || gmax > best_acc) {
      for (size_t k = i; k < j && sorted[k].accuracy_pct == gmax; ++k)
        frontier.push_back(sorted[k]);
      best_acc = gmax;
      seen = true;
    }
    i = j;
  }
  return frontier;
}

std::vector<RunRecord> parse_runs_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("parse", "empty benchmark CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "label,relus,latency_ms,accuracy_pct")
    throw Error("parse", "bad benchmark CSV header", line);
  std::vector<RunRecord> out;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (cells.size() != 4)
      throw Error("parse", "expected 4 CSV columns", line_context(lineno));
    RunRecord r;
    r.label = cells[0];
    try {
      r.relus = std::stoll(cells[1]);
      r.latency_ms = std::stod(cells[2]);
      if (!cells[3].empty()) {
        r.accuracy_pct = std::stod(cells[3]);
        r.has_accuracy = true;
      }
    } catch (const std::exception&) {
      throw Error("parse", "bad numeric cell", line_context(lineno));
    }
    if (r.relus <= 0 || r.latency_ms <= 0.0)
      throw Error("parse", "relus and latency must be positive", line_context(lineno));
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RunRecord> load_runs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open benchmark CSV", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_runs_csv(buf.str());
}

std::string runs_csv(const std::vector<RunRecord>& records) {
  std::ostringstream out;
  out << "label,relus,latency_ms,accuracy_pct\n";
  for (const RunRecord& r : records) {
    out << r.label << ',' << r.relus << ',' << fmt_double(r.latency_ms) << ',';
    if (r.has_accuracy) out << fmt_double(r.accuracy_pct);
    out << '\n';
  }
  return out.str();
}

std::string model_json(const LatencyModel& m) {
  nlohmann::json j;
  j["per_relu_us"] = m.per_relu_us;
  j["base_ms"] = m.base_ms;
  return j.dump(2) + "\n";
}

LatencyModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("parse", "model is not valid JSON", e.what());
  }
  if (!j.is_object() || !j.contains("per_relu_us") || !j.contains("base_ms"))
    throw Error("parse", "model needs per_relu_us and base_ms");
  LatencyModel m;
  m.per_relu_us = j["per_relu_us"].get<double>();
  m.base_ms = j["base_ms"].get<double>();
  if (!(m.per_relu_us > 0.0) || !(m.base_ms >= 0.0))
    throw Error("model", "per_relu_us must be positive and base_ms non-negative");
  return m;
}

LatencyModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open model file", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace sphynx::latency
