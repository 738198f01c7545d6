#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sphynx::latency {

// One benchmarked network. accuracy_pct is optional (calibration does not
// need it, the Pareto frontier does).
struct RunRecord {
  std::string label;
  long long relus = 0;
  double latency_ms = 0.0;
  double accuracy_pct = 0.0;
  bool has_accuracy = false;

  bool operator==(const RunRecord&) const = default;
};

// Affine online-latency model: garbled-circuit cost per ReLU plus an
// intercept that absorbs linear-layer work and session setup.
struct LatencyModel {
  double per_relu_us = 0.0;
  double base_ms = 0.0;
};

// Least-squares fit of latency_ms against relus. Needs two distinct relu
// counts; a non-positive fitted slope is an error.
LatencyModel calibrate(const std::vector<std::pair<long long, double>>& points);
LatencyModel calibrate(const std::vector<RunRecord>& records);

// base_ms + per_relu_us * relus / 1000. relus = 0 extrapolates to base_ms.
double predict(const LatencyModel& m, long long relus);

// a dominates b: no worse on both axes, strictly better on one.
bool dominates(const RunRecord& a, const RunRecord& b);

// Maximal non-dominated subset, sorted by latency. Every record must carry
// accuracy. Single linear sweep over the latency-sorted records.
std::vector<RunRecord> pareto_frontier(const std::vector<RunRecord>& records);

// CSV with header label,relus,latency_ms,accuracy_pct (accuracy may be
// blank). Doubles render with the shortest round-tripping decimal form.
std::vector<RunRecord> parse_runs_csv(const std::string& text);
std::vector<RunRecord> load_runs_csv(const std::string& path);
std::string runs_csv(const std::vector<RunRecord>& records);

// Model JSON: {"per_relu_us": ..., "base_ms": ...}; loading checks
// per_relu_us > 0 and base_ms >= 0.
std::string model_json(const LatencyModel& m);
LatencyModel model_from_json(const std::string& text);
LatencyModel load_model(const std::string& path);

}  // namespace sphynx::latency
