#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sphynx/accounting.hpp"
#include "sphynx/array.hpp"
#include "sphynx/gumbel.hpp"
#include "sphynx/optim.hpp"
#include "sphynx/rng.hpp"

namespace sphynx::placement {

struct Batch {
  Array x;                  // [B, d]
  std::vector<int> labels;  // B entries
};

// A bank of K independently trainable branches. Implementations must keep
// branch state disjoint so concurrent calls on different branches are safe.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual int branch_count() const = 0;

  // Draw a minibatch from rng, take one optimizer step on this branch's own
  // weights, return the minibatch loss.
  virtual double train_step(int branch, Rng& rng) = 0;

  struct ValProbe {
    double loss = 0.0;
    // d loss / d scale at scale=1 for a scalar multiplier on the branch
    // logits: the upstream value of the straight-through estimator.
    double dloss_dscale = 0.0;
  };
  // Validation minibatch pass, no weight update.
  virtual ValProbe val_probe(int branch, Rng& rng) = 0;

  // Mean validation loss over `batches` fresh minibatches, no update.
  virtual double evaluate(int branch, Rng& rng, int batches) = 0;

  // Checksum over this branch's parameter snapshot.
  virtual uint64_t checksum(int branch) const = 0;
  std::vector<uint64_t> checksums() const;
};

struct SearchConfig {
  int epochs = 12;
  int steps_per_epoch = 40;
  double tau_start = 1000.0;
  double tau_end = 0.1;
  optim::AdamConfig beta_opt;  // lr 3e-4, decay 1e-3 defaults
  uint64_t seed = 0;
};

struct TrajectoryRow {
  int epoch = 0;
  double tau = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::vector<double> beta;
};

struct SearchResult {
  int picked = 0;
  std::vector<double> beta;
  std::vector<TrajectoryRow> trajectory;
  int64_t weight_steps = 0;
  int64_t beta_steps = 0;
};

// Alternating single-branch search: per step, one weight update on a branch
// drawn from softmax(beta) and one straight-through beta update on a fresh
// draw, with the temperature annealed linearly across all steps.
SearchResult run_search(Evaluator& ev, const SearchConfig& cfg);

std::string trajectory_csv(const SearchResult& r);
std::string search_json(const SearchResult& r);

struct GridConfig {
  int epochs = 12;
  int steps_per_epoch = 40;
  int eval_batches = 16;
  uint64_t seed = 0;
  int workers = 1;
};

struct GridResult {
  std::vector<double> scores;
  int best = 0;
  int64_t weight_steps = 0;
};

// Train every branch independently on the same per-epoch budget, then score
// each on held-out batches. Branch work is deterministic per branch, so the
// worker count never changes the result.
GridResult grid_search(Evaluator& ev, const GridConfig& cfg);

std::string grid_csv(const GridResult& r);
std::string grid_json(const GridResult& r);

// Built-in evaluator A: K small MLPs on one Gaussian-blob classification
// task. Branch quality is planted through per-branch symmetric label-flip
// rates, so the ground-truth ranking is the noise ranking.
struct SynthConfig {
  int branches = 6;
  int input_dim = 8;
  int hidden = 24;
  int classes = 4;
  int batch = 32;
  double sigma = 0.35;
  std::vector<double> noise;  // resized to `branches`, default 0
  optim::SgdConfig weights_opt{0.05, 0.9, 1e-4, 5.0, true};
  uint64_t seed = 0;
};
std::unique_ptr<Evaluator> make_synthetic(const SynthConfig& cfg);

// Built-in evaluator B: one branch per reduce placement of the plan. Branch
// hidden widths follow the per-cell activation profile under FLOP balancing,
// so placements translate into genuinely different capacities.
struct SurrogateConfig {
  accounting::NetworkPlan plan{8, 8, 2, 4, {0, 1}, accounting::StemKind::direct,
                               accounting::Balancing::flop};
  bool exclude_last = false;
  int input_dim = 12;
  int classes = 4;
  int batch = 32;
  double sigma = 0.5;
  int width_divisor = 8;
  optim::SgdConfig weights_opt{0.05, 0.9, 1e-4, 5.0, true};
  uint64_t seed = 0;
};
std::unique_ptr<Evaluator> make_surrogate(const SurrogateConfig& cfg);
std::vector<std::pair<int, int>> surrogate_placements(const SurrogateConfig& cfg);
std::vector<int> surrogate_widths(const SurrogateConfig& cfg, int branch);

}  // namespace sphynx::placement
