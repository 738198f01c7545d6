#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sphynx/cellgraph.hpp"

namespace sphynx::accounting {

enum class StemKind { direct, imagenet3 };
enum class Balancing { relu, flop };

const char* stem_name(StemKind s);
const char* balancing_name(Balancing b);

// One backbone: D cells at base width C on an H0 x W0 input, with reduce
// cells at the two placement indices. `relu` balancing quadruples channels at
// each reduce (activation volume stays constant), `flop` balancing doubles
// them (per-cell compute stays constant).
struct NetworkPlan {
  int h0 = 32;
  int w0 = 32;
  int c = 5;
  int d = 5;
  std::pair<int, int> placement{0, 1};
  StemKind stem = StemKind::direct;
  Balancing balancing = Balancing::relu;
};

void validate_plan(const NetworkPlan& plan);

struct CellCost {
  int cell_index = 0;
  bool reduce = false;
  int h = 0;  // output dims of the cell
  int w = 0;
  int c = 0;
  int64_t relus = 0;
  int64_t flops = 0;
  int64_t params = 0;
};

struct CostLedger {
  NetworkPlan plan;
  int64_t stem_relus = 0;
  int64_t stem_flops = 0;
  int64_t stem_params = 0;
  std::vector<CellCost> cells;
  int64_t total_relus = 0;  // stem + cells
  int64_t total_flops = 0;
  int64_t total_params = 0;
  int64_t maxpool_units = 0;  // legacy genotypes only, tallied separately
};

// Per-cell output dims chained through the placement under the plan's
// balancing policy.
std::vector<CellCost> cell_dims(const NetworkPlan& plan);

// ReLUs introduced by the stem. The direct stem is Conv-BN only (0); the
// three-stage ImageNet stem activates in front of its second and third convs.
int64_t stem_relus(const NetworkPlan& plan);

// Total ReLU count of a sphynx-space network: each cell's post-processing
// 1x1 Conv-BN-ReLU fires on the cell output, and balancing keeps that volume
// at H0*W0*C per cell, so the sum is stem + H0*W0*C*D for any placement.
int64_t count_sphynx(const NetworkPlan& plan);

// Same backbone under FLOP balancing: per-cell activation volume halves at
// each reduce, so the total depends on where the reduces sit.
int64_t count_flop_balanced(const NetworkPlan& plan);

struct LegacyCount {
  int64_t relus_raw = 0;     // one ReLU per conv edge + cell preprocessing
  int64_t saved_relus = 0;   // removed by sharing nodes with conv fanout >= 2
  int64_t relus_shared = 0;  // relus_raw - saved_relus
  int64_t maxpool_units = 0;
};

// ReLU count of a legacy-space genotype on the plan's backbone. Convolution
// edges activate on their source node (h*w*c of the cell), the two
// preprocessing modules activate on the 4-way concat of the previous cells,
// and maxpool comparator units are tallied separately from ReLUs.
LegacyCount count_legacy(const NetworkPlan& plan, const cellgraph::Genotype& g);

struct FlopsParams {
  int64_t flops = 0;  // 2 * multiply-accumulates
  int64_t params = 0; // conv weights + 2 per-channel batch-norm terms
};

// Conv cost helpers: a k x k conv with c_in -> c_out on an h x w output grid.
FlopsParams conv_cost(int kernel, int c_in, int c_out, int h, int w);

// Whole-plan FLOP/parameter ledger. Edge convs come from the genotype when
// given; the per-cell post-processing 1x1 conv and the stem are always
// counted.
CostLedger ledger(const NetworkPlan& plan, const cellgraph::Genotype* g = nullptr);

struct BudgetRow {
  int c = 0;
  int d = 0;
  int64_t relus = 0;
  int64_t deviation = 0;  // relus - budget
};

// Enumerate (C, D) grids whose ReLU-balanced total lands within tol*budget of
// the budget, sorted by |deviation| then C.
std::vector<BudgetRow> plan_budget(int64_t budget, int h0, int w0, int c_min, int c_max,
                                   int d_min, int d_max, double tol);

std::string ledger_csv(const CostLedger& l);
std::string ledger_json(const CostLedger& l);
std::string budget_csv(const std::vector<BudgetRow>& rows);
std::string budget_json(const std::vector<BudgetRow>& rows);

}  // namespace sphynx::accounting
