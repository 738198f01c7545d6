#include "sphynx/accounting.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "sphynx/error.hpp"

namespace sphynx::accounting {

const char* stem_name(StemKind s) { return s == StemKind::direct ? "direct" : "imagenet3"; }
const char* balancing_name(Balancing b) { return b == Balancing::relu ? "relu" : "flop"; }

void validate_plan(const NetworkPlan& plan) {
  if (plan.c < 1) throw Error("plan", "channel count must be positive");
  if (plan.d < 1) throw Error("plan", "cell count must be positive");
  if (plan.h0 < 1 || plan.w0 < 1) throw Error("plan", "input dims must be positive");
  const auto [r1, r2] = plan.placement;
  if (r1 < 0 || r2 >= plan.d || r1 >= r2) {
    std::ostringstream ctx;
    ctx << "(" << r1 << "," << r2 << ") with D=" << plan.d;
    throw Error("placement-range", "placement index out of range", ctx.str());
  }
  if (plan.stem == StemKind::imagenet3) {
    if (plan.h0 != 28 || plan.w0 != 28)
      throw Error("plan", "imagenet3 stem hands cells a 28x28 map; H0 and W0 must be 28");
    if (plan.c % 2 != 0) throw Error("stem-channel-split", "stem channel split");
  }
}

std::vector<CellCost> cell_dims(const NetworkPlan& plan) {
  validate_plan(plan);
  std::vector<CellCost> cells;
  int h = plan.h0, w = plan.w0, c = plan.c;
  const int widen = plan.balancing == Balancing::relu ? 4 : 2;
  for (int i = 0; i < plan.d; ++i) {
    CellCost cc;
    cc.cell_index = i;
    cc.reduce = (i == plan.placement.first || i == plan.placement.second);
    if (cc.reduce) {
      if (h % 2 != 0 || w % 2 != 0) {
        std::ostringstream ctx;
        ctx << "cell " << i << " input " << h << "x" << w;
        throw Error("spatial-halve", "cannot halve an odd spatial dim", ctx.str());
      }
      h /= 2;
      w /= 2;
      c *= widen;
    }
    cc.h = h;
    cc.w = w;
    cc.c = c;
    cells.push_back(cc);
  }
  return cells;
}

int64_t stem_relus(const NetworkPlan& plan) {
  validate_plan(plan);
  if (plan.stem == StemKind::direct) return 0;
  const int64_t c = plan.c;
  return 112LL * 112LL * (c / 2) + 56LL * 56LL * c;
}

int64_t count_sphynx(const NetworkPlan& plan) {
  validate_plan(plan);
  return stem_relus(plan) +
         static_cast<int64_t>(plan.h0) * plan.w0 * plan.c * plan.d;
}

int64_t count_flop_balanced(const NetworkPlan& plan) {
  NetworkPlan p = plan;
  p.balancing = Balancing::flop;
  int64_t total = stem_relus(p);
  for (const CellCost& cc : cell_dims(p))
    total += static_cast<int64_t>(cc.h) * cc.w * cc.c;
  return total;
}

LegacyCount count_legacy(const NetworkPlan& plan, const cellgraph::Genotype& g) {
  validate_plan(plan);
  if (g.space != cellgraph::Space::legacy)
    throw Error("space-mismatch", "space mismatch",
                "count_legacy needs a legacy-space genotype");
  auto rep = cellgraph::validate(g);
  if (!rep.ok)
    throw Error("invalid-genotype", "count_legacy needs a valid genotype",
                rep.violations.front().message);

  LegacyCount out;
  for (const CellCost& cc : cell_dims(plan)) {
    const cellgraph::CellSpec& cell = cc.reduce ? g.reduce : g.normal;
    const int64_t plane = static_cast<int64_t>(cc.h) * cc.w * cc.c;
    int64_t conv_edges = 0, maxpool_edges = 0;
    for (const auto& e : cell.edges) {
      if (cellgraph::is_conv(e.op)) ++conv_edges;
      if (e.op == cellgraph::OpKind::maxpool3x3) ++maxpool_edges;
    }
    auto ann = cellgraph::relu_sharing_pass(cell, {cc.h, cc.w, cc.c});
    // Two preprocessing modules, each activating on the previous cells'
    // (n-3)-way concat.
    const int64_t preprocess = 2LL * cell.intermediates() * plane;
    out.relus_raw += conv_edges * plane + preprocess;
    out.saved_relus += ann.saved_relus;
    out.maxpool_units += maxpool_edges * plane;
  }
  out.relus_shared = out.relus_raw - out.saved_relus;
  return out;
}

FlopsParams conv_cost(int kernel, int c_in, int c_out, int h, int w) {
  FlopsParams fp;
  const int64_t weights = static_cast<int64_t>(kernel) * kernel * c_in * c_out;
  fp.flops = 2 * weights * h * w;
  fp.params = weights + 2LL * c_out;
  return fp;
}

namespace {

void add_stem_costs(const NetworkPlan& plan, CostLedger& l) {
  l.stem_relus = stem_relus(plan);
  if (plan.stem == StemKind::direct) {
    FlopsParams fp = conv_cost(3, 3, plan.c, plan.h0, plan.w0);
    l.stem_flops = fp.flops;
    l.stem_params = fp.params;
    return;
  }
  const int c = plan.c;
  FlopsParams s1 = conv_cost(3, 3, c / 2, 112, 112);
  FlopsParams s2 = conv_cost(3, c / 2, c, 56, 56);
  FlopsParams s3 = conv_cost(3, c, c, 28, 28);
  l.stem_flops = s1.flops + s2.flops + s3.flops;
  l.stem_params = s1.params + s2.params + s3.params;
}

}  // namespace

CostLedger ledger(const NetworkPlan& plan, const cellgraph::Genotype* g) {
  validate_plan(plan);
  if (g != nullptr) {
    auto rep = cellgraph::validate(*g);
    if (!rep.ok)
      throw Error("invalid-genotype", "ledger needs a valid genotype",
                  rep.violations.front().message);
  }
  CostLedger l;
  l.plan = plan;
  add_stem_costs(plan, l);
  l.cells = cell_dims(plan);
  const int intermediates = g != nullptr ? g->normal.intermediates() : 4;

  for (CellCost& cc : l.cells) {
    cc.relus = static_cast<int64_t>(cc.h) * cc.w * cc.c;
    // Post-processing 1x1 conv from the intermediate concat back to C.
    FlopsParams post = conv_cost(1, intermediates * cc.c, cc.c, cc.h, cc.w);
    cc.flops = post.flops;
    cc.params = post.params;
    if (g != nullptr) {
      const cellgraph::CellSpec& cell = cc.reduce ? g->reduce : g->normal;
      for (const auto& e : cell.edges) {
        if (!cellgraph::is_conv(e.op)) continue;
        FlopsParams fp = conv_cost(cellgraph::op_kernel(e.op), cc.c, cc.c, cc.h, cc.w);
        cc.flops += fp.flops;
        cc.params += fp.params;
      }
      if (g->space == cellgraph::Space::legacy) {
        int64_t maxpool_edges = 0;
        for (const auto& e : cell.edges)
          if (e.op == cellgraph::OpKind::maxpool3x3) ++maxpool_edges;
        l.maxpool_units += maxpool_edges * static_cast<int64_t>(cc.h) * cc.w * cc.c;
      }
    }
    l.total_relus += cc.relus;
    l.total_flops += cc.flops;
    l.total_params += cc.params;
  }
  l.total_relus += l.stem_relus;
  l.total_flops += l.stem_flops;
  l.total_params += l.stem_params;
  return l;
}

std::vector<BudgetRow> plan_budget(int64_t budget, int h0, int w0, int c_min, int c_max,
                                   int d_min, int d_max, double tol) {
  if (budget <= 0) throw Error("plan", "budget must be positive");
  if (c_min < 1 || c_min > c_max || d_min < 1 || d_min > d_max)
    throw Error("plan", "empty (C, D) search range");
  std::vector<BudgetRow> rows;
  for (int c = c_min; c <= c_max; ++c) {
    for (int d = d_min; d <= d_max; ++d) {
      const int64_t relus = static_cast<int64_t>(h0) * w0 * c * d;
      const int64_t dev = relus - budget;
      if (std::llabs(dev) <= static_cast<int64_t>(tol * static_cast<double>(budget)))
        rows.push_back({c, d, relus, dev});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const BudgetRow& a, const BudgetRow& b) {
    const int64_t da = std::llabs(a.deviation), db = std::llabs(b.deviation);
    if (da != db) return da < db;
    if (a.c != b.c) return a.c < b.c;
    return a.d < b.d;
  });
  return rows;
}

std::string ledger_csv(const CostLedger& l) {
  std::ostringstream out;
  out << "cell_index,H,W,C,relus,flops,params\n";
  out << -1 << "," << l.plan.h0 << "," << l.plan.w0 << "," << l.plan.c << ","
      << l.stem_relus << "," << l.stem_flops << "," << l.stem_params << "\n";
  for (const CellCost& cc : l.cells)
    out << cc.cell_index << "," << cc.h << "," << cc.w << "," << cc.c << ","
        << cc.relus << "," << cc.flops << "," << cc.params << "\n";
  return out.str();
}

std::string ledger_json(const CostLedger& l) {
  nlohmann::json j;
  j["plan"] = {{"h0", l.plan.h0},
               {"w0", l.plan.w0},
               {"c", l.plan.c},
               {"d", l.plan.d},
               {"placement", {l.plan.placement.first, l.plan.placement.second}},
               {"stem", stem_name(l.plan.stem)},
               {"balancing", balancing_name(l.plan.balancing)}};
  j["stem"] = {{"relus", l.stem_relus}, {"flops", l.stem_flops}, {"params", l.stem_params}};
  j["cells"] = nlohmann::json::array();
  for (const CellCost& cc : l.cells)
    j["cells"].push_back({{"cell_index", cc.cell_index},
                          {"reduce", cc.reduce},
                          {"h", cc.h},
                          {"w", cc.w},
                          {"c", cc.c},
                          {"relus", cc.relus},
                          {"flops", cc.flops},
                          {"params", cc.params}});
  j["totals"] = {{"relus", l.total_relus},
                 {"flops", l.total_flops},
                 {"params", l.total_params},
                 {"maxpool_units", l.maxpool_units}};
  return j.dump(2) + "\n";
}

std::string budget_csv(const std::vector<BudgetRow>& rows) {
  std::ostringstream out;
  out << "C,D,relus,deviation\n";
  for (const BudgetRow& r : rows)
    out << r.c << "," << r.d << "," << r.relus << "," << r.deviation << "\n";
  return out.str();
}

std::string budget_json(const std::vector<BudgetRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const BudgetRow& r : rows)
    j.push_back({{"c", r.c}, {"d", r.d}, {"relus", r.relus}, {"deviation", r.deviation}});
  return j.dump(2) + "\n";
}

}  // namespace sphynx::accounting
