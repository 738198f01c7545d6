#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include "doctest.h"
#include "sphynx/accounting.hpp"
#include "sphynx/cellgraph.hpp"
#include "sphynx/error.hpp"
#include "sphynx/skeleton.hpp"
#include "support.hpp"

using namespace sphynx::accounting;
namespace cg = sphynx::cellgraph;

namespace {

NetworkPlan cifar_plan(int c, int d, std::pair<int, int> placement) {
  NetworkPlan p;
  p.h0 = 32;
  p.w0 = 32;
  p.c = c;
  p.d = d;
  p.placement = placement;
  return p;
}

}  // namespace

TEST_CASE("relu-balanced counts follow h0*w0*C*D on 32x32 networks") {
  // (C, D, placement, expected) tuples for the published 32x32 operating
  // points; the count is placement-free by design.
  struct Row {
    int c, d;
    std::pair<int, int> placement;
    int64_t relus;
  };
  const std::vector<Row> rows{
      {5, 5, {0, 1}, 25600},    {5, 6, {0, 1}, 30720},  {5, 8, {1, 3}, 40960},
      {5, 10, {0, 5}, 51200},   {7, 10, {0, 5}, 71680}, {10, 10, {0, 5}, 102400},
      {15, 15, {2, 6}, 230400},
  };
  for (const Row& r : rows) {
    CHECK(count_sphynx(cifar_plan(r.c, r.d, r.placement)) == r.relus);
  }
  // the 30720 row is printed as "30.2K" in the source material; the formula
  // and every sibling row support 30720 (= 30.7K), so the count is asserted
  // exact and the discrepancy treated as a typo upstream.
  CHECK(count_sphynx(cifar_plan(5, 6, {0, 1})) == 30720);
}

TEST_CASE("relu-balanced counts on 64x64 networks") {
  struct Row {
    int c, d;
    int64_t relus;
  };
  for (const auto& r : std::vector<Row>{
           {5, 5, 102400}, {5, 10, 204800}, {7, 10, 286720}, {20, 10, 819200}}) {
    NetworkPlan p = cifar_plan(r.c, r.d, {0, 1});
    p.h0 = 64;
    p.w0 = 64;
    CHECK(count_sphynx(p) == r.relus);
  }
}

TEST_CASE("imagenet stem counts: formula-exact, published values within 1K") {
  // stem = 112^2*(C/2) + 56^2*C = 9408*C; cells add 28*28*C*D
  struct Row {
    int c;
    int64_t exact, published;
  };
  const std::vector<Row> rows{
      {10, 172480, 172000},  {20, 344960, 345000},  {30, 517440, 517000},
      {40, 689920, 690000},  {50, 862400, 862000},  {60, 1034880, 1034000},
  };
  for (const Row& r : rows) {
    NetworkPlan p;
    p.h0 = 28;
    p.w0 = 28;
    p.c = r.c;
    p.d = 10;
    p.placement = {1, 5};
    p.stem = StemKind::imagenet3;
    CHECK(stem_relus(p) == 9408LL * r.c);
    const int64_t got = count_sphynx(p);
    CHECK(got == r.exact);
    CHECK(std::abs(got - r.published) <= 1000);
  }
}

TEST_CASE("flop-balanced ledger reproduces the published budget rows") {
  auto flop_plan = [](int c, int d, std::pair<int, int> loc) {
    NetworkPlan p = cifar_plan(c, d, loc);
    p.balancing = Balancing::flop;
    return p;
  };
  auto truncated_tenth_k = [](int64_t v) { return (v / 100) / 10.0; };

  const int64_t r26 = count_flop_balanced(flop_plan(17, 5, {0, 1}));
  CHECK(r26 == 26112);
  CHECK(truncated_tenth_k(r26) == 26.1);

  const int64_t r30 = count_flop_balanced(flop_plan(17, 6, {0, 1}));
  CHECK(r30 == 30464);
  CHECK(truncated_tenth_k(r30) == 30.4);

  const int64_t r53 = count_flop_balanced(flop_plan(14, 10, {0, 5}));
  CHECK(r53 == 53760);
  CHECK(truncated_tenth_k(r53) == 53.7);

  // the published "41.4K" companion row computes to 39936 under the same
  // formula; it is excluded from the reproduction set (see README)
  CHECK(count_flop_balanced(flop_plan(12, 8, {1, 3})) == 39936);
}

TEST_CASE("relu-balanced totals are placement-invariant, exhaustively") {
  for (int d = 2; d <= 10; ++d) {
    const auto placements = sphynx::skeleton::enumerate_placements(d);
    CHECK(placements.size() == static_cast<size_t>(d) * (d - 1) / 2);
    const int64_t expect = 32LL * 32 * 4 * d;
    for (const auto& loc : placements) {
      CHECK(count_sphynx(cifar_plan(4, d, loc)) == expect);
    }
  }
}

TEST_CASE("flop-balanced totals never increase when reduces move earlier") {
  for (int d = 2; d <= 8; ++d) {
    const auto placements = sphynx::skeleton::enumerate_placements(d);
    for (const auto& p : placements) {
      NetworkPlan plan_p = cifar_plan(4, d, p);
      plan_p.balancing = Balancing::flop;
      const int64_t total_p = count_flop_balanced(plan_p);
      for (const auto& q : placements) {
        if (q.first > p.first || q.second > p.second) continue;
        NetworkPlan plan_q = cifar_plan(4, d, q);
        plan_q.balancing = Balancing::flop;
        CHECK(count_flop_balanced(plan_q) <= total_p);
      }
    }
  }
}

TEST_CASE("plan validation rejects malformed plans") {
  CHECK_THROWS_AS(validate_plan(cifar_plan(0, 5, {0, 1})), sphynx::Error);
  CHECK_THROWS_AS(validate_plan(cifar_plan(5, 0, {0, 1})), sphynx::Error);
  CHECK_THROWS_AS(validate_plan(cifar_plan(5, 5, {1, 1})), sphynx::Error);
  CHECK_THROWS_AS(validate_plan(cifar_plan(5, 5, {3, 1})), sphynx::Error);
  try {
    validate_plan(cifar_plan(5, 5, {0, 9}));
    FAIL("expected placement error");
  } catch (const sphynx::Error& e) {
    CHECK(std::string(e.what()).find("placement index out of range") != std::string::npos);
  }
  // imagenet stem needs 28x28 inputs and an even channel count
  NetworkPlan p;
  p.h0 = 28;
  p.w0 = 28;
  p.c = 7;
  p.d = 5;
  p.stem = StemKind::imagenet3;
  try {
    validate_plan(p);
    FAIL("expected stem error");
  } catch (const sphynx::Error& e) {
    CHECK(e.code() == "stem-channel-split");
  }
  p.c = 8;
  CHECK_NOTHROW(validate_plan(p));
  p.h0 = 32;
  CHECK_THROWS_AS(validate_plan(p), sphynx::Error);
}

TEST_CASE("odd spatial dims cannot halve") {
  NetworkPlan p = cifar_plan(4, 3, {0, 1});
  p.h0 = 7;
  p.w0 = 7;
  try {
    cell_dims(p);
    FAIL("expected halving error");
  } catch (const sphynx::Error& e) {
    CHECK(e.code() == "spatial-halve");
  }
}

TEST_CASE("ledger totals are consistent with the closed-form counts") {
  const cg::Genotype g = cg::load_genotype(testsup::fixture_path("genotype_n7.json"));
  for (const auto& [c, d] : std::vector<std::pair<int, int>>{{5, 5}, {5, 10}, {8, 6}}) {
    const NetworkPlan plan = cifar_plan(c, d, {0, 1});
    const CostLedger bare = ledger(plan);
    const CostLedger with_g = ledger(plan, &g);
    CHECK(bare.total_relus == count_sphynx(plan));
    CHECK(with_g.total_relus == count_sphynx(plan));
    CHECK(with_g.cells.size() == static_cast<size_t>(d));
    CHECK(with_g.total_flops > 0);
    CHECK(with_g.total_params > 0);
    // edge convolutions only add cost on top of the backbone postprocessing
    CHECK(with_g.total_flops > bare.total_flops);
  }
}

TEST_CASE("conv cost formula") {
  // 3x3 conv, 4 -> 8 channels on a 10x12 plane
  const FlopsParams fp = conv_cost(3, 4, 8, 10, 12);
  CHECK(fp.flops == 2LL * 9 * 4 * 8 * 10 * 12);
  CHECK(fp.params == 9LL * 4 * 8 + 2 * 8);
}

TEST_CASE("legacy counting: shared relus and separate maxpool units") {
  const cg::Genotype g =
      cg::load_genotype(testsup::fixture_path("genotype_n7_legacy.json"));
  NetworkPlan plan;
  plan.h0 = 8;
  plan.w0 = 8;
  plan.c = 2;
  plan.d = 3;
  plan.placement = {0, 1};
  const LegacyCount lc = count_legacy(plan, g);
  // every cell sees an 8*8*2 = 128-activation plane under relu balancing;
  // both cells have 5 conv edges and 4 intermediates:
  //   raw per cell = 5*128 + 2*4*128 = 1664
  CHECK(lc.relus_raw == 3 * 1664);
  // normal cell: node 0 feeds two convs (saves 128); reduce: node 1 ditto
  CHECK(lc.saved_relus == 128 + 2 * 128);
  CHECK(lc.relus_shared == lc.relus_raw - lc.saved_relus);
  // two maxpool edges per cell, tallied apart from the ReLU ledger
  CHECK(lc.maxpool_units == 3 * 2 * 128);

  const cg::Genotype native = cg::load_genotype(testsup::fixture_path("genotype_n7.json"));
  CHECK_THROWS_AS(count_legacy(plan, native), sphynx::Error);
}

TEST_CASE("budget planner finds the published 50K grid") {
  const auto rows = plan_budget(50000, 32, 32, 1, 64, 1, 20, 0.05);
  REQUIRE(!rows.empty());
  auto has = [&](int c, int d, int64_t relus) {
    for (const auto& r : rows)
      if (r.c == c && r.d == d) {
        CHECK(r.relus == relus);
        CHECK(r.deviation == relus - 50000);
        return true;
      }
    return false;
  };
  CHECK(has(5, 10, 51200));
  CHECK(has(6, 8, 49152));
  CHECK(has(7, 7, 50176));
  CHECK(has(8, 6, 49152));
  CHECK(has(10, 5, 51200));
  // tolerance respected and sorted by |deviation|
  for (const auto& r : rows) CHECK(std::abs(r.deviation) <= 2500);
  for (size_t i = 1; i < rows.size(); ++i)
    CHECK(std::abs(rows[i - 1].deviation) <= std::abs(rows[i].deviation));
}

TEST_CASE("ledger and budget renderers emit well-formed tables") {
  const NetworkPlan plan = cifar_plan(5, 5, {0, 1});
  const std::string csv = ledger_csv(ledger(plan));
  CHECK(csv.rfind("cell_index,H,W,C,relus,flops,params\n", 0) == 0);
  // header + stem + D cells
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 1 + 5);
  const std::string bcsv = budget_csv(plan_budget(50000, 32, 32, 1, 64, 1, 20, 0.05));
  CHECK(bcsv.rfind("C,D,relus,deviation\n", 0) == 0);
}
