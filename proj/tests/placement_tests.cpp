#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "sphynx/placement.hpp"
#include "sphynx/rng.hpp"

namespace pl = sphynx::placement;
using sphynx::Rng;

namespace {

pl::SynthConfig small_synth(uint64_t seed) {
  pl::SynthConfig cfg;
  cfg.branches = 4;
  cfg.input_dim = 6;
  cfg.hidden = 10;
  cfg.classes = 3;
  cfg.batch = 16;
  cfg.noise = {0.40, 0.05, 0.30, 0.20};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("synthetic evaluator: branch state is disjoint and deterministic") {
  auto ev = pl::make_synthetic(small_synth(11));
  REQUIRE(ev->branch_count() == 4);
  const auto before = ev->checksums();
  CHECK(before.size() == 4);

  // training branch 2 must change only branch 2's checksum
  Rng rng(5);
  const double loss = ev->train_step(2, rng);
  CHECK(std::isfinite(loss));
  const auto after = ev->checksums();
  for (int b = 0; b < 4; ++b) {
    if (b == 2)
      CHECK(after[b] != before[b]);
    else
      CHECK(after[b] == before[b]);
  }

  // evaluation never mutates weights
  Rng rng2(6);
  ev->evaluate(1, rng2, 4);
  CHECK(ev->checksums() == after);

  // a fresh evaluator with the same seed replays the same step exactly
  auto ev2 = pl::make_synthetic(small_synth(11));
  Rng rng3(5);
  const double loss2 = ev2->train_step(2, rng3);
  CHECK(loss2 == loss);
  CHECK(ev2->checksums() == after);
}

TEST_CASE("val probe reports a finite straight-through derivative") {
  auto ev = pl::make_synthetic(small_synth(3));
  Rng rng(9);
  const auto probe = ev->val_probe(0, rng);
  CHECK(std::isfinite(probe.loss));
  CHECK(std::isfinite(probe.dloss_dscale));
  CHECK(probe.loss > 0.0);
}

TEST_CASE("search is reproducible end to end") {
  pl::SearchConfig cfg;
  cfg.epochs = 3;
  cfg.steps_per_epoch = 8;
  cfg.seed = 71;

  auto ev1 = pl::make_synthetic(small_synth(71));
  const pl::SearchResult r1 = pl::run_search(*ev1, cfg);
  auto ev2 = pl::make_synthetic(small_synth(71));
  const pl::SearchResult r2 = pl::run_search(*ev2, cfg);

  CHECK(r1.picked == r2.picked);
  CHECK(r1.beta == r2.beta);
  CHECK(pl::search_json(r1) == pl::search_json(r2));
  CHECK(pl::trajectory_csv(r1) == pl::trajectory_csv(r2));

  REQUIRE(r1.trajectory.size() == 3);
  CHECK(r1.beta.size() == 4);
  CHECK(r1.picked >= 0);
  CHECK(r1.picked < 4);
  CHECK(r1.weight_steps == 3 * 8);
  CHECK(r1.beta_steps == 3 * 8);
  // temperature anneals downward across the trajectory
  CHECK(r1.trajectory.front().tau > r1.trajectory.back().tau);
  // differently seeded searches explore differently
  pl::SearchConfig other = cfg;
  other.seed = 72;
  auto ev3 = pl::make_synthetic(small_synth(71));
  const pl::SearchResult r3 = pl::run_search(*ev3, other);
  CHECK(pl::search_json(r3) != pl::search_json(r1));
}

TEST_CASE("grid search scores are invariant to the worker count") {
  pl::GridConfig cfg;
  cfg.epochs = 2;
  cfg.steps_per_epoch = 6;
  cfg.eval_batches = 4;
  cfg.seed = 13;
  cfg.workers = 1;

  auto ev1 = pl::make_synthetic(small_synth(13));
  const pl::GridResult r1 = pl::grid_search(*ev1, cfg);
  cfg.workers = 2;
  auto ev2 = pl::make_synthetic(small_synth(13));
  const pl::GridResult r2 = pl::grid_search(*ev2, cfg);
  cfg.workers = 4;
  auto ev3 = pl::make_synthetic(small_synth(13));
  const pl::GridResult r3 = pl::grid_search(*ev3, cfg);

  REQUIRE(r1.scores.size() == 4);
  CHECK(r1.scores == r2.scores);
  CHECK(r1.scores == r3.scores);
  CHECK(r1.best == r2.best);
  CHECK(r1.best == r3.best);
  CHECK(pl::grid_json(r1) == pl::grid_json(r3));
  CHECK(r1.weight_steps == 4 * 2 * 6);
  CHECK(r1.best ==
        std::min_element(r1.scores.begin(), r1.scores.end()) - r1.scores.begin());
}

TEST_CASE("grid search separates a strongly planted branch ranking") {
  // heavy label noise everywhere except branch 1; a short grid run must
  // already rank branch 1 first
  pl::SynthConfig scfg = small_synth(29);
  scfg.noise = {0.45, 0.0, 0.45, 0.45};
  auto ev = pl::make_synthetic(scfg);
  pl::GridConfig cfg;
  cfg.epochs = 6;
  cfg.steps_per_epoch = 20;
  cfg.eval_batches = 8;
  cfg.seed = 29;
  const pl::GridResult r = pl::grid_search(*ev, cfg);
  CHECK(r.best == 1);
}

TEST_CASE("surrogate evaluator mirrors the placement grid") {
  pl::SurrogateConfig cfg;
  const auto placements = pl::surrogate_placements(cfg);
  // D=4 placements: C(4,2) = 6
  REQUIRE(placements.size() == 6);
  auto ev = pl::make_surrogate(cfg);
  CHECK(ev->branch_count() == 6);
  for (int b = 0; b < 6; ++b) {
    // input layer, one hidden layer per cell, classifier
    const auto widths = pl::surrogate_widths(cfg, b);
    REQUIRE(widths.size() == 4 + 2);
    CHECK(widths.front() == cfg.input_dim);
    CHECK(widths.back() == cfg.classes);
    for (int w : widths) CHECK(w >= 1);
  }
  // earlier reduces shrink later activation planes, so branch 0 ((0,1)) is
  // narrower mid-network than the latest placement (2,3)
  const auto w_first = pl::surrogate_widths(cfg, 0);
  const auto w_last = pl::surrogate_widths(cfg, 5);
  CHECK(w_first[2] < w_last[2]);

  cfg.exclude_last = true;
  CHECK(pl::surrogate_placements(cfg).size() == 3);

  Rng rng(2);
  auto probe = ev->val_probe(3, rng);
  CHECK(std::isfinite(probe.loss));
}

TEST_CASE("trajectory and grid renderers") {
  pl::SearchConfig cfg;
  cfg.epochs = 2;
  cfg.steps_per_epoch = 4;
  cfg.seed = 1;
  auto ev = pl::make_synthetic(small_synth(1));
  const pl::SearchResult r = pl::run_search(*ev, cfg);
  const std::string csv = pl::trajectory_csv(r);
  CHECK(csv.rfind("epoch,tau,train_loss,val_loss", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2);

  pl::GridConfig gcfg;
  gcfg.epochs = 1;
  gcfg.steps_per_epoch = 2;
  gcfg.eval_batches = 2;
  auto ev2 = pl::make_synthetic(small_synth(1));
  const pl::GridResult g = pl::grid_search(*ev2, gcfg);
  const std::string gcsv = pl::grid_csv(g);
  CHECK(gcsv.rfind("branch,score\n", 0) == 0);
  CHECK(std::count(gcsv.begin(), gcsv.end(), '\n') == 1 + 4);
}
