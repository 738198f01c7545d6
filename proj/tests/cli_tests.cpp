// End-to-end tests for the sphynx binary: every subcommand through a real
// process, stdout payloads cross-checked against the library, error records
// and exit codes on the failure paths.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "sphynx/accounting.hpp"
#include "sphynx/cellgraph.hpp"
#include "sphynx/latency.hpp"
#include "sphynx/pisim.hpp"
#include "sphynx/placement.hpp"
#include "sphynx/relaxation.hpp"
#include "sphynx/rng.hpp"
#include "sphynx/skeleton.hpp"
#include "support.hpp"

using nlohmann::json;
namespace ac = sphynx::accounting;
namespace cg = sphynx::cellgraph;
namespace lat = sphynx::latency;
namespace ps = sphynx::pisim;
namespace rx = sphynx::relaxation;
namespace ts = testsup;

namespace {

std::string q(const std::string& path) { return "\"" + path + "\""; }

std::string err_code(const ts::CliResult& res) {
  return json::parse(res.err).at("code").get<std::string>();
}

}  // namespace

TEST_CASE("cli count prints the plan ledger") {
  const ts::CliResult res = ts::run_cli("count --channels 5 --depth 10 --placement 0 5");
  REQUIRE(res.exit_code == 0);
  CHECK(res.err.empty());
  const json j = json::parse(res.out);
  CHECK(j.at("relus").get<int64_t>() == 51200);
  CHECK(j.at("stem_relus").get<int64_t>() == 0);
  CHECK(j.at("channels").get<int>() == 5);
  CHECK(j.at("depth").get<int>() == 10);
  CHECK(j.at("placement") == json::array({0, 5}));
  CHECK(j.at("stem").get<std::string>() == "direct");
  CHECK(j.at("balancing").get<std::string>() == "relu");
  CHECK(!j.contains("maxpool_units"));

  const ts::CliResult dflt = ts::run_cli("count");
  REQUIRE(dflt.exit_code == 0);
  CHECK(json::parse(dflt.out).at("relus").get<int64_t>() == 25600);
}

TEST_CASE("cli count writes ledger artifacts") {
  ts::TempDir dir("cli_count");
  const ts::CliResult res =
      ts::run_cli("count --output-dir " + q(dir.path.string()));
  REQUIRE(res.exit_code == 0);
  const std::string csv = ts::read_file(dir.file("ledger.csv"));
  CHECK(csv.rfind("cell_index,H,W,C,relus,flops,params\n", 0) == 0);
  const json art = json::parse(ts::read_file(dir.file("ledger.json")));
  CHECK(art.at("totals").at("relus").get<int64_t>() == 25600);
}

TEST_CASE("cli count with a legacy genotype reports pooling units") {
  const ts::CliResult res = ts::run_cli(
      "count --h0 8 --w0 8 --channels 2 --depth 3 --placement 0 1 --genotype " +
      q(ts::fixture_path("genotype_n7_legacy.json")));
  REQUIRE(res.exit_code == 0);
  const json j = json::parse(res.out);
  CHECK(j.at("maxpool_units").get<int64_t>() > 0);
  CHECK(j.at("flops").get<int64_t>() > 0);
}

TEST_CASE("cli validate accepts the reference genotype") {
  ts::TempDir dir("cli_validate");
  const ts::CliResult res =
      ts::run_cli("validate --genotype " + q(ts::fixture_path("genotype_n7.json")) +
                  " --output-dir " + q(dir.path.string()));
  REQUIRE(res.exit_code == 0);
  CHECK(res.err.empty());
  const json j = json::parse(res.out);
  CHECK(j.at("ok").get<bool>());
  CHECK(j.at("violations").empty());
  CHECK(ts::read_file(dir.file("report.json")) == res.out);
}

TEST_CASE("cli validate flags a broken genotype and exits 1") {
  ts::TempDir dir("cli_invalid");
  cg::Genotype g = cg::load_genotype(ts::fixture_path("genotype_n7.json"));
  g.normal.edges.push_back({cg::OpKind::identity, 0, 2});  // third input to node 2
  const std::string path = dir.file("broken.json");
  ts::write_file(path, cg::serialize(g));

  const ts::CliResult res = ts::run_cli("validate --genotype " + q(path));
  CHECK(res.exit_code == 1);
  const json report = json::parse(res.out);
  CHECK(!report.at("ok").get<bool>());
  CHECK(!report.at("violations").empty());
  const json err = json::parse(res.err);
  CHECK(err.at("code").get<std::string>() == "invalid-genotype");
  CHECK(err.at("context").get<std::string>() == path);
}

TEST_CASE("cli io and parse failures exit 1 with coded records") {
  const ts::CliResult missing =
      ts::run_cli("validate --genotype /no/such/genotype.json");
  CHECK(missing.exit_code == 1);
  CHECK(err_code(missing) == "io");

  ts::TempDir dir("cli_junk");
  ts::write_file(dir.file("junk.json"), "{ not json\n");
  const ts::CliResult junk =
      ts::run_cli("validate --genotype " + q(dir.file("junk.json")));
  CHECK(junk.exit_code == 1);
  CHECK(err_code(junk) == "parse");
}

TEST_CASE("cli usage errors exit 2") {
  const ts::CliResult none = ts::run_cli("");
  CHECK(none.exit_code == 2);
  CHECK(err_code(none) == "usage");

  const ts::CliResult unknown = ts::run_cli("count --bogus 3");
  CHECK(unknown.exit_code == 2);
  CHECK(err_code(unknown) == "usage");

  const ts::CliResult required = ts::run_cli("plan");
  CHECK(required.exit_code == 2);
  CHECK(err_code(required) == "usage");

  const ts::CliResult enum_miss = ts::run_cli("count --stem weird");
  CHECK(enum_miss.exit_code == 2);
  CHECK(err_code(enum_miss) == "usage");
}

TEST_CASE("cli plan matches the library budget sweep") {
  const ts::CliResult res = ts::run_cli("plan --budget 50000");
  REQUIRE(res.exit_code == 0);
  CHECK(res.err.empty());
  const auto rows = ac::plan_budget(50000, 32, 32, 1, 64, 1, 20, 0.05);
  CHECK(res.out == ac::budget_csv(rows));
  CHECK(res.out.find("7,7,50176,176") != std::string::npos);
}

TEST_CASE("cli skeleton matches the library layout") {
  const ts::CliResult res = ts::run_cli("skeleton");
  REQUIRE(res.exit_code == 0);
  ac::NetworkPlan p;
  p.h0 = 32;
  p.w0 = 32;
  p.c = 5;
  p.d = 5;
  p.placement = {0, 1};
  CHECK(res.out == sphynx::skeleton::skeleton_json(sphynx::skeleton::build_skeleton(p)));
  CHECK(json::parse(res.out).at("total_relus").get<int64_t>() == 25600);
}

TEST_CASE("cli place-search is deterministic and honors SPHYNX_SEED") {
  const std::string base =
      "place-search --branches 3 --noise 0.4 0.05 0.3 --epochs 2 --steps 4";
  ts::TempDir d1("cli_search1");
  ts::TempDir d2("cli_search2");
  const ts::CliResult r1 =
      ts::run_cli(base + " --seed 9 --output-dir " + q(d1.path.string()));
  const ts::CliResult r2 =
      ts::run_cli(base + " --seed 9 --output-dir " + q(d2.path.string()));
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(r1.err.empty());
  CHECK(r1.out == r2.out);
  CHECK(ts::read_file(d1.file("search.json")) == ts::read_file(d2.file("search.json")));
  CHECK(ts::read_file(d1.file("trajectory.csv")) ==
        ts::read_file(d2.file("trajectory.csv")));
  CHECK(ts::read_file(d1.file("search.json")) == r1.out);

  const json j = json::parse(r1.out);
  CHECK(j.at("beta").size() == 3);
  CHECK(j.at("picked").get<int>() >= 0);

  const ts::CliResult via_env = ts::run_cli(base, "SPHYNX_SEED=9");
  REQUIRE(via_env.exit_code == 0);
  CHECK(via_env.out == r1.out);

  const ts::CliResult other = ts::run_cli(base + " --seed 10");
  REQUIRE(other.exit_code == 0);
  CHECK(other.out != r1.out);
}

TEST_CASE("cli place-grid is worker-count invariant") {
  const std::string base =
      "place-grid --branches 3 --noise 0.4 0.05 0.3 --epochs 2 --steps 4"
      " --eval-batches 4 --seed 11";
  ts::TempDir dir("cli_grid");
  const ts::CliResult w1 =
      ts::run_cli(base + " --workers 1 --output-dir " + q(dir.path.string()));
  const ts::CliResult w2 = ts::run_cli(base + " --workers 2");
  REQUIRE(w1.exit_code == 0);
  REQUIRE(w2.exit_code == 0);
  CHECK(w1.out == w2.out);
  const json j = json::parse(w1.out);
  CHECK(j.at("scores").size() == 3);
  CHECK(j.at("best").get<int>() >= 0);
  CHECK(ts::read_file(dir.file("grid.csv")).rfind("branch,score\n", 0) == 0);
  CHECK(ts::read_file(dir.file("grid.json")) == w1.out);
}

TEST_CASE("cli discretize hardens a saved relaxation state") {
  ts::TempDir dir("cli_disc");
  sphynx::Rng rng(404);
  const rx::RelaxationState st = rx::random_state(5, cg::sphynx_search_ops(), rng, 1.5);
  ts::write_file(dir.file("state.json"), rx::serialize(st));

  const ts::CliResult res =
      ts::run_cli("discretize --state " + q(dir.file("state.json")) +
                  " --output-dir " + q(dir.path.string()));
  REQUIRE(res.exit_code == 0);
  CHECK(res.err.empty());
  CHECK(res.out == cg::serialize(rx::discretize(st)));
  CHECK(ts::read_file(dir.file("genotype.json")) == res.out);
  CHECK(cg::validate(cg::parse(res.out)).ok);
}

TEST_CASE("cli simulate reproduces the fixed-point oracle") {
  const std::string base = "simulate --model " + q(ts::fixture_path("model_3layer.json")) +
                           " --input " + q(ts::fixture_path("input_4.csv")) + " --seed 5";
  ts::TempDir d1("cli_sim1");
  ts::TempDir d2("cli_sim2");
  const ts::CliResult r1 = ts::run_cli(base + " --output-dir " + q(d1.path.string()));
  const ts::CliResult r2 = ts::run_cli(base + " --output-dir " + q(d2.path.string()));
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(r1.err.empty());
  CHECK(r1.out == r2.out);

  const json j = json::parse(r1.out);
  CHECK(j.at("message_count").get<int>() == 6);
  CHECK(j.at("prime").get<uint64_t>() == ps::kDefaultPrime);
  CHECK(j.at("scale_bits").get<int>() == 12);

  const ps::Model m = ps::load_model(ts::fixture_path("model_3layer.json"));
  const std::vector<double> x{0.75, -1.25, 0.5, 2.0};
  const ps::FixedTrace trace = ps::plaintext_fixed_trace(m, ps::FixedCodec(), x);
  CHECK(j.at("logits_fixed").get<std::vector<uint64_t>>() == trace.logits);

  CHECK(ts::read_file(d1.file("transcript.bin")) == ts::read_file(d2.file("transcript.bin")));
  CHECK(ts::read_file(d1.file("transcript.json")) ==
        ts::read_file(d2.file("transcript.json")));
  CHECK(ts::read_file(d1.file("result.json")) == r1.out);
}

TEST_CASE("cli simulate over tcp matches the in-process run") {
  const std::string base = "simulate --model " + q(ts::fixture_path("model_3layer.json")) +
                           " --input " + q(ts::fixture_path("input_4.csv")) + " --seed 5";
  const ts::CliResult queue = ts::run_cli(base);
  const ts::CliResult tcp = ts::run_cli(base + " --tcp");
  REQUIRE(queue.exit_code == 0);
  REQUIRE(tcp.exit_code == 0);
  CHECK(tcp.out == queue.out);
}

TEST_CASE("cli latency-fit then latency-predict round trips") {
  const std::string runs = ts::fixture_path("bench_tiny_imagenet.csv");
  const ts::CliResult fit = ts::run_cli("latency-fit --runs " + q(runs));
  REQUIRE(fit.exit_code == 0);
  CHECK(fit.out == lat::model_json(lat::calibrate(lat::load_runs_csv(runs))));

  ts::TempDir dir("cli_lat");
  ts::write_file(dir.file("model.json"), fit.out);
  const ts::CliResult pred = ts::run_cli("latency-predict --model " +
                                         q(dir.file("model.json")) + " --relus 286720");
  REQUIRE(pred.exit_code == 0);
  const json j = json::parse(pred.out);
  CHECK(j.at("relus").get<int64_t>() == 286720);
  const double ms = j.at("latency_ms").get<double>();
  CHECK(std::fabs(ms - 6140.0) / 6140.0 < 0.05);

  const ts::CliResult bad = ts::run_cli("latency-predict --model " +
                                        q(dir.file("model.json")) + " --relus=-5");
  CHECK(bad.exit_code == 1);
  CHECK(err_code(bad) == "predict");
}

TEST_CASE("cli pareto matches the library frontier") {
  const std::string runs = ts::fixture_path("bench_cifar100.csv");
  const ts::CliResult res = ts::run_cli("pareto --runs " + q(runs));
  REQUIRE(res.exit_code == 0);
  CHECK(res.out == lat::runs_csv(lat::pareto_frontier(lat::load_runs_csv(runs))));
  CHECK(res.out.find("cryptonas-344k") != std::string::npos);
  CHECK(res.out.find("cryptonas-50k") == std::string::npos);
}

TEST_CASE("cli dot renders the genotype") {
  const std::string path = ts::fixture_path("genotype_n7.json");
  const ts::CliResult res = ts::run_cli("dot --genotype " + q(path));
  REQUIRE(res.exit_code == 0);
  CHECK(res.out.rfind("digraph", 0) == 0);
  CHECK(res.out == cg::to_dot(cg::load_genotype(path)));
}

TEST_CASE("cli config file feeds subcommand flags") {
  ts::TempDir dir("cli_cfg");
  ts::write_file(dir.file("cfg.json"), "{\"count\": {\"channels\": 7, \"depth\": 7}}\n");
  const ts::CliResult cfg = ts::run_cli("--config " + q(dir.file("cfg.json")) + " count");
  REQUIRE(cfg.exit_code == 0);
  CHECK(json::parse(cfg.out).at("relus").get<int64_t>() == 50176);

  const ts::CliResult over =
      ts::run_cli("--config " + q(dir.file("cfg.json")) + " count --channels 8");
  REQUIRE(over.exit_code == 0);
  CHECK(json::parse(over.out).at("relus").get<int64_t>() == 57344);

  // underscore keys normalize onto dashed flag names
  ts::write_file(dir.file("plan_cfg.json"), "{\"plan\": {\"d_max\": 10}}\n");
  const ts::CliResult plan = ts::run_cli("--config " + q(dir.file("plan_cfg.json")) +
                                         " plan --budget 50000");
  REQUIRE(plan.exit_code == 0);
  CHECK(plan.out == ac::budget_csv(ac::plan_budget(50000, 32, 32, 1, 64, 1, 10, 0.05)));

  ts::write_file(dir.file("bad_key.json"), "{\"count\": {\"bogus\": 1}}\n");
  const ts::CliResult bad =
      ts::run_cli("--config " + q(dir.file("bad_key.json")) + " count");
  CHECK(bad.exit_code == 2);
  CHECK(err_code(bad) == "usage");

  ts::write_file(dir.file("broken.json"), "{oops\n");
  const ts::CliResult broken =
      ts::run_cli("--config " + q(dir.file("broken.json")) + " count");
  CHECK(broken.exit_code == 2);
  CHECK(err_code(broken) == "usage");
}

TEST_CASE("cli help text is stable") {
  const ts::CliResult help = ts::run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.out == ts::read_file(ts::fixture_path("cli_help.txt")));

  const ts::CliResult all = ts::run_cli("--help-all");
  CHECK(all.exit_code == 0);
  for (const char* name : {"validate", "count", "plan", "skeleton", "place-search",
                           "place-grid", "discretize", "simulate", "latency-fit",
                           "latency-predict", "pareto", "dot"})
    CHECK(all.out.find(name) != std::string::npos);
}
