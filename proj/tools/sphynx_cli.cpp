// Command-line front end. Each subcommand maps onto one library operation,
// prints its payload (JSON/CSV/DOT) on stdout and writes optional artifact
// files under --output-dir. Errors come out as one-line JSON records on
// stderr: exit 0 = success, 1 = domain error, 2 = usage error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sphynx/accounting.hpp"
#include "sphynx/cellgraph.hpp"
#include "sphynx/error.hpp"
#include "sphynx/latency.hpp"
#include "sphynx/pisim.hpp"
#include "sphynx/placement.hpp"
#include "sphynx/relaxation.hpp"
#include "sphynx/skeleton.hpp"

namespace {

using nlohmann::json;

void error_record(const std::string& code, const std::string& message,
                  const std::string& context = "") {
  json j;
  j["code"] = code;
  j["message"] = message;
  j["context"] = context;
  std::cerr << j.dump() << "\n";
}

// Config file: JSON object with one section per subcommand, e.g.
// {"count": {"h0": 32, "channels": 5}}. Section keys are the long flag names
// (dashes or underscores both work); command-line flags win over the file.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConfigError("config root must be a JSON object");
    std::vector<CLI::ConfigItem> out;
    for (const auto& [section, body] : j.items()) {
      if (body.is_object()) {
        for (const auto& [key, value] : body.items()) {
          CLI::ConfigItem item;
          item.parents = {section};
          item.name = normalize(key);
          item.inputs = to_inputs(value);
          out.push_back(std::move(item));
        }
      } else {
        CLI::ConfigItem item;
        item.name = normalize(section);
        item.inputs = to_inputs(body);
        out.push_back(std::move(item));
      }
    }
    return out;
  }

 private:
  static std::string normalize(std::string key) {
    for (char& c : key)
      if (c == '_') c = '-';
    return key;
  }

  static std::vector<std::string> to_inputs(const json& v) {
    std::vector<std::string> inputs;
    if (v.is_array()) {
      for (const auto& e : v) inputs.push_back(scalar(e));
    } else {
      inputs.push_back(scalar(v));
    }
    return inputs;
  }

  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }
};

void write_artifact(const std::string& dir, const std::string& name,
                    const std::string& content) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sphynx::Error("io", "cannot write artifact", path.string());
  out << content;
}

void write_artifact_bytes(const std::string& dir, const std::string& name,
                          const std::vector<uint8_t>& bytes) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  const std::filesystem::path path = std::filesystem::path(dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sphynx::Error("io", "cannot write artifact", path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sphynx::Error("io", "cannot open file", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Shared plan flags for count / skeleton / plan-style subcommands.
struct PlanFlags {
  int h0 = 32;
  int w0 = 32;
  int channels = 5;
  int depth = 5;
  std::pair<int, int> placement{0, 1};
  std::string stem = "direct";
  std::string balancing = "relu";

  void attach(CLI::App* cmd) {
    cmd->add_option("--h0", h0, "Input height")->capture_default_str();
    cmd->add_option("--w0", w0, "Input width")->capture_default_str();
    cmd->add_option("--channels", channels, "Base channel count C")->capture_default_str();
    cmd->add_option("--depth", depth, "Cell count D")->capture_default_str();
    cmd->add_option("--placement", placement, "Reduce-cell indices r1 r2")
        ->capture_default_str();
    cmd->add_option("--stem", stem, "Stem kind")
        ->check(CLI::IsMember({"direct", "imagenet3"}))
        ->capture_default_str();
    cmd->add_option("--balancing", balancing, "Channel widening rule at reduces")
        ->check(CLI::IsMember({"relu", "flop"}))
        ->capture_default_str();
  }

  sphynx::accounting::NetworkPlan plan() const {
    sphynx::accounting::NetworkPlan p;
    p.h0 = h0;
    p.w0 = w0;
    p.c = channels;
    p.d = depth;
    p.placement = placement;
    p.stem = stem == "imagenet3" ? sphynx::accounting::StemKind::imagenet3
                                 : sphynx::accounting::StemKind::direct;
    p.balancing = balancing == "flop" ? sphynx::accounting::Balancing::flop
                                      : sphynx::accounting::Balancing::relu;
    return p;
  }
};

// Shared evaluator flags for place-search / place-grid.
struct EvaluatorFlags {
  std::string evaluator = "synthetic";
  int branches = 6;
  std::vector<double> noise;
  int h0 = 8;
  int w0 = 8;
  int channels = 2;
  int depth = 4;
  bool exclude_last = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--evaluator", evaluator, "Branch evaluator")
        ->check(CLI::IsMember({"synthetic", "surrogate"}))
        ->capture_default_str();
    cmd->add_option("--branches", branches, "Branch count (synthetic evaluator)")
        ->capture_default_str();
    cmd->add_option("--noise", noise,
                    "Per-branch label-flip rates (synthetic evaluator)");
    cmd->add_option("--h0", h0, "Input height (surrogate evaluator)")->capture_default_str();
    cmd->add_option("--w0", w0, "Input width (surrogate evaluator)")->capture_default_str();
    cmd->add_option("--channels", channels, "Base channels (surrogate evaluator)")
        ->capture_default_str();
    cmd->add_option("--depth", depth, "Cell count (surrogate evaluator)")
        ->capture_default_str();
    cmd->add_flag("--exclude-last", exclude_last,
                  "Drop placements touching the last cell (surrogate evaluator)");
  }

  std::unique_ptr<sphynx::placement::Evaluator> make(uint64_t seed) const {
    if (evaluator == "synthetic") {
      sphynx::placement::SynthConfig cfg;
      cfg.branches = branches;
      if (!noise.empty()) cfg.noise = noise;
      cfg.seed = seed;
      return sphynx::placement::make_synthetic(cfg);
    }
    sphynx::placement::SurrogateConfig cfg;
    cfg.plan.h0 = h0;
    cfg.plan.w0 = w0;
    cfg.plan.c = channels;
    cfg.plan.d = depth;
    cfg.exclude_last = exclude_last;
    cfg.seed = seed;
    return sphynx::placement::make_surrogate(cfg);
  }
};

std::vector<double> parse_input_values(const std::string& text) {
  std::vector<double> vals;
  std::string token;
  for (char c : text + "\n") {
    if (c == ',' || c == '\n' || c == '\r' || c == ' ' || c == '\t') {
      if (!token.empty()) {
        try {
          vals.push_back(std::stod(token));
        } catch (const std::exception&) {
          throw sphynx::Error("parse", "bad numeric input value", token);
        }
        token.clear();
      }
    } else {
      token += c;
    }
  }
  if (vals.empty()) throw sphynx::Error("parse", "input file holds no values");
  return vals;
}

json plan_echo(const sphynx::accounting::NetworkPlan& p) {
  return json{{"h0", p.h0},
              {"w0", p.w0},
              {"channels", p.c},
              {"depth", p.d},
              {"placement", {p.placement.first, p.placement.second}},
              {"stem", sphynx::accounting::stem_name(p.stem)},
              {"balancing", sphynx::accounting::balancing_name(p.balancing)}};
}

json report_json(const sphynx::cellgraph::ValidationReport& rep) {
  json out;
  out["ok"] = rep.ok;
  out["violations"] = json::array();
  for (const auto& v : rep.violations)
    out["violations"].push_back({{"cell", v.cell},
                                 {"edge_index", v.edge_index},
                                 {"rule", v.rule},
                                 {"message", v.message}});
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ReLU-budget network planning toolkit"};
  app.name("sphynx");  // stable help text regardless of the invocation path
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file, one section per subcommand");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_help_all_flag("--help-all", "Expanded help for every subcommand");
  app.require_subcommand(1);

  int exit_code = 0;

  // validate ----------------------------------------------------------------
  auto* c_validate = app.add_subcommand("validate", "Check a genotype file");
  std::string v_genotype;
  std::string v_outdir;
  c_validate->add_option("--genotype", v_genotype, "Genotype JSON file")->required();
  c_validate->add_option("--output-dir", v_outdir, "Artifact directory");
  c_validate->callback([&] {
    const auto g = sphynx::cellgraph::load_genotype(v_genotype);
    const auto rep = sphynx::cellgraph::validate(g);
    const std::string payload = report_json(rep).dump(2) + "\n";
    std::cout << payload;
    write_artifact(v_outdir, "report.json", payload);
    if (!rep.ok) {
      error_record("invalid-genotype", "genotype fails validation", v_genotype);
      exit_code = 1;
    }
  });

  // count -------------------------------------------------------------------
  auto* c_count = app.add_subcommand("count", "ReLU/FLOP/param ledger for a plan");
  PlanFlags count_plan;
  count_plan.attach(c_count);
  std::string count_genotype, count_outdir;
  c_count->add_option("--genotype", count_genotype,
                      "Optional genotype for edge-level FLOPs and legacy counting");
  c_count->add_option("--output-dir", count_outdir, "Artifact directory");
  c_count->callback([&] {
    const auto plan = count_plan.plan();
    std::unique_ptr<sphynx::cellgraph::Genotype> g;
    if (!count_genotype.empty())
      g = std::make_unique<sphynx::cellgraph::Genotype>(
          sphynx::cellgraph::load_genotype(count_genotype));
    const auto led = sphynx::accounting::ledger(plan, g.get());
    json out = plan_echo(plan);
    out["relus"] = led.total_relus;
    out["stem_relus"] = led.stem_relus;
    out["flops"] = led.total_flops;
    out["params"] = led.total_params;
    if (led.maxpool_units > 0) out["maxpool_units"] = led.maxpool_units;
    std::cout << out.dump(2) << "\n";
    write_artifact(count_outdir, "ledger.csv", sphynx::accounting::ledger_csv(led));
    write_artifact(count_outdir, "ledger.json", sphynx::accounting::ledger_json(led));
  });

  // plan --------------------------------------------------------------------
  auto* c_plan = app.add_subcommand("plan", "Solve (C, D) grids for a ReLU budget");
  int64_t plan_budget_v = 0;
  double plan_tol = 0.05;
  int plan_h0 = 32, plan_w0 = 32, plan_cmin = 1, plan_cmax = 64, plan_dmin = 1,
      plan_dmax = 20;
  std::string plan_outdir;
  c_plan->add_option("--budget", plan_budget_v, "Target ReLU budget")->required();
  c_plan->add_option("--tol", plan_tol, "Relative tolerance")->capture_default_str();
  c_plan->add_option("--h0", plan_h0, "Input height")->capture_default_str();
  c_plan->add_option("--w0", plan_w0, "Input width")->capture_default_str();
  c_plan->add_option("--c-min", plan_cmin, "Smallest C")->capture_default_str();
  c_plan->add_option("--c-max", plan_cmax, "Largest C")->capture_default_str();
  c_plan->add_option("--d-min", plan_dmin, "Smallest D")->capture_default_str();
  c_plan->add_option("--d-max", plan_dmax, "Largest D")->capture_default_str();
  c_plan->add_option("--output-dir", plan_outdir, "Artifact directory");
  c_plan->callback([&] {
    const auto rows = sphynx::accounting::plan_budget(plan_budget_v, plan_h0, plan_w0,
                                                      plan_cmin, plan_cmax, plan_dmin,
                                                      plan_dmax, plan_tol);
    const std::string csv = sphynx::accounting::budget_csv(rows);
    std::cout << csv;
    write_artifact(plan_outdir, "budget.csv", csv);
    write_artifact(plan_outdir, "budget.json", sphynx::accounting::budget_json(rows));
  });

  // skeleton ------------------------------------------------------------------
  auto* c_skeleton = app.add_subcommand("skeleton", "Stage-by-stage backbone layout");
  PlanFlags skel_plan;
  skel_plan.attach(c_skeleton);
  std::string skel_outdir;
  c_skeleton->add_option("--output-dir", skel_outdir, "Artifact directory");
  c_skeleton->callback([&] {
    const auto sk = sphynx::skeleton::build_skeleton(skel_plan.plan());
    const std::string payload = sphynx::skeleton::skeleton_json(sk);
    std::cout << payload;
    write_artifact(skel_outdir, "skeleton.json", payload);
  });

  // place-search --------------------------------------------------------------
  auto* c_search = app.add_subcommand(
      "place-search", "Gumbel straight-through placement search over branches");
  EvaluatorFlags search_eval;
  search_eval.attach(c_search);
  int search_epochs = 12, search_steps = 40;
  uint64_t search_seed = 0;
  std::string search_outdir;
  c_search->add_option("--epochs", search_epochs, "Search epochs")->capture_default_str();
  c_search->add_option("--steps", search_steps, "Steps per epoch")->capture_default_str();
  c_search->add_option("--seed", search_seed, "RNG seed")
      ->envname("SPHYNX_SEED")
      ->capture_default_str();
  c_search->add_option("--output-dir", search_outdir, "Artifact directory");
  c_search->callback([&] {
    auto ev = search_eval.make(search_seed);
    sphynx::placement::SearchConfig cfg;
    cfg.epochs = search_epochs;
    cfg.steps_per_epoch = search_steps;
    cfg.seed = search_seed;
    const auto res = sphynx::placement::run_search(*ev, cfg);
    const std::string payload = sphynx::placement::search_json(res);
    std::cout << payload;
    write_artifact(search_outdir, "search.json", payload);
    write_artifact(search_outdir, "trajectory.csv", sphynx::placement::trajectory_csv(res));
  });

  // place-grid ----------------------------------------------------------------
  auto* c_grid = app.add_subcommand("place-grid",
                                    "Exhaustive per-branch training baseline");
  EvaluatorFlags grid_eval;
  grid_eval.attach(c_grid);
  int grid_epochs = 12, grid_steps = 40, grid_eval_batches = 16, grid_workers = 1;
  uint64_t grid_seed = 0;
  std::string grid_outdir;
  c_grid->add_option("--epochs", grid_epochs, "Training epochs per branch")
      ->capture_default_str();
  c_grid->add_option("--steps", grid_steps, "Steps per epoch")->capture_default_str();
  c_grid->add_option("--eval-batches", grid_eval_batches, "Held-out batches per branch")
      ->capture_default_str();
  c_grid->add_option("--workers", grid_workers, "Parallel branch workers")
      ->capture_default_str();
  c_grid->add_option("--seed", grid_seed, "RNG seed")
      ->envname("SPHYNX_SEED")
      ->capture_default_str();
  c_grid->add_option("--output-dir", grid_outdir, "Artifact directory");
  c_grid->callback([&] {
    auto ev = grid_eval.make(grid_seed);
    sphynx::placement::GridConfig cfg;
    cfg.epochs = grid_epochs;
    cfg.steps_per_epoch = grid_steps;
    cfg.eval_batches = grid_eval_batches;
    cfg.workers = grid_workers;
    cfg.seed = grid_seed;
    const auto res = sphynx::placement::grid_search(*ev, cfg);
    const std::string payload = sphynx::placement::grid_json(res);
    std::cout << payload;
    write_artifact(grid_outdir, "grid.json", payload);
    write_artifact(grid_outdir, "grid.csv", sphynx::placement::grid_csv(res));
  });

  // discretize ----------------------------------------------------------------
  auto* c_disc = app.add_subcommand("discretize",
                                    "Harden relaxed cell logits into a genotype");
  std::string disc_state, disc_outdir;
  c_disc->add_option("--state", disc_state, "Relaxation state JSON file")->required();
  c_disc->add_option("--output-dir", disc_outdir, "Artifact directory");
  c_disc->callback([&] {
    const auto st = sphynx::relaxation::load_state(disc_state);
    const auto g = sphynx::relaxation::discretize(st);
    const std::string payload = sphynx::cellgraph::serialize(g);
    std::cout << payload;
    write_artifact(disc_outdir, "genotype.json", payload);
  });

  // simulate ------------------------------------------------------------------
  auto* c_sim = app.add_subcommand("simulate",
                                   "Two-party private-inference protocol run");
  std::string sim_model, sim_input, sim_outdir;
  uint64_t sim_seed = 0;
  uint64_t sim_prime = sphynx::pisim::kDefaultPrime;
  int sim_scale = 12, sim_guard = 24;
  bool sim_tcp = false;
  c_sim->add_option("--model", sim_model, "Dense model JSON file")->required();
  c_sim->add_option("--input", sim_input, "Input vector file (comma/newline separated)")
      ->required();
  c_sim->add_option("--seed", sim_seed, "Offline-phase RNG seed")
      ->envname("SPHYNX_SEED")
      ->capture_default_str();
  c_sim->add_option("--prime", sim_prime, "Field modulus")->capture_default_str();
  c_sim->add_option("--scale-bits", sim_scale, "Fixed-point fractional bits")
      ->capture_default_str();
  c_sim->add_option("--guard-bits", sim_guard, "Overflow guard bits")
      ->capture_default_str();
  c_sim->add_flag("--tcp", sim_tcp, "Run the parties over a loopback TCP socket");
  c_sim->add_option("--output-dir", sim_outdir, "Artifact directory");
  c_sim->callback([&] {
    const auto model = sphynx::pisim::load_model(sim_model);
    const auto x = parse_input_values(read_file(sim_input));
    sphynx::pisim::ProtocolConfig cfg;
    cfg.codec = sphynx::pisim::FixedCodec(sim_prime, sim_scale, sim_guard);
    cfg.seed = sim_seed;
    sphynx::pisim::InferenceResult res;
    if (sim_tcp) {
      sphynx::pisim::TcpListener listener(0);
      auto client_fut = std::async(std::launch::async, [&] {
        return sphynx::pisim::tcp_connect("127.0.0.1", listener.port());
      });
      auto server_tr = listener.accept_one();
      auto client_tr = client_fut.get();
      res = sphynx::pisim::simulate_inference(model, x, cfg, *client_tr, *server_tr);
    } else {
      res = sphynx::pisim::simulate_inference(model, x, cfg);
    }
    json out;
    out["logits"] = res.logits;
    out["logits_fixed"] = res.logits_fixed;
    out["message_count"] = res.transcript.messages.size();
    out["prime"] = res.transcript.prime;
    out["scale_bits"] = res.transcript.scale_bits;
    std::cout << out.dump(2) << "\n";
    if (!sim_outdir.empty()) {
      std::vector<uint8_t> bin;
      for (const auto& m : res.transcript.messages) {
        const auto bytes = sphynx::pisim::frame_bytes(m);
        bin.insert(bin.end(), bytes.begin(), bytes.end());
      }
      write_artifact_bytes(sim_outdir, "transcript.bin", bin);
      write_artifact(sim_outdir, "transcript.json",
                     sphynx::pisim::transcript_sidecar_json(res.transcript));
      write_artifact(sim_outdir, "result.json", out.dump(2) + "\n");
    }
  });

  // latency-fit -----------------------------------------------------------------
  auto* c_fit = app.add_subcommand("latency-fit",
                                   "Calibrate the per-ReLU latency model from runs");
  std::string fit_runs, fit_outdir;
  c_fit->add_option("--runs", fit_runs, "Benchmark CSV (label,relus,latency_ms,accuracy_pct)")
      ->required();
  c_fit->add_option("--output-dir", fit_outdir, "Artifact directory");
  c_fit->callback([&] {
    const auto records = sphynx::latency::load_runs_csv(fit_runs);
    const auto model = sphynx::latency::calibrate(records);
    const std::string payload = sphynx::latency::model_json(model);
    std::cout << payload;
    write_artifact(fit_outdir, "latency_model.json", payload);
  });

  // latency-predict ---------------------------------------------------------------
  auto* c_pred = app.add_subcommand("latency-predict",
                                    "Predict online latency for a ReLU count");
  std::string pred_model, pred_outdir;
  int64_t pred_relus = 0;
  c_pred->add_option("--model", pred_model, "Latency model JSON file")->required();
  c_pred->add_option("--relus", pred_relus, "ReLU count")->required();
  c_pred->add_option("--output-dir", pred_outdir, "Artifact directory");
  c_pred->callback([&] {
    if (pred_relus < 0)
      throw sphynx::Error("predict", "relus must be non-negative");
    const auto model = sphynx::latency::load_model(pred_model);
    json out;
    out["relus"] = pred_relus;
    out["latency_ms"] = sphynx::latency::predict(model, pred_relus);
    std::cout << out.dump(2) << "\n";
    write_artifact(pred_outdir, "prediction.json", out.dump(2) + "\n");
  });

  // pareto --------------------------------------------------------------------
  auto* c_pareto = app.add_subcommand("pareto",
                                      "Accuracy-latency frontier over benchmark runs");
  std::string pareto_runs, pareto_outdir;
  c_pareto->add_option("--runs", pareto_runs,
                       "Benchmark CSV (label,relus,latency_ms,accuracy_pct)")
      ->required();
  c_pareto->add_option("--output-dir", pareto_outdir, "Artifact directory");
  c_pareto->callback([&] {
    const auto records = sphynx::latency::load_runs_csv(pareto_runs);
    const auto frontier = sphynx::latency::pareto_frontier(records);
    const std::string csv = sphynx::latency::runs_csv(frontier);
    std::cout << csv;
    write_artifact(pareto_outdir, "pareto.csv", csv);
  });

  // dot -----------------------------------------------------------------------
  auto* c_dot = app.add_subcommand("dot", "Graphviz rendering of a genotype");
  std::string dot_genotype, dot_outdir;
  c_dot->add_option("--genotype", dot_genotype, "Genotype JSON file")->required();
  c_dot->add_option("--output-dir", dot_outdir, "Artifact directory");
  c_dot->callback([&] {
    const auto g = sphynx::cellgraph::load_genotype(dot_genotype);
    const std::string payload = sphynx::cellgraph::to_dot(g);
    std::cout << payload;
    write_artifact(dot_outdir, "genotype.dot", payload);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
      return app.exit(e);
    error_record("usage", e.what());
    return 2;
  } catch (const sphynx::Error& e) {
    error_record(e.code(), e.what(), e.context());
    return 1;
  } catch (const std::exception& e) {
    error_record("internal", e.what());
    return 1;
  }
  return exit_code;
}
