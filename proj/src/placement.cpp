#include "sphynx/placement.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sphynx/autograd.hpp"
#include "sphynx/error.hpp"
#include "sphynx/skeleton.hpp"

namespace sphynx::placement {

std::vector<uint64_t> Evaluator::checksums() const {
  std::vector<uint64_t> out;
  for (int b = 0; b < branch_count(); ++b) out.push_back(checksum(b));
  return out;
}

namespace {

std::string loss_context(int epoch, int branch) {
  std::ostringstream ctx;
  ctx << "epoch " << epoch << " branch " << branch;
  return ctx.str();
}

// Fully connected stack with ReLU between layers; widths includes input and
// output dims.
struct MlpBranch {
  std::vector<Array> params;  // W0,b0,W1,b1,...
  std::vector<int> widths;
  optim::Sgd opt;

  MlpBranch(std::vector<int> w, const optim::SgdConfig& cfg, Rng rng)
      : widths(std::move(w)), opt(cfg) {
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      Array wmat({widths[l], widths[l + 1]});
      const double s = 1.0 / std::sqrt(static_cast<double>(widths[l]));
      for (double& v : wmat.data) v = s * rng.normal();
      params.push_back(std::move(wmat));
      params.push_back(Array({widths[l + 1]}));
    }
  }

  ad::Var logits(ad::Tape& t, const Array& x, std::vector<ad::Var>* weight_vars,
                 bool trainable) {
    ad::Var h = t.leaf(x, false);
    const size_t layers = params.size() / 2;
    for (size_t l = 0; l < layers; ++l) {
      ad::Var w = t.leaf(params[2 * l], trainable);
      ad::Var b = t.leaf(params[2 * l + 1], trainable);
      if (weight_vars != nullptr) {
        weight_vars->push_back(w);
        weight_vars->push_back(b);
      }
      h = t.add(t.matmul(h, w), b);
      if (l + 1 < layers) h = t.relu(h);
    }
    return h;
  }

  std::vector<Array*> param_ptrs() {
    std::vector<Array*> out;
    for (Array& a : params) out.push_back(&a);
    return out;
  }
};

// Shared Gaussian-blob task; per-branch symmetric label noise.
class MlpBankEvaluator : public Evaluator {
 public:
  MlpBankEvaluator(Array means, int input_dim, int classes, int batch, double sigma,
                   std::vector<double> noise, std::vector<std::vector<int>> widths,
                   const optim::SgdConfig& opt_cfg, uint64_t seed)
      : means_(std::move(means)),
        input_dim_(input_dim),
        classes_(classes),
        batch_(batch),
        sigma_(sigma),
        noise_(std::move(noise)) {
    Rng root(seed);
    for (size_t k = 0; k < widths.size(); ++k)
      branches_.emplace_back(widths[k], opt_cfg, root.substream(10 + k));
  }

  int branch_count() const override { return static_cast<int>(branches_.size()); }

  double train_step(int branch, Rng& rng) override {
    Batch b = make_batch(rng, noise_[branch]);
    MlpBranch& br = branches_[branch];
    ad::Tape t;
    std::vector<ad::Var> weight_vars;
    ad::Var out = br.logits(t, b.x, &weight_vars, true);
    ad::Var loss = t.cross_entropy(out, b.labels);
    const double lv = t.value(loss).data[0];
    t.backward(loss);
    std::vector<const Array*> grads;
    for (ad::Var v : weight_vars) grads.push_back(&t.grad(v));
    br.opt.step(br.param_ptrs(), grads);
    return lv;
  }

  ValProbe val_probe(int branch, Rng& rng) override {
    Batch b = make_batch(rng, noise_[branch]);
    MlpBranch& br = branches_[branch];
    ad::Tape t;
    ad::Var out = br.logits(t, b.x, nullptr, false);
    ad::Var s = t.leaf(Array::scalar(1.0), true);
    ad::Var loss = t.cross_entropy(t.scale(out, s), b.labels);
    t.backward(loss);
    ValProbe p;
    p.loss = t.value(loss).data[0];
    p.dloss_dscale = t.grad(s).data[0];
    return p;
  }

  double evaluate(int branch, Rng& rng, int batches) override {
    double acc = 0.0;
    for (int i = 0; i < batches; ++i) {
      Batch b = make_batch(rng, noise_[branch]);
      MlpBranch& br = branches_[branch];
      ad::Tape t;
      ad::Var out = br.logits(t, b.x, nullptr, false);
      acc += t.value(t.cross_entropy(out, b.labels)).data[0];
    }
    return acc / batches;
  }

  uint64_t checksum(int branch) const override {
    return optim::fnv1a(optim::snapshot_params(branches_[branch].params));
  }

 private:
  Batch make_batch(Rng& rng, double noise) const {
    Batch b;
    b.x = Array({batch_, input_dim_});
    b.labels.resize(batch_);
    for (int i = 0; i < batch_; ++i) {
      const int y = static_cast<int>(rng.below(classes_));
      for (int d = 0; d < input_dim_; ++d)
        b.x.at(i, d) = means_.at(y, d) + sigma_ * rng.normal();
      int obs = y;
      if (rng.open01() < noise) {
        const int shift = 1 + static_cast<int>(rng.below(classes_ - 1));
        obs = (y + shift) % classes_;
      }
      b.labels[i] = obs;
    }
    return b;
  }

  Array means_;
  int input_dim_, classes_, batch_;
  double sigma_;
  std::vector<double> noise_;
  std::vector<MlpBranch> branches_;
};

Array make_means(int classes, int input_dim, Rng rng, double spread) {
  Array means({classes, input_dim});
  for (double& v : means.data) v = spread * rng.normal();
  return means;
}

}  // namespace

std::unique_ptr<Evaluator> make_synthetic(const SynthConfig& cfg) {
  if (cfg.branches < 1) throw Error("placement", "need at least one branch");
  if (cfg.classes < 2) throw Error("placement", "need at least two classes");
  std::vector<double> noise = cfg.noise;
  noise.resize(cfg.branches, 0.0);
  for (double n : noise)
    if (n < 0.0 || n >= 1.0) throw Error("placement", "noise rate must be in [0,1)");
  Rng root(cfg.seed);
  Array means = make_means(cfg.classes, cfg.input_dim, root.substream(1), 2.0);
  std::vector<std::vector<int>> widths(
      cfg.branches, {cfg.input_dim, cfg.hidden, cfg.classes});
  return std::make_unique<MlpBankEvaluator>(std::move(means), cfg.input_dim, cfg.classes,
                                            cfg.batch, cfg.sigma, std::move(noise),
                                            std::move(widths), cfg.weights_opt, cfg.seed);
}

std::vector<std::pair<int, int>> surrogate_placements(const SurrogateConfig& cfg) {
  return skeleton::enumerate_placements(cfg.plan.d, cfg.exclude_last);
}

std::vector<int> surrogate_widths(const SurrogateConfig& cfg, int branch) {
  const auto placements = surrogate_placements(cfg);
  if (branch < 0 || branch >= static_cast<int>(placements.size()))
    throw Error("placement", "branch out of range");
  accounting::NetworkPlan plan = cfg.plan;
  plan.placement = placements[branch];
  plan.balancing = accounting::Balancing::flop;
  std::vector<int> widths{cfg.input_dim};
  for (const auto& cc : accounting::cell_dims(plan)) {
    const int64_t volume = static_cast<int64_t>(cc.h) * cc.w * cc.c;
    widths.push_back(std::max<int>(2, static_cast<int>(volume / cfg.width_divisor)));
  }
  widths.push_back(cfg.classes);
  return widths;
}

std::unique_ptr<Evaluator> make_surrogate(const SurrogateConfig& cfg) {
  const auto placements = surrogate_placements(cfg);
  if (placements.empty()) throw Error("placement", "no candidate placements");
  std::vector<std::vector<int>> widths;
  for (size_t k = 0; k < placements.size(); ++k)
    widths.push_back(surrogate_widths(cfg, static_cast<int>(k)));
  Rng root(cfg.seed);
  Array means = make_means(cfg.classes, cfg.input_dim, root.substream(1), 1.5);
  std::vector<double> noise(placements.size(), 0.0);
  return std::make_unique<MlpBankEvaluator>(std::move(means), cfg.input_dim, cfg.classes,
                                            cfg.batch, cfg.sigma, std::move(noise),
                                            std::move(widths), cfg.weights_opt, cfg.seed);
}

SearchResult run_search(Evaluator& ev, const SearchConfig& cfg) {
  const int k = ev.branch_count();
  if (k < 1) throw Error("placement", "evaluator has no branches");
  if (cfg.epochs < 1 || cfg.steps_per_epoch < 1)
    throw Error("placement", "epochs and steps_per_epoch must be positive");
  const int total = cfg.epochs * cfg.steps_per_epoch;
  const gumbel::GumbelConfig sched{cfg.tau_start, cfg.tau_end, total};

  Rng root(cfg.seed);
  Rng train_rng = root.substream(0xA1);
  Rng val_rng = root.substream(0xA2);
  Rng pick_rng = root.substream(0xA3);
  Rng st_rng = root.substream(0xA4);

  Array beta({k});
  optim::Adam adam(cfg.beta_opt);
  SearchResult res;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double train_sum = 0.0, val_sum = 0.0, tau_last = cfg.tau_end;
    for (int s = 0; s < cfg.steps_per_epoch; ++s, ++step) {
      const double tau = gumbel::tau_at(sched, step);
      tau_last = tau;

      std::vector<double> blog(beta.data.begin(), beta.data.end());
      const int jw = gumbel::sample(blog, pick_rng);
      const double tl = ev.train_step(jw, train_rng);
      ++res.weight_steps;
      if (!std::isfinite(tl))
        throw Error("non-finite-loss", "training loss is not finite",
                    loss_context(epoch, jw));
      train_sum += tl;

      ad::Tape t;
      ad::Var b = t.leaf(beta, true);
      int jv = -1;
      ad::Var m = gumbel::st_branch_scale(t, b, tau, st_rng, &jv);
      const Evaluator::ValProbe probe = ev.val_probe(jv, val_rng);
      if (!std::isfinite(probe.loss) || !std::isfinite(probe.dloss_dscale))
        throw Error("non-finite-loss", "validation loss is not finite",
                    loss_context(epoch, jv));
      val_sum += probe.loss;
      t.backward_seeded(m, probe.dloss_dscale);
      adam.step({&beta}, {&t.grad(b)});
      ++res.beta_steps;
    }
    res.trajectory.push_back({epoch, tau_last, train_sum / cfg.steps_per_epoch,
                              val_sum / cfg.steps_per_epoch, beta.data});
  }
  res.beta = beta.data;
  res.picked = gumbel::pick_final(res.beta);
  return res;
}

namespace {
void put_double(std::ostream& out, double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  out << ss.str();
}
}  // namespace

std::string trajectory_csv(const SearchResult& r) {
  std::ostringstream out;
  const size_t k = r.beta.size();
  out << "epoch,tau,train_loss,val_loss";
  for (size_t i = 0; i < k; ++i) out << ",beta_" << i;
  out << "\n";
  for (const TrajectoryRow& row : r.trajectory) {
    out << row.epoch << ",";
    put_double(out, row.tau);
    out << ",";
    put_double(out, row.train_loss);
    out << ",";
    put_double(out, row.val_loss);
    for (double b : row.beta) {
      out << ",";
      put_double(out, b);
    }
    out << "\n";
  }
  return out.str();
}

std::string search_json(const SearchResult& r) {
  nlohmann::json j;
  j["picked"] = r.picked;
  j["beta"] = r.beta;
  j["weight_steps"] = r.weight_steps;
  j["beta_steps"] = r.beta_steps;
  j["epochs"] = r.trajectory.size();
  return j.dump(2) + "\n";
}

GridResult grid_search(Evaluator& ev, const GridConfig& cfg) {
  const int k = ev.branch_count();
  if (k < 1) throw Error("placement", "evaluator has no branches");
  GridResult res;
  res.scores.assign(k, 0.0);
  std::atomic<int64_t> steps{0};
  std::exception_ptr first_error;
  std::mutex error_mu;

  auto work = [&](int branch) {
    try {
      Rng rng = Rng(cfg.seed).substream(0xB000 + branch);
      Rng eval_rng = Rng(cfg.seed).substream(0xC000);
      const int total = cfg.epochs * cfg.steps_per_epoch;
      for (int s = 0; s < total; ++s) {
        const double l = ev.train_step(branch, rng);
        if (!std::isfinite(l))
          throw Error("non-finite-loss", "training loss is not finite",
                      loss_context(s / cfg.steps_per_epoch, branch));
      }
      steps.fetch_add(total);
      res.scores[branch] = ev.evaluate(branch, eval_rng, cfg.eval_batches);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };

  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (int b = 0; b < k; ++b) work(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < std::min(workers, k); ++w)
      pool.emplace_back([&] {
        for (int b = next.fetch_add(1); b < k; b = next.fetch_add(1)) work(b);
      });
    for (std::thread& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  res.weight_steps = steps.load();
  res.best = 0;
  for (int b = 1; b < k; ++b)
    if (res.scores[b] < res.scores[res.best]) res.best = b;
  return res;
}

std::string grid_csv(const GridResult& r) {
  std::ostringstream out;
  out << "branch,score\n";
  for (size_t b = 0; b < r.scores.size(); ++b) {
    out << b << ",";
    put_double(out, r.scores[b]);
    out << "\n";
  }
  return out.str();
}

std::string grid_json(const GridResult& r) {
  nlohmann::json j;
  j["scores"] = r.scores;
  j["best"] = r.best;
  j["weight_steps"] = r.weight_steps;
  return j.dump(2) + "\n";
}

}  // namespace sphynx::placement
