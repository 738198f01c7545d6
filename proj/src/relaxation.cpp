#include "sphynx/relaxation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sphynx/error.hpp"

namespace sphynx::relaxation {

int edge_count(int n) {
  if (n < 4) throw Error("relaxation", "cell needs at least one intermediate node");
  int count = 0;
  for (int dst = 2; dst <= n - 2; ++dst) count += dst;
  return count;
}

int edge_index(int n, int src, int dst) {
  if (dst < 2 || dst > n - 2 || src < 0 || src >= dst)
    throw Error("relaxation", "edge out of range");
  int base = 0;
  for (int d = 2; d < dst; ++d) base += d;
  return base + src;
}

std::pair<int, int> edge_at(int n, int index) {
  for (int dst = 2; dst <= n - 2; ++dst) {
    if (index < dst) return {index, dst};
    index -= dst;
  }
  throw Error("relaxation", "edge index out of range");
}

RelaxationState make_state(int n, const std::vector<cellgraph::OpKind>& ops) {
  if (ops.empty()) throw Error("relaxation", "empty op set");
  RelaxationState st;
  st.n = n;
  st.op_set = ops;
  const int e = edge_count(n);
  const int k = static_cast<int>(ops.size());
  st.theta_normal.assign(e, Array({k}));
  st.theta_reduce.assign(e, Array({k}));
  return st;
}

RelaxationState random_state(int n, const std::vector<cellgraph::OpKind>& ops, Rng& rng,
                             double sigma) {
  RelaxationState st = make_state(n, ops);
  for (auto* cell : {&st.theta_normal, &st.theta_reduce})
    for (Array& row : *cell)
      for (double& v : row.data) v = sigma * rng.normal();
  return st;
}

Array mixed_op(const Array& theta_edge, const std::vector<Array>& op_outputs) {
  if (theta_edge.size() != op_outputs.size())
    throw Error("relaxation", "theta/op arity mismatch");
  std::vector<double> w(theta_edge.data.begin(), theta_edge.data.end());
  ad::softmax_inplace(w);
  Array out(op_outputs[0].shape);
  for (size_t o = 0; o < op_outputs.size(); ++o) {
    if (!op_outputs[o].same_shape(out))
      throw Error("relaxation", "op output shape mismatch");
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += w[o] * op_outputs[o].data[i];
  }
  return out;
}

ad::Var mixed_op(ad::Tape& t, ad::Var theta_edge, const std::vector<ad::Var>& op_outputs) {
  if (t.value(theta_edge).size() != op_outputs.size())
    throw Error("relaxation", "theta/op arity mismatch");
  ad::Var w = t.softmax(theta_edge);
  ad::Var acc;
  for (size_t o = 0; o < op_outputs.size(); ++o) {
    // pick w[o] as a scalar view: build via mul of one-hot mask and sum
    Array mask({static_cast<int>(op_outputs.size())});
    mask.data[o] = 1.0;
    ad::Var wo = t.sum(t.mul(w, t.leaf(mask, false)));
    ad::Var term = t.scale(op_outputs[o], wo);
    acc = (o == 0) ? term : t.add(acc, term);
  }
  return acc;
}

namespace {

struct EdgeChoice {
  int src = 0;
  double weight = -1.0;
  cellgraph::OpKind op = cellgraph::OpKind::identity;
};

// Zero-excluded renormalized weight of the strongest op on one edge, plus
// that op. Lowest op index wins exact ties.
EdgeChoice score_edge(const Array& theta, const std::vector<cellgraph::OpKind>& ops, int src) {
  EdgeChoice c;
  c.src = src;
  double mx = -1e300;
  for (size_t o = 0; o < ops.size(); ++o)
    if (ops[o] != cellgraph::OpKind::zero) mx = std::max(mx, theta.data[o]);
  double denom = 0.0;
  for (size_t o = 0; o < ops.size(); ++o)
    if (ops[o] != cellgraph::OpKind::zero) denom += std::exp(theta.data[o] - mx);
  if (denom == 0.0) throw Error("relaxation", "op set has no non-zero candidate");
  double best = -1.0;
  for (size_t o = 0; o < ops.size(); ++o) {
    if (ops[o] == cellgraph::OpKind::zero) continue;
    const double w = std::exp(theta.data[o] - mx) / denom;
    if (w > best) {
      best = w;
      c.op = ops[o];
    }
  }
  c.weight = best;
  return c;
}

void discretize_cell(const std::vector<Array>& theta, int n,
                     const std::vector<cellgraph::OpKind>& ops,
                     cellgraph::CellSpec& cell) {
  cell.n = n;
  for (int dst = 2; dst <= n - 2; ++dst) {
    std::vector<EdgeChoice> choices;
    for (int src = 0; src < dst; ++src)
      choices.push_back(score_edge(theta[edge_index(n, src, dst)], ops, src));
    std::stable_sort(choices.begin(), choices.end(),
                     [](const EdgeChoice& a, const EdgeChoice& b) {
                       if (a.weight != b.weight) return a.weight > b.weight;
                       return a.src < b.src;
                     });
    std::vector<EdgeChoice> kept(choices.begin(), choices.begin() + 2);
    std::sort(kept.begin(), kept.end(),
              [](const EdgeChoice& a, const EdgeChoice& b) { return a.src < b.src; });
    for (const EdgeChoice& c : kept) cell.edges.push_back({c.op, c.src, dst});
  }
}

}  // namespace

cellgraph::Genotype discretize(const RelaxationState& st) {
  if (st.n < 4) throw Error("relaxation", "cell needs at least one intermediate node");
  if (static_cast<int>(st.theta_normal.size()) != edge_count(st.n) ||
      static_cast<int>(st.theta_reduce.size()) != edge_count(st.n))
    throw Error("relaxation", "theta row count does not match n");
  cellgraph::Genotype g;
  discretize_cell(st.theta_normal, st.n, st.op_set, g.normal);
  discretize_cell(st.theta_reduce, st.n, st.op_set, g.reduce);
  const auto& sphynx_set = cellgraph::sphynx_ops();
  bool all_sphynx = true;
  for (const auto& cell : {g.normal, g.reduce})
    for (const auto& e : cell.edges)
      all_sphynx = all_sphynx && std::find(sphynx_set.begin(), sphynx_set.end(), e.op) !=
                                     sphynx_set.end();
  g.space = all_sphynx ? cellgraph::Space::sphynx : cellgraph::Space::legacy;
  return g;
}

BilevelResult bilevel_step(RelaxationState& st, MixedProblem& problem,
                           optim::Sgd& w_opt, optim::Adam& theta_opt) {
  BilevelResult res;

  // Weight step on the training loss, theta frozen.
  {
    ad::Tape t;
    std::vector<ad::Var> theta;
    for (const Array& row : st.theta_normal) theta.push_back(t.leaf(row, false));
    for (const Array& row : st.theta_reduce) theta.push_back(t.leaf(row, false));
    std::vector<ad::Var> weight_vars;
    ad::Var loss = problem.train_loss(t, theta, weight_vars);
    res.train_loss = t.value(loss).data[0];
    if (!std::isfinite(res.train_loss))
      throw Error("non-finite-loss", "training loss is not finite");
    t.backward(loss);
    std::vector<Array*> params = problem.weights();
    std::vector<const Array*> grads;
    for (ad::Var v : weight_vars) grads.push_back(&t.grad(v));
    w_opt.step(params, grads);
  }

  // Theta step on the validation loss, weights frozen.
  {
    ad::Tape t;
    std::vector<ad::Var> theta;
    std::vector<Array*> rows;
    for (Array& row : st.theta_normal) {
      theta.push_back(t.leaf(row, true));
      rows.push_back(&row);
    }
    for (Array& row : st.theta_reduce) {
      theta.push_back(t.leaf(row, true));
      rows.push_back(&row);
    }
    std::vector<ad::Var> weight_vars;
    ad::Var loss = problem.val_loss(t, theta, weight_vars);
    res.val_loss = t.value(loss).data[0];
    if (!std::isfinite(res.val_loss))
      throw Error("non-finite-loss", "validation loss is not finite");
    t.backward(loss);
    std::vector<Array*> params;
    std::vector<const Array*> grads;
    std::vector<Array> zero_store;  // rows the loss never touched get zero grads
    zero_store.reserve(theta.size());
    for (size_t i = 0; i < theta.size(); ++i) {
      params.push_back(rows[i]);
      if (t.has_grad(theta[i])) {
        grads.push_back(&t.grad(theta[i]));
      } else {
        zero_store.emplace_back(rows[i]->shape);
        grads.push_back(&zero_store.back());
      }
    }
    theta_opt.step(params, grads);
  }
  return res;
}

namespace {

nlohmann::json theta_json(const std::vector<Array>& theta, int n) {
  nlohmann::json obj = nlohmann::json::object();
  for (size_t i = 0; i < theta.size(); ++i) {
    auto [src, dst] = edge_at(n, static_cast<int>(i));
    std::ostringstream key;
    key << src << "->" << dst;
    obj[key.str()] = theta[i].data;
  }
  return obj;
}

std::vector<Array> theta_from_json(const nlohmann::json& obj, int n, size_t k,
                                   const char* which) {
  if (!obj.is_object())
    throw Error("parse", std::string(which) + " theta must be an object");
  const int e = edge_count(n);
  std::vector<Array> theta(e, Array({static_cast<int>(k)}));
  std::vector<bool> seen(e, false);
  for (const auto& [key, val] : obj.items()) {
    int src = -1, dst = -1;
    char arrow1, arrow2;
    std::istringstream is(key);
    if (!(is >> src >> arrow1 >> arrow2 >> dst) || arrow1 != '-' || arrow2 != '>')
      throw Error("parse", "theta key must look like \"src->dst\"", key);
    const int idx = edge_index(n, src, dst);
    if (!val.is_array() || val.size() != k)
      throw Error("parse", "theta row arity does not match op set", key);
    for (size_t o = 0; o < k; ++o) theta[idx].data[o] = val[o].get<double>();
    seen[idx] = true;
  }
  for (int i = 0; i < e; ++i)
    if (!seen[i]) {
      auto [src, dst] = edge_at(n, i);
      std::ostringstream ctx;
      ctx << which << " edge " << src << "->" << dst;
      throw Error("parse", "theta row missing", ctx.str());
    }
  return theta;
}

}  // namespace

std::string serialize(const RelaxationState& st) {
  nlohmann::json j;
  j["n"] = st.n;
  j["ops"] = nlohmann::json::array();
  for (auto op : st.op_set) j["ops"].push_back(cellgraph::op_name(op));
  j["normal"] = theta_json(st.theta_normal, st.n);
  j["reduce"] = theta_json(st.theta_reduce, st.n);
  return j.dump(2) + "\n";
}

RelaxationState parse(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("parse", "relaxation state is not valid JSON", e.what());
  }
  if (!j.is_object() || !j.contains("n") || !j.contains("ops") ||
      !j.contains("normal") || !j.contains("reduce"))
    throw Error("parse", "relaxation state needs keys n, ops, normal, reduce");
  RelaxationState st;
  st.n = j["n"].get<int>();
  if (!j["ops"].is_array() || j["ops"].empty())
    throw Error("parse", "ops must be a non-empty array");
  for (const auto& name : j["ops"]) {
    auto op = cellgraph::op_from_name(name.get<std::string>());
    if (!op) throw Error("parse", "unknown op name", name.get<std::string>());
    st.op_set.push_back(*op);
  }
  st.theta_normal = theta_from_json(j["normal"], st.n, st.op_set.size(), "normal");
  st.theta_reduce = theta_from_json(j["reduce"], st.n, st.op_set.size(), "reduce");
  return st;
}

RelaxationState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open relaxation state", path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void save_state(const RelaxationState& st, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write relaxation state", path);
  out << serialize(st);
}

}  // namespace sphynx::relaxation
