#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sphynx/array.hpp"
#include "sphynx/autograd.hpp"
#include "sphynx/cellgraph.hpp"
#include "sphynx/optim.hpp"
#include "sphynx/rng.hpp"

namespace sphynx::relaxation {

// Continuous architecture parameters: one logits row per candidate edge per
// cell. Edge order is canonical: dst ascending over intermediates, src
// ascending below each dst.
struct RelaxationState {
  int n = 7;
  std::vector<cellgraph::OpKind> op_set;  // search set, may include zero
  std::vector<Array> theta_normal;        // edge_count(n) rows of |op_set| logits
  std::vector<Array> theta_reduce;
};

int edge_count(int n);
int edge_index(int n, int src, int dst);
std::pair<int, int> edge_at(int n, int index);

RelaxationState make_state(int n, const std::vector<cellgraph::OpKind>& ops);
RelaxationState random_state(int n, const std::vector<cellgraph::OpKind>& ops, Rng& rng,
                             double sigma = 1.0);

// Weighted sum of candidate outputs under softmax(theta). Plain-array form
// and a tape form whose gradient flows into theta and the outputs.
Array mixed_op(const Array& theta_edge, const std::vector<Array>& op_outputs);
ad::Var mixed_op(ad::Tape& t, ad::Var theta_edge, const std::vector<ad::Var>& op_outputs);

// Project the relaxed state onto a discrete genotype: per intermediate node
// keep the two incoming edges with the largest zero-excluded renormalized op
// weight, labelling each with its best non-zero op. Ties fall to the lowest
// op index, then the lowest source node.
cellgraph::Genotype discretize(const RelaxationState& st);

// Toy bilevel problem: weights live inside the problem, theta rows are handed
// in as tape leaves. Losses draw their own minibatches.
class MixedProblem {
 public:
  virtual ~MixedProblem() = default;
  // Build the objective; append the problem's weight leaves to weight_vars in
  // the same order as weights().
  virtual ad::Var train_loss(ad::Tape& t, const std::vector<ad::Var>& theta,
                             std::vector<ad::Var>& weight_vars) = 0;
  virtual ad::Var val_loss(ad::Tape& t, const std::vector<ad::Var>& theta,
                           std::vector<ad::Var>& weight_vars) = 0;
  virtual std::vector<Array*> weights() = 0;
};

struct BilevelResult {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// One first-order alternating update: weights descend the training loss with
// theta frozen, then theta descends the validation loss with weights frozen.
// Both cells' rows update (the problem chooses which rows it reads).
BilevelResult bilevel_step(RelaxationState& st, MixedProblem& problem,
                           optim::Sgd& w_opt, optim::Adam& theta_opt);

// JSON round trip:
// {"n":7, "ops":[...], "normal":{"0->2":[logits],...}, "reduce":{...}}
std::string serialize(const RelaxationState& st);
RelaxationState parse(const std::string& json_text);
RelaxationState load_state(const std::string& path);
void save_state(const RelaxationState& st, const std::string& path);

}  // namespace sphynx::relaxation
