#pragma once

#include <vector>

#include "sphynx/autograd.hpp"
#include "sphynx/rng.hpp"

namespace sphynx::gumbel {

// Temperature anneals linearly from tau_start to tau_end over total_steps.
struct GumbelConfig {
  double tau_start = 1000.0;
  double tau_end = 0.1;
  int total_steps = 1;
};

double tau_at(const GumbelConfig& cfg, int step);

// Categorical draw: argmax_i (G_i + log softmax(beta)_i) with fresh
// standard-Gumbel noise. Returns the sampled index.
int sample(const std::vector<double>& beta, Rng& rng);

// Straight-through sample: the hard one-hot shares its Gumbel noise with the
// relaxed softmax((log softmax(beta) + G) / tau), so the forward value is
// discrete while gradients flow through the relaxed weights.
struct StSample {
  int index = 0;
  std::vector<double> hard;     // one-hot at index
  std::vector<double> relaxed;  // tempered softmax, same noise
  std::vector<double> noise;    // the shared Gumbel draws
};
StSample softmax_st(const std::vector<double>& beta, double tau, Rng& rng);

// d relaxed[j] / d beta[m] = (relaxed[j] / tau) * (delta_jm - relaxed[m]);
// the log-softmax shift cancels, so only the relaxed weights enter.
std::vector<double> st_grad(const StSample& s, double tau, int j);

// Tape op for the search loop: returns a scalar with forward value
// hard[index] == 1 whose pull-back routes the upstream gradient into beta
// through the relaxed weight of the sampled branch. *picked reports the
// sampled index.
ad::Var st_branch_scale(ad::Tape& t, ad::Var beta, double tau, Rng& rng, int* picked);

// Final selection: argmax of log softmax(beta), ties to the lowest index.
int pick_final(const std::vector<double>& beta);

}  // namespace sphynx::gumbel
