#include "sphynx/gumbel.hpp"

#include <cmath>
#include <stdexcept>

#include "sphynx/error.hpp"

namespace sphynx::gumbel {

double tau_at(const GumbelConfig& cfg, int step) {
  if (cfg.tau_start <= 0.0 || cfg.tau_end <= 0.0)
    throw Error("gumbel", "temperatures must be positive");
  if (cfg.total_steps <= 0) return cfg.tau_end;
  // Linear in step/total_steps, clamped: tau_end is reached at the last step.
  double f = static_cast<double>(step) / cfg.total_steps;
  if (f < 0.0) f = 0.0;
  if (f > 1.0) f = 1.0;
  return cfg.tau_start + (cfg.tau_end - cfg.tau_start) * f;
}

int sample(const std::vector<double>& beta, Rng& rng) {
  if (beta.empty()) throw Error("gumbel", "empty logits");
  const std::vector<double> probs = ad::softmax_copy(beta);
  int best = 0;
  double best_v = -1e300;
  for (size_t i = 0; i < beta.size(); ++i) {
    const double v = rng.gumbel() + std::log(probs[i]);
    if (v > best_v) {
      best_v = v;
      best = static_cast<int>(i);
    }
  }
  return best;
}

StSample softmax_st(const std::vector<double>& beta, double tau, Rng& rng) {
  if (beta.empty()) throw Error("gumbel", "empty logits");
  if (tau <= 0.0) throw Error("gumbel", "tau must be positive");
  const size_t k = beta.size();
  StSample s;
  s.noise.resize(k);
  for (size_t i = 0; i < k; ++i) s.noise[i] = rng.gumbel();

  const std::vector<double> probs = ad::softmax_copy(beta);
  std::vector<double> z(k);
  int best = 0;
  for (size_t i = 0; i < k; ++i) {
    z[i] = (std::log(probs[i]) + s.noise[i]) / tau;
    if (z[i] > z[best]) best = static_cast<int>(i);
  }
  s.index = best;
  s.relaxed = z;
  ad::softmax_inplace(s.relaxed);
  s.hard.assign(k, 0.0);
  s.hard[best] = 1.0;
  return s;
}

std::vector<double> st_grad(const StSample& s, double tau, int j) {
  const size_t k = s.relaxed.size();
  std::vector<double> g(k);
  for (size_t m = 0; m < k; ++m) {
    const double delta = (static_cast<int>(m) == j) ? 1.0 : 0.0;
    g[m] = s.relaxed[j] / tau * (delta - s.relaxed[m]);
  }
  return g;
}

ad::Var st_branch_scale(ad::Tape& t, ad::Var beta, double tau, Rng& rng, int* picked) {
  const Array& bv = t.value(beta);
  std::vector<double> logits(bv.data.begin(), bv.data.end());
  StSample s = softmax_st(logits, tau, rng);
  if (picked != nullptr) *picked = s.index;
  const int j = s.index;
  auto back = [beta, s, tau, j](ad::Tape& tape, int self) {
    if (!tape.requires_grad(beta.id)) return;
    const double g = tape.grad_mut(self).data[0];
    Array& gb = tape.grad_mut(beta.id);
    const std::vector<double> d = st_grad(s, tau, j);
    for (size_t m = 0; m < d.size(); ++m) gb.data[m] += g * d[m];
  };
  return t.raw(Array::scalar(s.hard[j]), t.requires_grad(beta.id), {beta.id}, back);
}

int pick_final(const std::vector<double>& beta) {
  if (beta.empty()) throw Error("gumbel", "empty logits");
  // log softmax is monotone in beta, so the argmax (first on ties) is enough.
  int best = 0;
  for (size_t i = 1; i < beta.size(); ++i)
    if (beta[i] > beta[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace sphynx::gumbel
