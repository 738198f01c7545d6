#include "sphynx/stats.hpp"

#include <cmath>
#include <stdexcept>

namespace sphynx::stats {

namespace {

// Series expansion of P(a,x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a,x) = 1 - P(a,x), valid for x >= a + 1.
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi_square_stat(const std::vector<uint64_t>& counts, const std::vector<double>& probs) {
  if (counts.size() != probs.size() || counts.empty())
    throw std::invalid_argument("chi_square_stat: size mismatch");
  uint64_t total = 0;
  for (uint64_t c : counts) total += c;
  if (total == 0) throw std::invalid_argument("chi_square_stat: no observations");
  double stat = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    double expect = probs[i] * static_cast<double>(total);
    if (expect <= 0.0) throw std::invalid_argument("chi_square_stat: zero expected bucket");
    double diff = static_cast<double>(counts[i]) - expect;
    stat += diff * diff / expect;
  }
  return stat;
}

double chi_square_pvalue(double stat, int dof) {
  if (dof <= 0) throw std::invalid_argument("chi_square_pvalue: dof must be positive");
  if (stat <= 0.0) return 1.0;
  return 1.0 - gamma_p(0.5 * dof, 0.5 * stat);
}

ChiSquareResult chi_square_test(const std::vector<uint64_t>& counts,
                                const std::vector<double>& probs, double alpha) {
  ChiSquareResult r;
  r.stat = chi_square_stat(counts, probs);
  r.dof = static_cast<int>(counts.size()) - 1;
  r.pvalue = chi_square_pvalue(r.stat, r.dof);
  r.pass = r.pvalue >= alpha;
  return r;
}

ChiSquareResult uniformity_test(const std::vector<uint64_t>& counts, double alpha) {
  std::vector<double> probs(counts.size(), 1.0 / static_cast<double>(counts.size()));
  return chi_square_test(counts, probs, alpha);
}

}  // namespace sphynx::stats
