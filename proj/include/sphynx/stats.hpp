#pragma once

#include <cstdint>
#include <vector>

namespace sphynx::stats {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Pearson chi-square statistic for observed counts against expected
// probabilities (probs must sum to 1; counts and probs same length).
double chi_square_stat(const std::vector<uint64_t>& counts, const std::vector<double>& probs);

// Upper-tail p-value of a chi-square statistic with `dof` degrees of freedom.
double chi_square_pvalue(double stat, int dof);

struct ChiSquareResult {
  double stat = 0.0;
  int dof = 0;
  double pvalue = 1.0;
  bool pass = false;  // pvalue >= alpha
};

// Goodness-of-fit test of counts against probs at significance alpha.
ChiSquareResult chi_square_test(const std::vector<uint64_t>& counts,
                                const std::vector<double>& probs, double alpha);

// Uniformity special case: probs = 1/counts.size().
ChiSquareResult uniformity_test(const std::vector<uint64_t>& counts, double alpha);

}  // namespace sphynx::stats
