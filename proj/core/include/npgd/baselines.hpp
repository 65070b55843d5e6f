#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "npgd/operators.hpp"
#include "npgd/tensor.hpp"

namespace npgd {

// Separable orthonormal Haar pyramid applied to the real and imaginary planes
// independently. Coefficients use the usual in-place layout: after each
// level the approximation occupies the top-left quadrant.
ComplexImage haar2_forward(const ComplexImage& x, int levels);
ComplexImage haar2_inverse(const ComplexImage& c, int levels);

// sign(v) max(|v| - lambda, 0), elementwise.
Tensor soft_threshold(const Tensor& v, float lambda);
// Complex magnitude shrinkage (re, im) * max(1 - lambda / |v|, 0).
ComplexImage soft_threshold(const ComplexImage& v, float lambda);

// Sum of complex coefficient magnitudes.
double l1_norm(const ComplexImage& c);

enum class CsSolver { ista, fista };
std::string to_string(CsSolver s);
CsSolver parse_cs_solver(std::string_view s);

struct CsConfig {
  double lambda = 1e-3;
  int iterations = 300;
  CsSolver solver = CsSolver::fista;
  int levels = 3;

  void validate() const;
};

struct ObjectiveRecord {
  int iter = 0;
  double objective = 0.0;
  double data_term = 0.0;
  double l1_term = 0.0;
};

struct CsResult {
  ComplexImage image;
  // Entry 0 is the starting point x = 0, entry k the k-th iterate.
  std::vector<ObjectiveRecord> trace;
  float step = 1.0f;
};

// t_0 = 1, t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.
double fista_momentum(int k);

// Step size 1 when ||Phi||^2 <= 1 (power iteration), else 1 / ||Phi||^2.
float ista_step(const LinearOperator& op);

// Wavelet-sparse least squares 1/2 ||y - Phi x||^2 + lambda ||W x||_1.
// Throw SolverError if the objective grows 10x over its starting value.
CsResult ista(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg);
CsResult fista(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg);
CsResult solve_cs(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg);

void write_objective_csv(std::ostream& os, const std::vector<ObjectiveRecord>& trace);

struct CsProblem {
  ComplexImage truth;
  ComplexImage measurement;
  const LinearOperator* op = nullptr;
};

struct LambdaScore {
  double lambda = 0.0;
  double mean_snr_db = 0.0;
};

struct LambdaTuning {
  double best_lambda = 0.0;
  std::vector<LambdaScore> table;
};

// `points` log-spaced values in [1e-4, 1e-1] times `peak`.
std::vector<double> default_lambda_grid(double peak, int points = 8);
// Largest complex wavelet coefficient magnitude of Phi^H y over the problems.
double peak_coefficient(const std::vector<CsProblem>& problems, int levels);

// Exhaustive grid search for the best mean SNR; ties go to the smaller
// lambda. Duplicate grid entries are evaluated once.
LambdaTuning tune_lambda(const std::vector<CsProblem>& validation, std::vector<double> grid, const CsConfig& base);

}  // namespace npgd
