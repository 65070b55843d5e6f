#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "npgd/operators.hpp"
#include "npgd/proximal.hpp"
#include "npgd/tensor.hpp"
#include "npgd/unroll.hpp"

namespace npgd {

// The proximal net with every gate fixed: an affine map u -> L u + b.
class FrozenAffineMap {
 public:
  // Throws UnsupportedConfigError for nets with normalization and
  // ContractError when the snapshot does not fit the net.
  FrozenAffineMap(const ProximalNet& net, MaskSnapshot masks);

  ComplexImage operator()(const ComplexImage& u) const;
  // Linear part L w = frozen(w) - frozen(0).
  ComplexImage linear(const ComplexImage& w) const;
  const ComplexImage& offset() const { return offset_; }
  const MaskSnapshot& masks() const { return masks_; }

 private:
  const ProximalNet* net_;
  MaskSnapshot masks_;
  ComplexImage offset_;
};

ComplexImage frozen_apply(const FrozenAffineMap& map, const ComplexImage& u);

// ||L_* (I - alpha Phi^H Phi) delta|| / ||delta||.
double eta1(const FrozenAffineMap& star, const LinearOperator& op, float alpha, const ComplexImage& delta);

// ||frozen_t(u) - frozen_*(u)|| / ||delta|| with u = x* + (I - alpha Phi^H Phi) delta.
double eta2(const FrozenAffineMap& star, const FrozenAffineMap& at_t, const LinearOperator& op, float alpha,
            const ComplexImage& delta, const ComplexImage& x_star);

// xi = P(x*) - x*.
ComplexImage xi_vector(const ProximalNet& net, const ComplexImage& x_star);
double xi_norm(const ProximalNet& net, const ComplexImage& x_star);

struct DecompositionTerms {
  ComplexImage x_next;       // P(g(x_t; y)) by the recursion
  ComplexImage contraction;  // L_* A delta
  ComplexImage perturbation; // (L_t - L_*) A delta
  ComplexImage mask_shift;   // frozen_t(x*) - frozen_*(x*)
  ComplexImage xi;
  double residual = 0.0;     // ||(x_next - x*) - sum of the four terms||
};

// Splits one step of the recursion around x*. Requires y = Phi x*
// (ContractError otherwise) and normalization none.
DecompositionTerms decomposition_check(const ProximalNet& net, const LinearOperator& op, float alpha,
                                       const ComplexImage& x_t, const ComplexImage& x_star, const ComplexImage& y);

// (eta1 + eta2) ||delta|| + eps - ||x_{t+1} - x*||.
double bound_check(double eta1, double eta2, double delta_norm, double xi_norm, double next_error);

struct DebiasResult {
  ComplexImage image;
  int iterations = 0;
  bool converged = false;
  // Set when the affine iteration blew up; image is then x_T.
  bool non_contractive = false;
};

// Fixed-point iteration x <- frozen_T(g(x; y)) started at x_T.
DebiasResult debias(const FrozenAffineMap& at_T, const LinearOperator& op, float alpha, const ComplexImage& y,
                    const ComplexImage& x_T, int max_iters = 500, double tol = 1e-6);

struct ContractionRecord {
  int t = 0;
  double nrmse = 0.0;
  double eta1 = 0.0;
  double eta2 = 0.0;
  double xi_norm = 0.0;
  double decomp_residual = 0.0;
  double bound_slack = 0.0;
};

// Record t describes the step from x_{t-1} to x_t, t = 1..T; nrmse is that
// of x_t. Steps with x_{t-1} == x* (including t = 1 when x* = 0) carry
// zero ratios.
using ContractionTrace = std::vector<ContractionRecord>;

struct SampleAnalysis {
  ContractionTrace trace;
  DebiasResult debiased;
  double residual_final = 0.0;    // ||y - Phi x_T||
  double residual_debiased = 0.0; // ||y - Phi x_debiased||
};

SampleAnalysis analyze_sample(const ProximalNet& net, const LinearOperator& op, float alpha, int iterations,
                              const ComplexImage& x_star);

struct AggregateRecord {
  int t = 0;
  double nrmse_mean = 0, nrmse_std = 0;
  double eta1_mean = 0, eta1_std = 0;
  double eta2_mean = 0, eta2_std = 0;
};

std::vector<AggregateRecord> aggregate(const std::vector<ContractionTrace>& traces);

struct AnalysisResult {
  std::vector<SampleAnalysis> samples;
  std::vector<AggregateRecord> aggregate;
};

// Runs the unrolled model of `ckpt` on noiseless measurements of each test
// image and analyzes every step.
AnalysisResult analyze_trajectory(const Checkpoint& ckpt, const LinearOperator& op,
                                  const std::vector<ComplexImage>& test_set);

void write_trace_csv(std::ostream& os, const ContractionTrace& trace);
void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRecord>& agg);

}  // namespace npgd
