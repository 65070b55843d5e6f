#include "npgd/contraction.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "npgd/error.hpp"
#include "npgd/metrics.hpp"

namespace npgd {

namespace {

void require_affine(const ProximalNet& net) {
  if (net.config().normalization != Normalization::none) {
    throw UnsupportedConfigError("contraction analysis requires normalization=none (got " +
                                 to_string(net.config().normalization) + ")");
  }
}

double ratio(double num, const ComplexImage& delta, const char* what) {
  const double d = norm(delta);
  if (d == 0.0) throw UndefinedRatioError(std::string(what) + ": perturbation delta is zero");
  return num / d;
}

}  // namespace

FrozenAffineMap::FrozenAffineMap(const ProximalNet& net, MaskSnapshot masks) : net_(&net), masks_(std::move(masks)) {
  require_affine(net);
  if (masks_.layers() != net.gated_layers() || masks_.layer_ids.size() != masks_.layers()) {
    throw ContractError("frozen map: snapshot has " + std::to_string(masks_.layers()) + " masks, net has " +
                        std::to_string(net.gated_layers()) + " gated layers");
  }
  if (masks_.activation != net.config().activation) {
    throw ContractError("frozen map: snapshot activation " + to_string(masks_.activation) + " does not match net " +
                        to_string(net.config().activation));
  }
  const std::size_t h = masks_.masks.front().dim(1), w = masks_.masks.front().dim(2);
  offset_ = net.frozen_forward(ComplexImage(h, w), masks_);
}

ComplexImage FrozenAffineMap::operator()(const ComplexImage& u) const { return net_->frozen_forward(u, masks_); }

ComplexImage FrozenAffineMap::linear(const ComplexImage& w) const { return (*this)(w) - offset_; }

ComplexImage frozen_apply(const FrozenAffineMap& map, const ComplexImage& u) { return map(u); }

double eta1(const FrozenAffineMap& star, const LinearOperator& op, float alpha, const ComplexImage& delta) {
  if (norm(delta) == 0.0) throw UndefinedRatioError("eta1: perturbation delta is zero");
  return ratio(norm(star.linear(data_consistency_map(delta, alpha, op))), delta, "eta1");
}

double eta2(const FrozenAffineMap& star, const FrozenAffineMap& at_t, const LinearOperator& op, float alpha,
            const ComplexImage& delta, const ComplexImage& x_star) {
  if (norm(delta) == 0.0) throw UndefinedRatioError("eta2: perturbation delta is zero");
  const ComplexImage u = x_star + data_consistency_map(delta, alpha, op);
  return ratio(norm(at_t(u) - star(u)), delta, "eta2");
}

ComplexImage xi_vector(const ProximalNet& net, const ComplexImage& x_star) { return net.forward(x_star) - x_star; }

double xi_norm(const ProximalNet& net, const ComplexImage& x_star) { return norm(xi_vector(net, x_star)); }

DecompositionTerms decomposition_check(const ProximalNet& net, const LinearOperator& op, float alpha,
                                       const ComplexImage& x_t, const ComplexImage& x_star, const ComplexImage& y) {
  require_affine(net);
  const double ny = norm(y);
  if (norm(y - op.apply(x_star)) > 1e-5 * ny + 1e-12) {
    throw ContractError("decomposition: measurements are not noiseless (y != Phi x*)");
  }
  const ComplexImage s = gradient_step(x_t, y, alpha, op);
  const FrozenAffineMap star(net, net.capture_masks(x_star));
  const FrozenAffineMap at_t(net, net.capture_masks(s));

  DecompositionTerms d;
  d.x_next = net.forward(s);
  const ComplexImage a_delta = data_consistency_map(x_t - x_star, alpha, op);
  d.contraction = star.linear(a_delta);
  d.perturbation = at_t.linear(a_delta) - d.contraction;
  d.mask_shift = at_t(x_star) - star(x_star);
  d.xi = xi_vector(net, x_star);
  const ComplexImage rhs = d.contraction + d.perturbation + d.mask_shift + d.xi;
  d.residual = norm((d.x_next - x_star) - rhs);
  return d;
}

double bound_check(double eta1, double eta2, double delta_norm, double xi_norm, double next_error) {
  return (eta1 + eta2) * delta_norm + xi_norm - next_error;
}

DebiasResult debias(const FrozenAffineMap& at_T, const LinearOperator& op, float alpha, const ComplexImage& y,
                    const ComplexImage& x_T, int max_iters, double tol) {
  if (max_iters < 1) throw ParameterError("debias: max_iters must be >= 1");
  const double limit = 100.0 * std::max(norm(x_T), 1e-12);
  DebiasResult r;
  ComplexImage x = x_T;
  for (int k = 1; k <= max_iters; ++k) {
    ComplexImage next = at_T(gradient_step(x, y, alpha, op));
    const double nx = norm(next);
    if (!std::isfinite(nx) || nx > limit) {
      r.image = x_T;
      r.iterations = k;
      r.non_contractive = true;
      return r;
    }
    const double step = norm(next - x);
    x = std::move(next);
    r.iterations = k;
    if (step <= tol * nx) {
      r.converged = true;
      break;
    }
  }
  r.image = std::move(x);
  return r;
}

SampleAnalysis analyze_sample(const ProximalNet& net, const LinearOperator& op, float alpha, int iterations,
                              const ComplexImage& x_star) {
  require_affine(net);
  const ComplexImage y = op.apply(x_star);
  const Trajectory traj = unrolled_forward(net, op, y, alpha, iterations);
  const FrozenAffineMap star(net, net.capture_masks(x_star));
  const double eps = xi_norm(net, x_star);
  const double ref = norm(x_star);

  SampleAnalysis out;
  ComplexImage x_prev(x_star.height(), x_star.width());
  for (int t = 1; t <= iterations; ++t) {
    const ComplexImage& x_t = traj.outputs[t - 1];
    const FrozenAffineMap at_t(net, net.capture_masks(traj.states[t - 1]));
    const ComplexImage delta = x_prev - x_star;
    const double dn = norm(delta);
    ContractionRecord rec;
    rec.t = t;
    rec.nrmse = ref > 0.0 ? norm(x_t - x_star) / ref : norm(x_t);
    rec.xi_norm = eps;
    if (dn > 0.0) {
      rec.eta1 = eta1(star, op, alpha, delta);
      rec.eta2 = eta2(star, at_t, op, alpha, delta, x_star);
    }
    rec.decomp_residual = decomposition_check(net, op, alpha, x_prev, x_star, y).residual;
    rec.bound_slack = bound_check(rec.eta1, rec.eta2, dn, eps, norm(x_t - x_star));
    out.trace.push_back(rec);
    x_prev = x_t;
  }

  const FrozenAffineMap at_T(net, net.capture_masks(traj.states.back()));
  out.debiased = debias(at_T, op, alpha, y, traj.final());
  out.residual_final = norm(y - op.apply(traj.final()));
  out.residual_debiased = norm(y - op.apply(out.debiased.image));
  return out;
}

std::vector<AggregateRecord> aggregate(const std::vector<ContractionTrace>& traces) {
  std::vector<AggregateRecord> agg;
  if (traces.empty()) return agg;
  const std::size_t steps = traces.front().size();
  for (const auto& tr : traces) {
    if (tr.size() != steps) throw ContractError("aggregate: traces differ in length");
  }
  auto stats = [&](std::size_t i, double ContractionRecord::*field) {
    double m = 0.0, s = 0.0;
    for (const auto& tr : traces) m += tr[i].*field;
    m /= double(traces.size());
    for (const auto& tr : traces) s += (tr[i].*field - m) * (tr[i].*field - m);
    return std::pair{m, std::sqrt(s / double(traces.size()))};
  };
  for (std::size_t i = 0; i < steps; ++i) {
    AggregateRecord a;
    a.t = traces.front()[i].t;
    std::tie(a.nrmse_mean, a.nrmse_std) = stats(i, &ContractionRecord::nrmse);
    std::tie(a.eta1_mean, a.eta1_std) = stats(i, &ContractionRecord::eta1);
    std::tie(a.eta2_mean, a.eta2_std) = stats(i, &ContractionRecord::eta2);
    agg.push_back(a);
  }
  return agg;
}

AnalysisResult analyze_trajectory(const Checkpoint& ckpt, const LinearOperator& op,
                                  const std::vector<ComplexImage>& test_set) {
  require_affine(ckpt.net);
  const UnrollConfig u = load_unroll(ckpt);
  AnalysisResult r;
  std::vector<ContractionTrace> traces;
  for (const auto& x : test_set) {
    r.samples.push_back(analyze_sample(ckpt.net, op, ckpt.alpha, u.iterations, x));
    traces.push_back(r.samples.back().trace);
  }
  r.aggregate = aggregate(traces);
  return r;
}

void write_trace_csv(std::ostream& os, const ContractionTrace& trace) {
  os << "t,nrmse,eta1,eta2,xi_norm,decomp_residual,bound_slack\n" << std::setprecision(10);
  for (const auto& r : trace) {
    os << r.t << ',' << r.nrmse << ',' << r.eta1 << ',' << r.eta2 << ',' << r.xi_norm << ',' << r.decomp_residual
       << ',' << r.bound_slack << '\n';
  }
}

void write_aggregate_csv(std::ostream& os, const std::vector<AggregateRecord>& agg) {
  os << "t,nrmse_mean,nrmse_std,eta1_mean,eta1_std,eta2_mean,eta2_std\n" << std::setprecision(10);
  for (const auto& a : agg) {
    os << a.t << ',' << a.nrmse_mean << ',' << a.nrmse_std << ',' << a.eta1_mean << ',' << a.eta1_std << ','
       << a.eta2_mean << ',' << a.eta2_std << '\n';
  }
}

}  // namespace npgd
