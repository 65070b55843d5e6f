#include "npgd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>

#include "npgd/error.hpp"
#include "npgd/metrics.hpp"

namespace npgd {

namespace {

constexpr float kInvSqrt2 = float(1.0 / std::numbers::sqrt2);

void check_levels(const ComplexImage& x, int levels) {
  if (levels < 1) throw ParameterError("haar: levels must be >= 1");
  const std::size_t div = std::size_t{1} << levels;
  if (x.height() % div || x.width() % div) {
    throw DimensionError("haar: " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                         " is not divisible by 2^" + std::to_string(levels));
  }
}

// One analysis / synthesis step on a strided sequence of length n.
void haar_step(float* p, std::size_t n, std::size_t stride, std::vector<float>& tmp) {
  tmp.resize(n);
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const float a = p[2 * k * stride], b = p[(2 * k + 1) * stride];
    tmp[k] = (a + b) * kInvSqrt2;
    tmp[half + k] = (a - b) * kInvSqrt2;
  }
  for (std::size_t k = 0; k < n; ++k) p[k * stride] = tmp[k];
}

void haar_unstep(float* p, std::size_t n, std::size_t stride, std::vector<float>& tmp) {
  tmp.resize(n);
  const std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const float s = p[k * stride], d = p[(half + k) * stride];
    tmp[2 * k] = (s + d) * kInvSqrt2;
    tmp[2 * k + 1] = (s - d) * kInvSqrt2;
  }
  for (std::size_t k = 0; k < n; ++k) p[k * stride] = tmp[k];
}

}  // namespace

ComplexImage haar2_forward(const ComplexImage& x, int levels) {
  check_levels(x, levels);
  ComplexImage c = x;
  const std::size_t w = x.width();
  std::vector<float> tmp;
  for (std::size_t plane = 0; plane < 2; ++plane) {
    float* base = c.planes().raw() + plane * x.pixels();
    std::size_t rh = x.height(), rw = x.width();
    for (int l = 0; l < levels; ++l) {
      for (std::size_t i = 0; i < rh; ++i) haar_step(base + i * w, rw, 1, tmp);
      for (std::size_t j = 0; j < rw; ++j) haar_step(base + j, rh, w, tmp);
      rh /= 2;
      rw /= 2;
    }
  }
  return c;
}

ComplexImage haar2_inverse(const ComplexImage& c, int levels) {
  check_levels(c, levels);
  ComplexImage x = c;
  const std::size_t w = c.width();
  std::vector<float> tmp;
  for (std::size_t plane = 0; plane < 2; ++plane) {
    float* base = x.planes().raw() + plane * c.pixels();
    for (int l = levels - 1; l >= 0; --l) {
      const std::size_t rh = c.height() >> l, rw = c.width() >> l;
      for (std::size_t j = 0; j < rw; ++j) haar_unstep(base + j, rh, w, tmp);
      for (std::size_t i = 0; i < rh; ++i) haar_unstep(base + i * w, rw, 1, tmp);
    }
  }
  return x;
}

Tensor soft_threshold(const Tensor& v, float lambda) {
  if (lambda < 0.0f) throw ParameterError("soft_threshold: lambda must be >= 0");
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float m = std::abs(v[i]) - lambda;
    out[i] = m > 0.0f ? std::copysign(m, v[i]) : 0.0f;
  }
  return out;
}

ComplexImage soft_threshold(const ComplexImage& v, float lambda) {
  if (lambda < 0.0f) throw ParameterError("soft_threshold: lambda must be >= 0");
  ComplexImage out(v.height(), v.width());
  for (std::size_t i = 0; i < v.height(); ++i) {
    for (std::size_t j = 0; j < v.width(); ++j) {
      const double re = v.re(i, j), im = v.im(i, j);
      const double mag = std::hypot(re, im);
      const double k = mag > lambda ? 1.0 - lambda / mag : 0.0;
      out.re(i, j) = float(re * k);
      out.im(i, j) = float(im * k);
    }
  }
  return out;
}

double l1_norm(const ComplexImage& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.height(); ++i)
    for (std::size_t j = 0; j < c.width(); ++j) s += std::hypot(double(c.re(i, j)), double(c.im(i, j)));
  return s;
}

std::string to_string(CsSolver s) { return s == CsSolver::ista ? "ista" : "fista"; }

CsSolver parse_cs_solver(std::string_view s) {
  if (s == "ista") return CsSolver::ista;
  if (s == "fista") return CsSolver::fista;
  throw ConfigError("cs_solver: unknown value '" + std::string(s) + "' (ista|fista)");
}

void CsConfig::validate() const {
  if (!(lambda > 0.0)) throw ConfigError("cs_lambda: must be positive");
  if (iterations < 1) throw ConfigError("cs_iterations: must be >= 1");
  if (levels < 1) throw ConfigError("cs_levels: must be >= 1");
}

double fista_momentum(int k) {
  double t = 1.0;
  for (int i = 0; i < k; ++i) t = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
  return t;
}

float ista_step(const LinearOperator& op) {
  const double l = operator_norm_squared(op);
  return l <= 1.0 + 1e-6 ? 1.0f : float(1.0 / l);
}

namespace {

ObjectiveRecord objective(int iter, const ComplexImage& x, const ComplexImage& y, const LinearOperator& op,
                          double lambda, int levels) {
  ObjectiveRecord r;
  r.iter = iter;
  const double res = norm(y - op.apply(x));
  r.data_term = 0.5 * res * res;
  r.l1_term = lambda * l1_norm(haar2_forward(x, levels));
  r.objective = r.data_term + r.l1_term;
  return r;
}

ComplexImage prox_grad(const ComplexImage& z, const ComplexImage& y, const LinearOperator& op, float step,
                       const CsConfig& cfg) {
  const ComplexImage v = gradient_step(z, y, step, op);
  return haar2_inverse(soft_threshold(haar2_forward(v, cfg.levels), float(step * cfg.lambda)), cfg.levels);
}

CsResult run(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg, bool accelerated) {
  cfg.validate();
  const auto s = op.input_shape();
  CsResult out;
  out.step = ista_step(op);
  ComplexImage x(s.height, s.width);
  ComplexImage x_prev = x;
  out.trace.push_back(objective(0, x, y, op, cfg.lambda, cfg.levels));
  const double start = out.trace.front().objective;
  double t = 1.0;
  for (int k = 1; k <= cfg.iterations; ++k) {
    ComplexImage z = x;
    double t_next = t;
    if (accelerated) {
      t_next = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
      z = axpy(float((t - 1.0) / t_next), x - x_prev, x);
    }
    x_prev = x;
    x = prox_grad(z, y, op, out.step, cfg);
    t = t_next;
    out.trace.push_back(objective(k, x, y, op, cfg.lambda, cfg.levels));
    const double obj = out.trace.back().objective;
    if (!std::isfinite(obj) || (start > 0.0 && obj > 10.0 * start)) {
      throw SolverError(to_string(accelerated ? CsSolver::fista : CsSolver::ista) + " diverged at iteration " +
                        std::to_string(k));
    }
  }
  out.image = std::move(x);
  return out;
}

}  // namespace

CsResult ista(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg) {
  return run(y, op, cfg, false);
}

CsResult fista(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg) {
  return run(y, op, cfg, true);
}

CsResult solve_cs(const ComplexImage& y, const LinearOperator& op, const CsConfig& cfg) {
  return cfg.solver == CsSolver::ista ? ista(y, op, cfg) : fista(y, op, cfg);
}

void write_objective_csv(std::ostream& os, const std::vector<ObjectiveRecord>& trace) {
  os << "iter,objective,data_term,l1_term\n" << std::setprecision(12);
  for (const auto& r : trace) os << r.iter << ',' << r.objective << ',' << r.data_term << ',' << r.l1_term << '\n';
}

std::vector<double> default_lambda_grid(double peak, int points) {
  if (points < 1) throw ParameterError("lambda grid needs at least one point");
  std::vector<double> grid;
  for (int i = 0; i < points; ++i) {
    const double e = points == 1 ? -4.0 : -4.0 + 3.0 * double(i) / double(points - 1);
    grid.push_back(peak * std::pow(10.0, e));
  }
  return grid;
}

double peak_coefficient(const std::vector<CsProblem>& problems, int levels) {
  double peak = 0.0;
  for (const auto& p : problems) {
    const ComplexImage c = haar2_forward(p.op->adjoint(p.measurement), levels);
    for (std::size_t i = 0; i < c.height(); ++i)
      for (std::size_t j = 0; j < c.width(); ++j) peak = std::max(peak, std::hypot(double(c.re(i, j)), double(c.im(i, j))));
  }
  return peak;
}

LambdaTuning tune_lambda(const std::vector<CsProblem>& validation, std::vector<double> grid, const CsConfig& base) {
  if (grid.empty()) throw ParameterError("tune_lambda: empty lambda grid");
  if (validation.empty()) throw ParameterError("tune_lambda: empty validation set");
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  LambdaTuning out;
  double best = -std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    CsConfig cfg = base;
    cfg.lambda = lambda;
    double sum = 0.0;
    for (const auto& p : validation) sum += snr_db(solve_cs(p.measurement, *p.op, cfg).image, p.truth);
    const double mean = sum / double(validation.size());
    out.table.push_back({lambda, mean});
    // ascending grid + strict comparison keeps the smaller lambda on ties
    if (mean > best) {
      best = mean;
      out.best_lambda = lambda;
    }
  }
  return out;
}

}  // namespace npgd
