#include "fieldest/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>

namespace fieldest {

void SolverConfig::validate() const {
  if (!(tol > 0.0) || max_outer < 1 || max_inner < 1 || damping < 1 || !(ridge > 0.0)) {
    throw std::invalid_argument("SolverConfig: all settings must be positive");
  }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// exp() argument cap; keeps ratios like e_j / x finite when p_j has underflowed.
constexpr double kMaxExp = 700.0;

double max_abs(const ParamVector& v) { return v.cwiseAbs().maxCoeff(); }

// ---------------------------------------------------------------------------
// Damped Newton ascent shared by every estimator.

struct AscentProblem {
  std::function<std::optional<double>(const ParamVector&)> value;  // nullopt outside the admissible set
  std::function<LocalQuadratic(const ParamVector&)> local;
};

struct AscentLimits {
  double tol;
  int max_iterations;
  int halvings;
  double ridge;
};

struct AscentOutcome {
  ParamVector theta;
  int iterations = 0;
  bool converged = false;
  std::optional<std::string> failure;
  IterationTrace trace;
};

// Solves (-H) d = g. A ridge proportional to the mean |diagonal| is added only
// when the plain factorization fails and is escalated until -H + ridge is
// positive definite, which turns the step into a Levenberg-type ascent step.
std::optional<ParamVector> ascent_direction(const LocalQuadratic& lq, double ridge) {
  ParamMatrix a = -lq.hessian;
  a = 0.5 * (a + a.transpose()).eval();
  if (!a.allFinite() || !lq.gradient.allFinite()) return std::nullopt;
  Eigen::LLT<ParamMatrix> llt(a);
  if (llt.info() == Eigen::Success) return ParamVector(llt.solve(lq.gradient));
  double scale = a.diagonal().cwiseAbs().mean();
  if (!(scale > 0.0)) scale = 1.0;
  for (double eps = ridge; eps <= 1e4; eps *= 100.0) {
    llt.compute(a + eps * scale * ParamMatrix::Identity());
    if (llt.info() == Eigen::Success) return ParamVector(llt.solve(lq.gradient));
  }
  return std::nullopt;
}

AscentOutcome newton_ascent(const AscentProblem& problem, const ParamVector& init, const AscentLimits& lim) {
  AscentOutcome out;
  out.theta = init;
  const auto v0 = problem.value(init);
  if (!v0) throw std::invalid_argument("estimator: initial parameters outside the admissible set");
  double current = *v0;
  out.trace.theta.push_back(init);
  out.trace.loglik.push_back(current);

  for (int iter = 0; iter < lim.max_iterations; ++iter) {
    const LocalQuadratic lq = problem.local(out.theta);
    const auto dir = ascent_direction(lq, lim.ridge);
    if (!dir) {
      out.failure = "singular";
      return out;
    }

    if (max_abs(*dir) <= lim.tol) {
      const ParamVector cand = out.theta + *dir;
      const auto v = problem.value(cand);
      if (v && *v >= current) {
        out.theta = cand;
        current = *v;
      }
      ++out.iterations;
      out.trace.theta.push_back(out.theta);
      out.trace.loglik.push_back(current);
      out.converged = true;
      return out;
    }

    double t = 1.0;
    bool accepted = false;
    ParamVector cand;
    double cand_value = kNegInf;
    for (int h = 0; h <= lim.halvings; ++h, t *= 0.5) {
      cand = out.theta + t * *dir;
      const auto v = problem.value(cand);
      if (v && *v >= current) {
        accepted = true;
        cand_value = *v;
        break;
      }
      if (t * max_abs(*dir) <= lim.tol) break;
    }
    if (!accepted) {
      // No ascent along a direction already below the tolerance means we are
      // sitting on the maximum up to rounding.
      if (t * max_abs(*dir) <= lim.tol) {
        ++out.iterations;
        out.trace.theta.push_back(out.theta);
        out.trace.loglik.push_back(current);
        out.converged = true;
      } else {
        out.failure = "line_search";
      }
      return out;
    }

    const double step = max_abs(cand - out.theta);
    out.theta = cand;
    current = cand_value;
    ++out.iterations;
    out.trace.theta.push_back(out.theta);
    out.trace.loglik.push_back(current);
    if (step <= lim.tol) {
      out.converged = true;
      return out;
    }
  }
  out.failure = "max_iterations";
  return out;
}

EstimateResult to_result(AscentOutcome&& a) {
  EstimateResult r;
  r.theta_hat = a.theta;
  r.trace = std::move(a.trace);
  r.converged = a.converged;
  r.iterations = a.iterations;
  r.divergence_reason = std::move(a.failure);
  return r;
}

void require_rows(const ReceivedMatrix& z, const SensorNetwork& net, ChannelKind kind, Eigen::Index cols) {
  if (z.kind != kind) throw std::invalid_argument("estimator: received matrix has the wrong channel kind");
  if (z.sensors() != net.size() || z.eta2.size() != net.size() || z.z.cols() != cols) {
    throw std::invalid_argument("estimator: received matrix dimensions do not match the network");
  }
  if (!net.calibrated()) throw std::invalid_argument("estimator: network noise variance not calibrated");
}

// Per-sensor log channel kernels -|z_k - b_j|^2 / (2 eta2).
void log_kernels(const Eigen::MatrixXd& z, Eigen::Index k, const BitMapper& bm, double eta2, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(bm.levels()));
  for (int j = 0; j < bm.levels(); ++j) {
    out[static_cast<std::size_t>(j)] = -(z.row(k).transpose() - bm.code(j)).squaredNorm() / (2.0 * eta2);
  }
}

double log_sum_exp(const std::vector<double>& t) {
  const double mx = *std::max_element(t.begin(), t.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double v : t) s += std::exp(v - mx);
  return mx + std::log(s);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

}  // namespace

// ---------------------------------------------------------------------------
// Amplify-and-forward

double loglik_analog(const ReceivedMatrix& z, const SensorNetwork& net, const FieldModel& model,
                     const ParamVector& theta) {
  require_rows(z, net, ChannelKind::kAnalog, 1);
  double acc = 0.0;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const double v = net.sigma2()[k] + z.eta2[k];
    if (!(v > 0.0)) throw std::invalid_argument("loglik_analog: total noise variance must be positive");
    const Point& p = net.positions()[k];
    const double res = z.z(static_cast<Eigen::Index>(k), 0) - model.value(theta, p.x, p.y);
    acc += res * res / v;
  }
  return -0.5 * acc;
}

LocalQuadratic loglik_analog_derivatives(const ReceivedMatrix& z, const SensorNetwork& net, const FieldModel& model,
                                         const ParamVector& theta) {
  require_rows(z, net, ChannelKind::kAnalog, 1);
  LocalQuadratic lq;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const double v = net.sigma2()[k] + z.eta2[k];
    if (!(v > 0.0)) throw std::invalid_argument("loglik_analog: total noise variance must be positive");
    const Point& p = net.positions()[k];
    const FieldSample s = model.sample(theta, p.x, p.y);
    const double res = z.z(static_cast<Eigen::Index>(k), 0) - s.value;
    lq.value -= 0.5 * res * res / v;
    lq.gradient += (res / v) * s.gradient;
    lq.hessian += (res / v) * s.hessian - (s.gradient * s.gradient.transpose()) / v;
  }
  return lq;
}

EstimateResult newton_ml_analog(const ReceivedMatrix& z, const SensorNetwork& net, const FieldModel& model,
                                const ParamVector& init, const SolverConfig& cfg) {
  cfg.validate();
  require_rows(z, net, ChannelKind::kAnalog, 1);
  AscentProblem problem{
      [&](const ParamVector& t) -> std::optional<double> {
        if (!model.admissible(t)) return std::nullopt;
        const double v = loglik_analog(z, net, model, t);
        return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
      },
      [&](const ParamVector& t) { return loglik_analog_derivatives(z, net, model, t); }};
  return to_result(newton_ascent(problem, init, {cfg.tol, cfg.max_outer, cfg.damping, cfg.ridge}));
}

// ---------------------------------------------------------------------------
// Quantize-and-forward

double loglik_quantized(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q, const BitMapper& bm,
                        const FieldModel& model, const ParamVector& theta) {
  require_rows(z, net, ChannelKind::kQuantized, bm.alpha());
  if (q.levels() != bm.levels()) throw std::invalid_argument("loglik_quantized: quantizer / bit mapper mismatch");
  std::vector<double> ld, t(static_cast<std::size_t>(q.levels()));
  double acc = 0.0;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& pos = net.positions()[k];
    const auto p = level_probabilities(q, model.value(theta, pos.x, pos.y), std::sqrt(net.sigma2()[k]));
    log_kernels(z.z, static_cast<Eigen::Index>(k), bm, z.eta2[k], ld);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = safe_log(p[j]) + ld[j];
    const double lk = log_sum_exp(t);
    if (!std::isfinite(lk)) throw std::domain_error("loglik_quantized: mixture likelihood vanished");
    acc += lk;
  }
  return acc;
}

LocalQuadratic loglik_quantized_derivatives(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q,
                                            const BitMapper& bm, const FieldModel& model, const ParamVector& theta) {
  require_rows(z, net, ChannelKind::kQuantized, bm.alpha());
  std::vector<double> ld, t(static_cast<std::size_t>(q.levels()));
  LocalQuadratic lq;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& pos = net.positions()[k];
    const FieldSample s = model.sample(theta, pos.x, pos.y);
    const auto d = level_probability_derivatives(q, s.value, std::sqrt(net.sigma2()[k]));
    log_kernels(z.z, static_cast<Eigen::Index>(k), bm, z.eta2[k], ld);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = safe_log(d.p[j]) + ld[j];
    const double log_x = log_sum_exp(t);
    if (!std::isfinite(log_x)) throw std::domain_error("loglik_quantized: mixture likelihood vanished");
    // x1 = (dx/dG)/x and x2 = (d2x/dG2)/x with x = sum_j p_j e_j.
    double x1 = 0.0, x2 = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
      if (d.dp[j] == 0.0 && d.d2p[j] == 0.0) continue;
      const double r = std::exp(std::min(ld[j] - log_x, kMaxExp));
      x1 += d.dp[j] * r;
      x2 += d.d2p[j] * r;
    }
    lq.value += log_x;
    lq.gradient += x1 * s.gradient;
    lq.hessian += (x2 - x1 * x1) * (s.gradient * s.gradient.transpose()) + x1 * s.hessian;
  }
  return lq;
}

EmQuantities em_quantities(std::span<const double> z_k, const Quantizer& q, const BitMapper& bm, double g_m,
                           double sigma, double eta2) {
  if (!(sigma > 0.0) || !(eta2 > 0.0)) throw std::invalid_argument("em_quantities: sigma and eta2 must be positive");
  if (static_cast<int>(z_k.size()) != bm.alpha() || q.levels() != bm.levels()) {
    throw std::invalid_argument("em_quantities: dimension mismatch");
  }
  const int m = q.levels();
  std::vector<double> ld(static_cast<std::size_t>(m)), t(static_cast<std::size_t>(m)), dt(static_cast<std::size_t>(m));
  const Eigen::Map<const Eigen::VectorXd> z(z_k.data(), static_cast<Eigen::Index>(z_k.size()));
  for (int j = 0; j < m; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    ld[sj] = -(z - bm.code(j)).squaredNorm() / (2.0 * eta2);
    dt[sj] = gaussian_interval_mass((q.lower(j) - g_m) / sigma, (q.upper(j) - g_m) / sigma);
    t[sj] = safe_log(dt[sj]) + ld[sj];
  }
  // The posterior weight of cell j is e_j / f_Z with f_Z = sum_v p_v e_v; the
  // (2 pi eta2)^(alpha/2) normalizations cancel.
  const double log_f = log_sum_exp(t);
  const double scale = sigma / std::sqrt(2.0 * std::numbers::pi);
  EmQuantities out;
  for (int j = 0; j < m; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    auto gauss = [&](double tau) {
      if (!std::isfinite(tau)) return 0.0;
      const double a = (tau - g_m) / sigma;
      return std::exp(-0.5 * a * a);
    };
    const double density_term = scale * (gauss(q.lower(j)) - gauss(q.upper(j)));
    const double w = std::exp(std::min(ld[sj] - log_f, kMaxExp));
    const double mass = dt[sj] > 0.0 ? std::exp(t[sj] - log_f) : 0.0;  // w * dt without overflow
    out.a += (density_term == 0.0 ? 0.0 : w * density_term) + g_m * mass;
    out.b += mass;
  }
  return out;
}

std::vector<EmQuantities> em_expectation(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q,
                                         const BitMapper& bm, const FieldModel& model, const ParamVector& theta) {
  require_rows(z, net, ChannelKind::kQuantized, bm.alpha());
  std::vector<EmQuantities> out(net.size());
  std::vector<double> row(static_cast<std::size_t>(bm.alpha()));
  for (std::size_t k = 0; k < net.size(); ++k) {
    for (int b = 0; b < bm.alpha(); ++b) row[static_cast<std::size_t>(b)] = z.z(static_cast<Eigen::Index>(k), b);
    const Point& p = net.positions()[k];
    out[k] = em_quantities(row, q, bm, model.value(theta, p.x, p.y), std::sqrt(net.sigma2()[k]), z.eta2[k]);
  }
  return out;
}

ParamVector em_residual(const SensorNetwork& net, const FieldModel& model, std::span<const EmQuantities> frozen,
                        const ParamVector& theta) {
  ParamVector f = ParamVector::Zero();
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& p = net.positions()[k];
    const double g = model.value(theta, p.x, p.y);
    f += (frozen[k].a - g * frozen[k].b) / net.sigma2()[k] * model.gradient(theta, p.x, p.y);
  }
  return f;
}

namespace {

// Expected complete-data log-likelihood with A, B frozen; its gradient is the
// maximization-step residual and its Hessian the residual's Jacobian.
LocalQuadratic em_surrogate(const SensorNetwork& net, const FieldModel& model, std::span<const EmQuantities> frozen,
                            const ParamVector& theta) {
  LocalQuadratic lq;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& p = net.positions()[k];
    const FieldSample s = model.sample(theta, p.x, p.y);
    const double w = 1.0 / net.sigma2()[k];
    const double a = frozen[k].a;
    const double b = frozen[k].b;
    lq.value -= 0.5 * w * (b * s.value * s.value - 2.0 * a * s.value);
    lq.gradient += w * (a - s.value * b) * s.gradient;
    lq.hessian += w * ((a - s.value * b) * s.hessian - b * (s.gradient * s.gradient.transpose()));
  }
  return lq;
}

double em_surrogate_value(const SensorNetwork& net, const FieldModel& model, std::span<const EmQuantities> frozen,
                          const ParamVector& theta) {
  double v = 0.0;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& p = net.positions()[k];
    const double g = model.value(theta, p.x, p.y);
    v -= 0.5 / net.sigma2()[k] * (frozen[k].b * g * g - 2.0 * frozen[k].a * g);
  }
  return v;
}

}  // namespace

EmStepResult em_step(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q, const BitMapper& bm,
                     const FieldModel& model, const ParamVector& theta_m, const SolverConfig& cfg) {
  cfg.validate();
  if (!model.admissible(theta_m)) throw std::invalid_argument("em_step: theta outside the admissible set");
  for (double s2 : net.sigma2()) {
    if (!(s2 > 0.0)) throw std::invalid_argument("em_step: observation noise variance must be positive");
  }
  const std::vector<EmQuantities> frozen = em_expectation(z, net, q, bm, model, theta_m);
  AscentProblem problem{
      [&](const ParamVector& t) -> std::optional<double> {
        if (!model.admissible(t)) return std::nullopt;
        const double v = em_surrogate_value(net, model, frozen, t);
        return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
      },
      [&](const ParamVector& t) { return em_surrogate(net, model, frozen, t); }};
  AscentOutcome inner = newton_ascent(problem, theta_m, {cfg.tol, cfg.max_inner, cfg.damping, cfg.ridge});
  EmStepResult out;
  out.theta = inner.theta;
  out.inner_iterations = inner.iterations;
  out.inner_converged = inner.converged;
  if (inner.failure && *inner.failure != "max_iterations") out.failure = inner.failure;
  return out;
}

EstimateResult em_estimate(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q, const BitMapper& bm,
                           const FieldModel& model, const ParamVector& init, const SolverConfig& cfg) {
  cfg.validate();
  if (!model.admissible(init)) throw std::invalid_argument("em_estimate: initial parameters outside the admissible set");
  EstimateResult r;
  r.theta_hat = init;
  r.trace.theta.push_back(init);
  r.trace.loglik.push_back(loglik_quantized(z, net, q, bm, model, init));
  for (int m = 0; m < cfg.max_outer; ++m) {
    const EmStepResult step = em_step(z, net, q, bm, model, r.theta_hat, cfg);
    if (step.failure) {
      r.divergence_reason = "inner";
      return r;
    }
    const double change = max_abs(step.theta - r.theta_hat);
    r.theta_hat = step.theta;
    ++r.iterations;
    r.trace.theta.push_back(r.theta_hat);
    r.trace.loglik.push_back(loglik_quantized(z, net, q, bm, model, r.theta_hat));
    if (change <= cfg.tol) {
      r.converged = true;
      return r;
    }
  }
  r.divergence_reason = "max_iterations";
  return r;
}

EstimateResult nr_estimate_quantized(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q,
                                     const BitMapper& bm, const FieldModel& model, const ParamVector& init,
                                     const SolverConfig& cfg) {
  cfg.validate();
  require_rows(z, net, ChannelKind::kQuantized, bm.alpha());
  AscentProblem problem{
      [&](const ParamVector& t) -> std::optional<double> {
        if (!model.admissible(t)) return std::nullopt;
        const double v = loglik_quantized(z, net, q, bm, model, t);
        return std::isfinite(v) ? std::optional<double>(v) : std::nullopt;
      },
      [&](const ParamVector& t) { return loglik_quantized_derivatives(z, net, q, bm, model, t); }};
  return to_result(newton_ascent(problem, init, {cfg.tol, cfg.max_outer, cfg.damping, cfg.ridge}));
}

}  // namespace fieldest
