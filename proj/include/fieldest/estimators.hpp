#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fieldest/channel.hpp"
#include "fieldest/field.hpp"
#include "fieldest/network.hpp"
#include "fieldest/special.hpp"

namespace fieldest {

struct SolverConfig {
  double tol = 1e-6;      ///< stop when max |delta theta_i| <= tol
  int max_outer = 200;    ///< Newton iterations (analog/NR) or EM iterations
  int max_inner = 50;     ///< Newton iterations inside one EM maximization step
  int damping = 20;       ///< step halvings allowed per iteration
  double ridge = 1e-8;    ///< relative ridge tried first when the Newton system is not positive definite

  void validate() const;
};

struct IterationTrace {
  std::vector<ParamVector> theta;  ///< theta^(0) .. theta^(iterations)
  std::vector<double> loglik;      ///< incomplete-data log-likelihood at each theta
};

/// Outcome of an iterative estimator. `theta_hat` is the last iterate even when
/// the run diverged, so squared errors can always be computed.
struct EstimateResult {
  ParamVector theta_hat = ParamVector::Zero();
  IterationTrace trace;
  bool converged = false;
  int iterations = 0;
  std::optional<std::string> divergence_reason;  ///< "singular", "max_iterations", "line_search", "inner"
};

// ---------------------------------------------------------------------------
// Amplify-and-forward

/// -1/2 sum_k (Z_k - G_k)^2 / (sigma2_k + eta2_k), additive constant dropped.
double loglik_analog(const ReceivedMatrix& z, const SensorNetwork& net, const FieldModel& model,
                     const ParamVector& theta);

/// Gradient and Hessian of loglik_analog in theta.
struct LocalQuadratic {
  double value = 0.0;
  ParamVector gradient = ParamVector::Zero();
  ParamMatrix hessian = ParamMatrix::Zero();
};
LocalQuadratic loglik_analog_derivatives(const ReceivedMatrix& z, const SensorNetwork& net, const FieldModel& model,
                                         const ParamVector& theta);

/// Damped Newton ascent on the analog log-likelihood.
EstimateResult newton_ml_analog(const ReceivedMatrix& z, const SensorNetwork& net, const FieldModel& model,
                                const ParamVector& init, const SolverConfig& cfg = {});

// ---------------------------------------------------------------------------
// Quantize-and-forward

/// sum_k log sum_j p_kj(theta) exp(-|z_k - b_j|^2 / (2 eta2_k)), additive
/// constant dropped, evaluated with log-sum-exp.
double loglik_quantized(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q, const BitMapper& bm,
                        const FieldModel& model, const ParamVector& theta);

LocalQuadratic loglik_quantized_derivatives(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q,
                                            const BitMapper& bm, const FieldModel& model, const ParamVector& theta);

/// Posterior quantities of one sensor given its received bits, evaluated at the
/// current field value. `a` is the conditional mean of the raw reading R_k; `b`
/// is the posterior mass, which equals one whenever the cell probabilities are
/// those of the current iterate.
struct EmQuantities {
  double a = 0.0;
  double b = 0.0;
};
EmQuantities em_quantities(std::span<const double> z_k, const Quantizer& q, const BitMapper& bm, double g_m,
                           double sigma, double eta2);

/// Left-hand side of the maximization-step equations at `theta`, with the
/// posterior quantities frozen at the previous iterate:
///   F_t = sum_k (1/sigma2_k) dG_k/dtheta_t (A_k - G_k B_k).
ParamVector em_residual(const SensorNetwork& net, const FieldModel& model, std::span<const EmQuantities> frozen,
                        const ParamVector& theta);

/// Posterior quantities of every sensor at `theta`.
std::vector<EmQuantities> em_expectation(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q,
                                         const BitMapper& bm, const FieldModel& model, const ParamVector& theta);

struct EmStepResult {
  ParamVector theta;
  int inner_iterations = 0;
  bool inner_converged = false;
  std::optional<std::string> failure;
};

/// One EM iteration: expectation at theta_m, then a damped Newton solve of the
/// maximization-step equations for theta^(m+1).
EmStepResult em_step(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q, const BitMapper& bm,
                     const FieldModel& model, const ParamVector& theta_m, const SolverConfig& cfg = {});

EstimateResult em_estimate(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q, const BitMapper& bm,
                           const FieldModel& model, const ParamVector& init, const SolverConfig& cfg = {});

/// Damped Newton ascent directly on the quantized log-likelihood.
EstimateResult nr_estimate_quantized(const ReceivedMatrix& z, const SensorNetwork& net, const Quantizer& q,
                                     const BitMapper& bm, const FieldModel& model, const ParamVector& init,
                                     const SolverConfig& cfg = {});

}  // namespace fieldest
