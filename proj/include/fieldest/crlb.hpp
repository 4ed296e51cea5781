#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fieldest/channel.hpp"
#include "fieldest/field.hpp"
#include "fieldest/network.hpp"

namespace fieldest {

enum class FisherSource { kAnalog, kSeries, kQuadrature };

std::string to_string(FisherSource s);

/// Fisher information I(theta) with where it came from and the derived bound.
struct FisherMatrix {
  ParamMatrix entries = ParamMatrix::Zero();
  FisherSource source = FisherSource::kAnalog;
  int setting = 0;                        ///< truncation order for kSeries, nodes per axis for kQuadrature
  double condition = 0.0;                 ///< lambda_max / lambda_min, +inf when not positive definite
  std::optional<ParamVector> crlb_diag;   ///< diagonal of I^-1; empty when I is (near) singular
};

/// Thrown by crlb_from_fisher when the Fisher matrix cannot be inverted reliably.
class SingularFisherError : public std::runtime_error {
 public:
  SingularFisherError(const std::string& what, double condition) : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

inline constexpr double kMaxFisherCondition = 1e12;

/// Diagonal of I^-1. Throws SingularFisherError when cond(I) >= 1e12.
ParamVector crlb_from_fisher(const FisherMatrix& fisher);

/// Amplify-and-forward information: sum_k dG_k dG_k^T / (sigma2_k + eta2).
FisherMatrix fisher_analog(const SensorNetwork& net, const FieldModel& model, const FieldParams& params, double eta2);

/// Derivatives of the cell probabilities in theta through G: first is M x L,
/// second holds one L x L matrix per level.
struct PDerivatives {
  Eigen::MatrixXd first;
  std::vector<ParamMatrix> second;
};
PDerivatives p_derivatives(const Quantizer& q, double g, const ParamVector& grad_g, const ParamMatrix& hess_g,
                           double sigma);

// ---------------------------------------------------------------------------
// Series form

/// Number of weak compositions of `total` into `parts` nonnegative integers.
std::uint64_t composition_count(int total, int parts);

/// Weak compositions of a fixed total in lexicographic order, starting at
/// (0, ..., 0, total) and ending at (total, 0, ..., 0).
class CompositionGenerator {
 public:
  CompositionGenerator(int total, int parts);

  const std::vector<int>& current() const noexcept { return current_; }
  /// Advances to the next composition; false once the last one has been visited.
  bool next();

 private:
  std::vector<int> current_;
};

std::vector<std::vector<int>> compositions(int total, int parts);

/// Closed form of the Gaussian integral
///   (2 pi eta2)^(-alpha/2) * integral over R^alpha of
///   exp(-(|z-b_j|^2 + |z-b_i|^2 + sum_v l_v |z-b_v|^2) / (2 eta2)) dz
/// = c^(-alpha/2) exp((|m|^2 / c - S) / (2 eta2)),
/// with c = sum l + 2, m = b_j + b_i + sum l_v b_v and S the matching sum of
/// squared norms. `ell` has one entry per level.
double lambda_term(std::span<const int> ell, int j, int i, const BitMapper& bm, double eta2);
double log_lambda_term(std::span<const int> ell, int j, int i, const BitMapper& bm, double eta2);

/// Number of (n, m, composition) terms a truncation at order zeta visits.
std::uint64_t series_term_count(int levels, int zeta);

inline constexpr std::uint64_t kMaxSeriesTerms = 10'000'000;

/// Symmetric M x M matrix Phi_{j,i} = E[e_j e_i / x^2] for one sensor with cell
/// probabilities `p`, from the alternating series truncated after order zeta.
Eigen::MatrixXd phi_series(std::span<const double> p, const BitMapper& bm, double eta2, int zeta);

/// Series-form quantized Fisher information truncated at order `zeta`.
/// Throws std::length_error when series_term_count exceeds kMaxSeriesTerms.
FisherMatrix fisher_quantized_series(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                     const Quantizer& q, const BitMapper& bm, double eta2, int zeta,
                                     Exec exec = Exec::kParallel);

/// fisher_quantized_series for every order 0..zeta_max in a single pass.
std::vector<FisherMatrix> fisher_quantized_series_scan(const SensorNetwork& net, const FieldModel& model,
                                                       const FieldParams& params, const Quantizer& q,
                                                       const BitMapper& bm, double eta2, int zeta_max,
                                                       Exec exec = Exec::kParallel);

// ---------------------------------------------------------------------------
// Quadrature form

inline constexpr int kDefaultFisherNodes = 81;
inline constexpr int kMaxQuadratureAlpha = 4;

/// Phi for one sensor by alpha-dimensional composite Simpson over
/// [-6 eta, 1 + 6 eta] per axis.
Eigen::MatrixXd phi_quadrature(std::span<const double> p, const BitMapper& bm, double eta2,
                               int nodes = kDefaultFisherNodes);

/// E[e_j / x] under the received-vector mixture density, by the same quadrature.
/// Equals one analytically.
double gamma_quadrature(std::span<const double> p, int j, const BitMapper& bm, double eta2,
                        int nodes = kDefaultFisherNodes);

/// Quadrature-form quantized Fisher information. Throws std::invalid_argument
/// for an even node count, fewer than 21 nodes or alpha > 4.
FisherMatrix fisher_quantized_simpson(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                      const Quantizer& q, const BitMapper& bm, double eta2,
                                      int nodes = kDefaultFisherNodes, Exec exec = Exec::kParallel);

namespace serial {

/// Literal triple sum over n, m and compositions with lambda_term evaluated per
/// term. Slow; kept as the reference for the parallel kernel.
FisherMatrix fisher_quantized_series(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                     const Quantizer& q, const BitMapper& bm, double eta2, int zeta);

/// Sensor-by-sensor quadrature with phi_quadrature; reference for the kernel
/// that shares grid work across sensors.
FisherMatrix fisher_quantized_simpson(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                      const Quantizer& q, const BitMapper& bm, double eta2,
                                      int nodes = kDefaultFisherNodes);

}  // namespace serial

}  // namespace fieldest
