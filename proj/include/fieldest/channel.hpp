#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "fieldest/network.hpp"

namespace fieldest {

/// M-level scalar quantizer. Cells are [tau_j, tau_{j+1}) with tau_0 = -inf
/// and tau_M = +inf; levels are indexed 0..M-1.
class Quantizer {
 public:
  /// `interior` holds the M-1 finite boundaries, strictly increasing.
  /// M must be a power of two >= 2.
  Quantizer(std::vector<double> interior, std::vector<double> reproduction);

  int levels() const noexcept { return static_cast<int>(reproduction_.size()); }
  /// All M+1 boundaries including the infinite endpoints.
  std::span<const double> boundaries() const noexcept { return boundaries_; }
  std::span<const double> reproduction() const noexcept { return reproduction_; }
  double lower(int level) const { return boundaries_[static_cast<std::size_t>(level)]; }
  double upper(int level) const { return boundaries_[static_cast<std::size_t>(level) + 1]; }

 private:
  std::vector<double> boundaries_;
  std::vector<double> reproduction_;
};

/// Uniform quantizer whose M-1 interior boundaries split [lo, hi] into M equal
/// cells; reproduction points sit at the cell midpoints, the edge cells using
/// their finite part.
Quantizer make_uniform_quantizer(int m, double lo, double hi);

/// Level j with tau_j <= r < tau_{j+1}.
int quantize(const Quantizer& q, double r);

/// Cell probabilities of N(g, sigma^2). Throws std::invalid_argument for sigma <= 0.
std::vector<double> level_probabilities(const Quantizer& q, double g, double sigma);

/// Cell probabilities together with their first and second derivatives with
/// respect to the field value g.
struct LevelProbabilityDerivatives {
  std::vector<double> p;
  std::vector<double> dp;
  std::vector<double> d2p;
};
LevelProbabilityDerivatives level_probability_derivatives(const Quantizer& q, double g, double sigma);

/// Natural-binary code words, most significant bit first, unit amplitude.
class BitMapper {
 public:
  explicit BitMapper(int levels);

  int levels() const noexcept { return levels_; }
  int alpha() const noexcept { return alpha_; }
  /// Code word of `level` as an alpha-vector of 0/1 values.
  const Eigen::VectorXd& code(int level) const { return codes_.at(static_cast<std::size_t>(level)); }
  /// Squared norm of the code word (its Hamming weight).
  double energy(int level) const { return code(level).squaredNorm(); }

 private:
  int levels_;
  int alpha_;
  std::vector<Eigen::VectorXd> codes_;
};

/// Bits of `level`; throws std::out_of_range outside [0, M).
std::vector<int> bits_of_level(const BitMapper& bm, int level);

enum class ChannelKind { kAnalog, kQuantized };

/// What the fusion centre receives: a K x 1 matrix for amplify-and-forward or
/// K x alpha for quantize-and-forward, with the channel noise variance of each sensor.
struct ReceivedMatrix {
  ChannelKind kind = ChannelKind::kAnalog;
  Eigen::MatrixXd z;
  std::vector<double> eta2;

  std::size_t sensors() const noexcept { return static_cast<std::size_t>(z.rows()); }
};

/// Z_k = R_k + N_k, N_k ~ N(0, eta2).
ReceivedMatrix amplify_forward(const ObservationVector& r, double eta2, std::uint64_t seed);

/// Z_k = b(q(R_k)) + N_k with alpha independent N(0, eta2) samples per row.
ReceivedMatrix quantize_forward(const ObservationVector& r, const Quantizer& q, const BitMapper& bm, double eta2,
                                std::uint64_t seed);

}  // namespace fieldest
