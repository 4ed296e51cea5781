#include "fieldest/channel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fieldest/rng.hpp"
#include "fieldest/special.hpp"

namespace fieldest {

namespace {

bool is_power_of_two(int m) { return m >= 2 && std::has_single_bit(static_cast<unsigned>(m)); }

}  // namespace

Quantizer::Quantizer(std::vector<double> interior, std::vector<double> reproduction)
    : reproduction_(std::move(reproduction)) {
  const int m = static_cast<int>(reproduction_.size());
  if (!is_power_of_two(m)) {
    throw std::invalid_argument("Quantizer: level count must be a power of two >= 2, got " + std::to_string(m));
  }
  if (static_cast<int>(interior.size()) != m - 1) {
    throw std::invalid_argument("Quantizer: need M-1 interior boundaries");
  }
  boundaries_.reserve(interior.size() + 2);
  boundaries_.push_back(-std::numeric_limits<double>::infinity());
  for (double t : interior) {
    if (!std::isfinite(t) || !(t > boundaries_.back())) {
      throw std::invalid_argument("Quantizer: boundaries must be finite and strictly increasing");
    }
    boundaries_.push_back(t);
  }
  boundaries_.push_back(std::numeric_limits<double>::infinity());
  for (double v : reproduction_) {
    if (!std::isfinite(v)) throw std::invalid_argument("Quantizer: reproduction points must be finite");
  }
}

Quantizer make_uniform_quantizer(int m, double lo, double hi) {
  if (!is_power_of_two(m)) {
    throw std::invalid_argument("make_uniform_quantizer: m must be a power of two >= 2, got " + std::to_string(m));
  }
  if (!(hi > lo)) throw std::invalid_argument("make_uniform_quantizer: need hi > lo");
  const double width = (hi - lo) / m;
  std::vector<double> interior(static_cast<std::size_t>(m - 1));
  std::vector<double> nu(static_cast<std::size_t>(m));
  for (int j = 1; j < m; ++j) interior[static_cast<std::size_t>(j - 1)] = lo + j * width;
  for (int j = 0; j < m; ++j) nu[static_cast<std::size_t>(j)] = lo + (j + 0.5) * width;
  return {std::move(interior), std::move(nu)};
}

int quantize(const Quantizer& q, double r) {
  const auto b = q.boundaries();
  // First boundary strictly greater than r closes the cell on the right.
  const auto it = std::upper_bound(b.begin() + 1, b.end() - 1, r);
  return static_cast<int>(it - (b.begin() + 1));
}

std::vector<double> level_probabilities(const Quantizer& q, double g, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("level_probabilities: sigma must be positive");
  }
  const int m = q.levels();
  std::vector<double> p(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    p[static_cast<std::size_t>(j)] = gaussian_interval_mass((q.lower(j) - g) / sigma, (q.upper(j) - g) / sigma);
  }
  return p;
}

LevelProbabilityDerivatives level_probability_derivatives(const Quantizer& q, double g, double sigma) {
  LevelProbabilityDerivatives out;
  out.p = level_probabilities(q, g, sigma);
  const int m = q.levels();
  out.dp.resize(static_cast<std::size_t>(m));
  out.d2p.resize(static_cast<std::size_t>(m));
  // d/dg of Q((t - g)/sigma) is phi(a)/sigma and d/dg of phi(a)/sigma is a phi(a)/sigma^2;
  // both vanish at the infinite boundaries.
  auto edge = [&](double t, double& first, double& second) {
    if (!std::isfinite(t)) {
      first = second = 0.0;
      return;
    }
    const double a = (t - g) / sigma;
    const double phi = normal_pdf(a);
    first = phi / sigma;
    second = a * phi / (sigma * sigma);
  };
  for (int j = 0; j < m; ++j) {
    double lo1 = 0.0, lo2 = 0.0, hi1 = 0.0, hi2 = 0.0;
    edge(q.lower(j), lo1, lo2);
    edge(q.upper(j), hi1, hi2);
    out.dp[static_cast<std::size_t>(j)] = lo1 - hi1;
    out.d2p[static_cast<std::size_t>(j)] = lo2 - hi2;
  }
  return out;
}

BitMapper::BitMapper(int levels) : levels_(levels), alpha_(0) {
  if (!is_power_of_two(levels)) {
    throw std::invalid_argument("BitMapper: level count must be a power of two >= 2");
  }
  alpha_ = std::countr_zero(static_cast<unsigned>(levels));
  codes_.reserve(static_cast<std::size_t>(levels));
  for (int j = 0; j < levels; ++j) {
    Eigen::VectorXd c(alpha_);
    for (int b = 0; b < alpha_; ++b) c[b] = static_cast<double>((j >> (alpha_ - 1 - b)) & 1);
    codes_.push_back(std::move(c));
  }
}

std::vector<int> bits_of_level(const BitMapper& bm, int level) {
  if (level < 0 || level >= bm.levels()) {
    throw std::out_of_range("bits_of_level: level " + std::to_string(level) + " outside [0, " +
                            std::to_string(bm.levels()) + ")");
  }
  const Eigen::VectorXd& c = bm.code(level);
  std::vector<int> bits(static_cast<std::size_t>(c.size()));
  for (Eigen::Index b = 0; b < c.size(); ++b) bits[static_cast<std::size_t>(b)] = static_cast<int>(c[b]);
  return bits;
}

ReceivedMatrix amplify_forward(const ObservationVector& r, double eta2, std::uint64_t seed) {
  if (!(eta2 >= 0.0)) throw std::invalid_argument("amplify_forward: eta2 must be non-negative");
  Rng rng(seed);
  const double eta = std::sqrt(eta2);
  ReceivedMatrix out;
  out.kind = ChannelKind::kAnalog;
  out.z.resize(static_cast<Eigen::Index>(r.r.size()), 1);
  out.eta2.assign(r.r.size(), eta2);
  for (std::size_t k = 0; k < r.r.size(); ++k) out.z(static_cast<Eigen::Index>(k), 0) = r.r[k] + eta * rng.normal();
  return out;
}

ReceivedMatrix quantize_forward(const ObservationVector& r, const Quantizer& q, const BitMapper& bm, double eta2,
                                std::uint64_t seed) {
  if (!(eta2 >= 0.0)) throw std::invalid_argument("quantize_forward: eta2 must be non-negative");
  if (bm.levels() != q.levels()) throw std::invalid_argument("quantize_forward: bit mapper / quantizer mismatch");
  Rng rng(seed);
  const double eta = std::sqrt(eta2);
  ReceivedMatrix out;
  out.kind = ChannelKind::kQuantized;
  out.z.resize(static_cast<Eigen::Index>(r.r.size()), bm.alpha());
  out.eta2.assign(r.r.size(), eta2);
  for (std::size_t k = 0; k < r.r.size(); ++k) {
    const Eigen::VectorXd& code = bm.code(quantize(q, r.r[k]));
    for (int b = 0; b < bm.alpha(); ++b) {
      out.z(static_cast<Eigen::Index>(k), b) = code[b] + eta * rng.normal();
    }
  }
  return out;
}

}  // namespace fieldest
