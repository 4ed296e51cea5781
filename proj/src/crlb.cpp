#include "fieldest/crlb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace fieldest {

std::string to_string(FisherSource s) {
  switch (s) {
    case FisherSource::kAnalog:
      return "analog";
    case FisherSource::kSeries:
      return "series";
    case FisherSource::kQuadrature:
      return "quadrature";
  }
  return "unknown";
}

namespace {

double fisher_condition(const ParamMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ParamMatrix> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !std::isfinite(hi)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

ParamVector inverse_diagonal(const ParamMatrix& m) {
  Eigen::LDLT<ParamMatrix> ldlt(m);
  ParamVector d;
  for (int i = 0; i < kNumParams; ++i) {
    ParamVector e = ParamVector::Unit(i);
    d[i] = ldlt.solve(e)[i];
  }
  return d;
}

FisherMatrix finalize(ParamMatrix entries, FisherSource source, int setting) {
  FisherMatrix f;
  f.entries = 0.5 * (entries + entries.transpose());
  f.source = source;
  f.setting = setting;
  f.condition = fisher_condition(f.entries);
  if (f.condition < kMaxFisherCondition) f.crlb_diag = inverse_diagonal(f.entries);
  return f;
}

// Ordered sum of per-sensor contributions; the order never depends on threads.
ParamMatrix sum_in_order(const std::vector<ParamMatrix>& parts) {
  ParamMatrix total = ParamMatrix::Zero();
  for (const ParamMatrix& p : parts) total += p;
  return total;
}

struct SensorState {
  std::vector<double> p;
  PDerivatives d;
};

std::vector<SensorState> sensor_states(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                       const Quantizer& q) {
  if (!net.calibrated()) throw std::invalid_argument("fisher: network noise variance not calibrated");
  const ParamVector theta = params.to_vector();
  std::vector<SensorState> out(net.size());
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& pos = net.positions()[k];
    const FieldSample s = model.sample(theta, pos.x, pos.y);
    const double sigma = std::sqrt(net.sigma2()[k]);
    out[k].p = level_probabilities(q, s.value, sigma);
    out[k].d = p_derivatives(q, s.value, s.gradient, s.hessian, sigma);
  }
  return out;
}

// -sum_j d2p_j * Gamma_j + D^T Phi D, Gamma_j = 1.
ParamMatrix sensor_information(const PDerivatives& d, const Eigen::MatrixXd& phi) {
  ParamMatrix info = d.first.transpose() * phi * d.first;
  for (const ParamMatrix& h : d.second) info -= h;
  return info;
}

void check_quantized_inputs(const Quantizer& q, const BitMapper& bm, double eta2) {
  if (q.levels() != bm.levels()) throw std::invalid_argument("fisher: quantizer / bit mapper mismatch");
  if (!(eta2 > 0.0)) throw std::invalid_argument("fisher: eta2 must be positive");
}

// Index pairs (j <= i) of a symmetric M x M matrix, row-major over the upper triangle.
std::vector<std::pair<int, int>> upper_pairs(int m) {
  std::vector<std::pair<int, int>> pairs;
  for (int j = 0; j < m; ++j) {
    for (int i = j; i < m; ++i) pairs.emplace_back(j, i);
  }
  return pairs;
}

Eigen::MatrixXd unpack_symmetric(const std::vector<std::pair<int, int>>& pairs, const double* packed, int m) {
  Eigen::MatrixXd out(m, m);
  for (std::size_t c = 0; c < pairs.size(); ++c) {
    out(pairs[c].first, pairs[c].second) = packed[c];
    out(pairs[c].second, pairs[c].first) = packed[c];
  }
  return out;
}

}  // namespace

ParamVector crlb_from_fisher(const FisherMatrix& fisher) {
  const double cond = fisher_condition(0.5 * (fisher.entries + fisher.entries.transpose()));
  if (!(cond < kMaxFisherCondition)) {
    throw SingularFisherError("crlb_from_fisher: Fisher matrix is singular or ill-conditioned (condition " +
                                  std::to_string(cond) + ")",
                              cond);
  }
  return inverse_diagonal(fisher.entries);
}

FisherMatrix fisher_analog(const SensorNetwork& net, const FieldModel& model, const FieldParams& params, double eta2) {
  if (!net.calibrated()) throw std::invalid_argument("fisher_analog: network noise variance not calibrated");
  const ParamVector theta = params.to_vector();
  ParamMatrix info = ParamMatrix::Zero();
  for (std::size_t k = 0; k < net.size(); ++k) {
    const double v = net.sigma2()[k] + eta2;
    if (!(v > 0.0)) throw std::invalid_argument("fisher_analog: total noise variance must be positive");
    const Point& pos = net.positions()[k];
    const ParamVector g = model.gradient(theta, pos.x, pos.y);
    info += g * g.transpose() / v;
  }
  return finalize(info, FisherSource::kAnalog, 0);
}

PDerivatives p_derivatives(const Quantizer& q, double g, const ParamVector& grad_g, const ParamMatrix& hess_g,
                           double sigma) {
  const LevelProbabilityDerivatives d = level_probability_derivatives(q, g, sigma);
  const int m = q.levels();
  PDerivatives out;
  out.first.resize(m, kNumParams);
  out.second.resize(static_cast<std::size_t>(m));
  const ParamMatrix outer = grad_g * grad_g.transpose();
  for (int j = 0; j < m; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    out.first.row(j) = d.dp[sj] * grad_g.transpose();
    out.second[sj] = d.d2p[sj] * outer + d.dp[sj] * hess_g;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compositions

std::uint64_t composition_count(int total, int parts) {
  if (total < 0 || parts < 1) throw std::invalid_argument("composition_count: need total >= 0 and parts >= 1");
  // C(total + parts - 1, parts - 1), built incrementally so intermediates stay exact.
  std::uint64_t c = 1;
  const int k = parts - 1;
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::uint64_t>(total + i) / static_cast<std::uint64_t>(i);
  return c;
}

CompositionGenerator::CompositionGenerator(int total, int parts) {
  if (total < 0 || parts < 1) throw std::invalid_argument("compositions: need total >= 0 and parts >= 1");
  current_.assign(static_cast<std::size_t>(parts), 0);
  current_.back() = total;
}

bool CompositionGenerator::next() {
  const int last = static_cast<int>(current_.size()) - 1;
  int tail = current_.back();
  for (int i = last - 1; i >= 0; --i) {
    if (tail > 0) {
      ++current_[static_cast<std::size_t>(i)];
      std::fill(current_.begin() + i + 1, current_.end(), 0);
      current_.back() = tail - 1;
      return true;
    }
    tail += current_[static_cast<std::size_t>(i)];
  }
  return false;
}

std::vector<std::vector<int>> compositions(int total, int parts) {
  std::vector<std::vector<int>> out;
  CompositionGenerator gen(total, parts);
  do {
    out.push_back(gen.current());
  } while (gen.next());
  return out;
}

double log_lambda_term(std::span<const int> ell, int j, int i, const BitMapper& bm, double eta2) {
  if (static_cast<int>(ell.size()) != bm.levels()) throw std::invalid_argument("lambda_term: ell needs M entries");
  if (!(eta2 > 0.0)) throw std::invalid_argument("lambda_term: eta2 must be positive");
  Eigen::VectorXd m = bm.code(j) + bm.code(i);
  double s = bm.energy(j) + bm.energy(i);
  int l0 = 0;
  for (int v = 0; v < bm.levels(); ++v) {
    const int l = ell[static_cast<std::size_t>(v)];
    if (l < 0) throw std::invalid_argument("lambda_term: negative composition entry");
    if (l == 0) continue;
    l0 += l;
    m += l * bm.code(v);
    s += l * bm.energy(v);
  }
  const double c = l0 + 2.0;
  return -0.5 * bm.alpha() * std::log(c) + (m.squaredNorm() / c - s) / (2.0 * eta2);
}

double lambda_term(std::span<const int> ell, int j, int i, const BitMapper& bm, double eta2) {
  return std::exp(log_lambda_term(ell, j, i, bm, eta2));
}

std::uint64_t series_term_count(int levels, int zeta) {
  if (zeta < 0) throw std::invalid_argument("series_term_count: zeta must be >= 0");
  // sum_{n<=zeta} sum_{m<=n} C(n-m+M-1, M-1) = C(zeta+M+1, M+1).
  return composition_count(zeta, levels + 2);
}

namespace {

// (-1)^w sum_{n=w}^{zeta} n! / (n-w)!: the weight of every composition of w
// once the n and m sums are regrouped by w = n - m.
double series_coefficient(int w, int zeta) {
  double acc = 0.0;
  for (int n = w; n <= zeta; ++n) {
    double falling = 1.0;
    for (int r = 0; r < w; ++r) falling *= n - r;
    acc += falling;
  }
  return (w % 2 == 0) ? acc : -acc;
}

// Per sensor, the packed partial sums S_w = sum_{|l| = w} prod_v p_v^l_v / l_v! * Lambda(l)
// for w = 0..zeta, stored as a (zeta+1) x P matrix (P = packed pair count).
std::vector<Eigen::MatrixXd> series_partial_sums(const std::vector<std::vector<double>>& probs, const BitMapper& bm,
                                                 double eta2, int zeta, Exec exec) {
  const int m = bm.levels();
  const int alpha = bm.alpha();
  const auto pairs = upper_pairs(m);
  const auto np = static_cast<Eigen::Index>(pairs.size());
  const std::size_t sensors = probs.size();

  // p_v^l / l! for l = 0..zeta.
  std::vector<Eigen::MatrixXd> powers(sensors, Eigen::MatrixXd(m, zeta + 1));
  for (std::size_t k = 0; k < sensors; ++k) {
    for (int v = 0; v < m; ++v) {
      double t = 1.0;
      for (int l = 0; l <= zeta; ++l) {
        if (l > 0) t *= probs[k][static_cast<std::size_t>(v)] / l;
        powers[k](v, l) = t;
      }
    }
  }

  std::vector<Eigen::MatrixXd> sums(sensors, Eigen::MatrixXd::Zero(zeta + 1, np));
  constexpr std::size_t kBlock = 2048;
  std::vector<int> block;  // flattened compositions, m entries each
  block.reserve(kBlock * static_cast<std::size_t>(m));
  Eigen::MatrixXd lambda(static_cast<Eigen::Index>(kBlock), np);
  Eigen::MatrixXd codes(m, alpha);
  for (int v = 0; v < m; ++v) codes.row(v) = bm.code(v).transpose();

  auto flush = [&](int w) {
    const auto count = static_cast<std::ptrdiff_t>(block.size() / static_cast<std::size_t>(m));
    if (count == 0) return;
    auto fill_lambda = [&](std::ptrdiff_t c) {
      const int* ell = block.data() + c * m;
      Eigen::VectorXd sb = Eigen::VectorXd::Zero(alpha);
      double se = 0.0;
      for (int v = 0; v < m; ++v) {
        if (ell[v] == 0) continue;
        sb += ell[v] * codes.row(v).transpose();
        se += ell[v] * bm.energy(v);
      }
      const double cc = w + 2.0;
      const double norm = -0.5 * alpha * std::log(cc);
      for (Eigen::Index pi = 0; pi < np; ++pi) {
        const auto [j, i] = pairs[static_cast<std::size_t>(pi)];
        const Eigen::VectorXd mv = sb + codes.row(j).transpose() + codes.row(i).transpose();
        const double s = se + bm.energy(j) + bm.energy(i);
        lambda(c, pi) = std::exp(norm + (mv.squaredNorm() / cc - s) / (2.0 * eta2));
      }
    };
    auto accumulate = [&](std::size_t k) {
      const Eigen::MatrixXd& pw = powers[k];
      auto row = sums[k].row(w);
      for (std::ptrdiff_t c = 0; c < count; ++c) {
        const int* ell = block.data() + c * m;
        double weight = 1.0;
        for (int v = 0; v < m; ++v) weight *= pw(v, ell[v]);
        if (weight == 0.0) continue;
        row += weight * lambda.row(c);
      }
    };
    if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t c = 0; c < count; ++c) fill_lambda(c);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(sensors); ++k) accumulate(static_cast<std::size_t>(k));
    } else {
      for (std::ptrdiff_t c = 0; c < count; ++c) fill_lambda(c);
      for (std::size_t k = 0; k < sensors; ++k) accumulate(k);
    }
    block.clear();
  };

  for (int w = 0; w <= zeta; ++w) {
    CompositionGenerator gen(w, m);
    do {
      block.insert(block.end(), gen.current().begin(), gen.current().end());
      if (block.size() == kBlock * static_cast<std::size_t>(m)) flush(w);
    } while (gen.next());
    flush(w);
  }
  return sums;
}

Eigen::MatrixXd phi_from_sums(const Eigen::MatrixXd& sums, const std::vector<std::pair<int, int>>& pairs, int m,
                              int zeta) {
  Eigen::VectorXd packed = Eigen::VectorXd::Zero(sums.cols());
  for (int w = 0; w <= zeta; ++w) packed += series_coefficient(w, zeta) * sums.row(w).transpose();
  return unpack_symmetric(pairs, packed.data(), m);
}

void check_series_budget(int levels, int zeta) {
  if (zeta < 0) throw std::invalid_argument("fisher_quantized_series: zeta must be >= 0");
  const std::uint64_t terms = series_term_count(levels, zeta);
  if (terms > kMaxSeriesTerms) {
    throw std::length_error("fisher_quantized_series: " + std::to_string(terms) + " series terms for M=" +
                            std::to_string(levels) + ", zeta=" + std::to_string(zeta) + " exceeds the limit of " +
                            std::to_string(kMaxSeriesTerms));
  }
}

}  // namespace

Eigen::MatrixXd phi_series(std::span<const double> p, const BitMapper& bm, double eta2, int zeta) {
  check_series_budget(bm.levels(), zeta);
  if (!(eta2 > 0.0)) throw std::invalid_argument("phi_series: eta2 must be positive");
  const std::vector<std::vector<double>> probs{std::vector<double>(p.begin(), p.end())};
  const auto sums = series_partial_sums(probs, bm, eta2, zeta, Exec::kSerial);
  return phi_from_sums(sums[0], upper_pairs(bm.levels()), bm.levels(), zeta);
}

std::vector<FisherMatrix> fisher_quantized_series_scan(const SensorNetwork& net, const FieldModel& model,
                                                       const FieldParams& params, const Quantizer& q,
                                                       const BitMapper& bm, double eta2, int zeta_max, Exec exec) {
  check_quantized_inputs(q, bm, eta2);
  check_series_budget(q.levels(), zeta_max);
  const auto states = sensor_states(net, model, params, q);
  std::vector<std::vector<double>> probs;
  probs.reserve(states.size());
  for (const auto& s : states) probs.push_back(s.p);
  const auto sums = series_partial_sums(probs, bm, eta2, zeta_max, exec);
  const auto pairs = upper_pairs(q.levels());

  std::vector<FisherMatrix> out;
  for (int zeta = 0; zeta <= zeta_max; ++zeta) {
    std::vector<ParamMatrix> parts(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
      parts[k] = sensor_information(states[k].d, phi_from_sums(sums[k], pairs, q.levels(), zeta));
    }
    out.push_back(finalize(sum_in_order(parts), FisherSource::kSeries, zeta));
  }
  return out;
}

FisherMatrix fisher_quantized_series(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                     const Quantizer& q, const BitMapper& bm, double eta2, int zeta, Exec exec) {
  check_quantized_inputs(q, bm, eta2);
  check_series_budget(q.levels(), zeta);
  const auto states = sensor_states(net, model, params, q);
  std::vector<std::vector<double>> probs;
  for (const auto& s : states) probs.push_back(s.p);
  const auto sums = series_partial_sums(probs, bm, eta2, zeta, exec);
  const auto pairs = upper_pairs(q.levels());
  std::vector<ParamMatrix> parts(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    parts[k] = sensor_information(states[k].d, phi_from_sums(sums[k], pairs, q.levels(), zeta));
  }
  return finalize(sum_in_order(parts), FisherSource::kSeries, zeta);
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

struct Grid {
  int nodes;
  int alpha;
  std::vector<double> x;
  std::vector<double> w;
  double norm;  // (2 pi eta2)^(-alpha/2)
};

Grid make_grid(const BitMapper& bm, double eta2, int nodes) {
  require_simpson_nodes(nodes, 21, "fisher quadrature");
  if (bm.alpha() > kMaxQuadratureAlpha) {
    throw std::invalid_argument("fisher quadrature: alpha=" + std::to_string(bm.alpha()) + " exceeds " +
                                std::to_string(kMaxQuadratureAlpha));
  }
  if (!(eta2 > 0.0)) throw std::invalid_argument("fisher quadrature: eta2 must be positive");
  const double eta = std::sqrt(eta2);
  Grid g{nodes, bm.alpha(), linspace(nodes, -6.0 * eta, 1.0 + 6.0 * eta),
         simpson_weights(nodes, -6.0 * eta, 1.0 + 6.0 * eta),
         std::pow(2.0 * std::numbers::pi * eta2, -0.5 * bm.alpha())};
  return g;
}

std::size_t ipow(int base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= static_cast<std::size_t>(base);
  return r;
}

// Decodes flat grid index `idx` into node coordinates and the product weight.
double grid_point(const Grid& g, std::size_t idx, Eigen::VectorXd& z) {
  double w = 1.0;
  for (int a = g.alpha - 1; a >= 0; --a) {
    const auto i = idx % static_cast<std::size_t>(g.nodes);
    idx /= static_cast<std::size_t>(g.nodes);
    z[a] = g.x[i];
    w *= g.w[i];
  }
  return w;
}

void log_kernels_at(const Eigen::VectorXd& z, const BitMapper& bm, double eta2, std::vector<double>& ld) {
  ld.resize(static_cast<std::size_t>(bm.levels()));
  for (int v = 0; v < bm.levels(); ++v) ld[static_cast<std::size_t>(v)] = -(z - bm.code(v)).squaredNorm() / (2.0 * eta2);
}

double log_mixture(std::span<const double> p, const std::vector<double>& ld) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < ld.size(); ++v) {
    if (p[v] > 0.0) mx = std::max(mx, std::log(p[v]) + ld[v]);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t v = 0; v < ld.size(); ++v) {
    if (p[v] > 0.0) s += std::exp(std::log(p[v]) + ld[v] - mx);
  }
  return mx + std::log(s);
}

}  // namespace

Eigen::MatrixXd phi_quadrature(std::span<const double> p, const BitMapper& bm, double eta2, int nodes) {
  const Grid g = make_grid(bm, eta2, nodes);
  const int m = bm.levels();
  if (static_cast<int>(p.size()) != m) throw std::invalid_argument("phi_quadrature: need M probabilities");
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd z(g.alpha);
  std::vector<double> ld;
  const std::size_t total = ipow(nodes, g.alpha);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const double w = grid_point(g, idx, z) * g.norm;
    log_kernels_at(z, bm, eta2, ld);
    const double lx = log_mixture(p, ld);
    if (!std::isfinite(lx)) continue;
    for (int j = 0; j < m; ++j) {
      for (int i = j; i < m; ++i) {
        phi(j, i) += w * std::exp(ld[static_cast<std::size_t>(j)] + ld[static_cast<std::size_t>(i)] - lx);
      }
    }
  }
  return phi.selfadjointView<Eigen::Upper>();
}

double gamma_quadrature(std::span<const double> p, int j, const BitMapper& bm, double eta2, int nodes) {
  const Grid g = make_grid(bm, eta2, nodes);
  if (static_cast<int>(p.size()) != bm.levels() || j < 0 || j >= bm.levels()) {
    throw std::invalid_argument("gamma_quadrature: bad level or probability vector");
  }
  Eigen::VectorXd z(g.alpha);
  std::vector<double> ld;
  double acc = 0.0;
  const std::size_t total = ipow(nodes, g.alpha);
  for (std::size_t idx = 0; idx < total; ++idx) {
    const double w = grid_point(g, idx, z);
    log_kernels_at(z, bm, eta2, ld);
    const double lx = log_mixture(p, ld);
    if (!std::isfinite(lx)) continue;
    // (e_j / x) * f_Z(z) with f_Z = (2 pi eta2)^(-alpha/2) x.
    const double ratio = std::exp(ld[static_cast<std::size_t>(j)] - lx);
    const double density = g.norm * std::exp(lx);
    acc += w * ratio * density;
  }
  return acc;
}

FisherMatrix fisher_quantized_simpson(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                      const Quantizer& q, const BitMapper& bm, double eta2, int nodes, Exec exec) {
  check_quantized_inputs(q, bm, eta2);
  const Grid g = make_grid(bm, eta2, nodes);
  const auto states = sensor_states(net, model, params, q);
  const int m = q.levels();
  const auto pairs = upper_pairs(m);
  const std::size_t np = pairs.size();
  const std::size_t sensors = states.size();
  const std::size_t per_slice = ipow(nodes, g.alpha - 1);

  Eigen::MatrixXd codes(m, g.alpha);
  for (int v = 0; v < m; ++v) codes.row(v) = bm.code(v).transpose();
  Eigen::MatrixXd probs(static_cast<Eigen::Index>(sensors), m);
  for (std::size_t k = 0; k < sensors; ++k) {
    for (int v = 0; v < m; ++v) probs(static_cast<Eigen::Index>(k), v) = states[k].p[static_cast<std::size_t>(v)];
  }

  // One packed Phi accumulator per sensor per first-axis slice; slices are
  // reduced in index order afterwards.
  std::vector<double> slices(static_cast<std::size_t>(nodes) * sensors * np, 0.0);
  auto slice = [&](int s) {
    double* acc = slices.data() + static_cast<std::size_t>(s) * sensors * np;
    Eigen::VectorXd z(g.alpha), u(m), x(static_cast<Eigen::Index>(sensors));
    std::vector<double> uu(np);
    for (std::size_t r = 0; r < per_slice; ++r) {
      const double w = grid_point(g, static_cast<std::size_t>(s) * per_slice + r, z);
      double lmax = -std::numeric_limits<double>::infinity();
      for (int v = 0; v < m; ++v) {
        u[v] = -(z - codes.row(v).transpose()).squaredNorm() / (2.0 * eta2);
        lmax = std::max(lmax, u[v]);
      }
      for (int v = 0; v < m; ++v) u[v] = std::exp(u[v] - lmax);
      const double scale = w * g.norm * std::exp(lmax);
      if (scale == 0.0) continue;
      for (std::size_t c = 0; c < np; ++c) uu[c] = u[pairs[c].first] * u[pairs[c].second];
      x.noalias() = probs * u;
      for (std::size_t k = 0; k < sensors; ++k) {
        const double xk = x[static_cast<Eigen::Index>(k)];
        if (!(xk > 0.0)) continue;
        const double f = scale / xk;
        double* row = acc + k * np;
        for (std::size_t c = 0; c < np; ++c) row[c] += f * uu[c];
      }
    }
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(dynamic)
    for (int s = 0; s < nodes; ++s) slice(s);
  } else {
    for (int s = 0; s < nodes; ++s) slice(s);
  }

  std::vector<ParamMatrix> parts(sensors);
  std::vector<double> packed(np);
  for (std::size_t k = 0; k < sensors; ++k) {
    std::fill(packed.begin(), packed.end(), 0.0);
    for (int s = 0; s < nodes; ++s) {
      const double* row = slices.data() + (static_cast<std::size_t>(s) * sensors + k) * np;
      for (std::size_t c = 0; c < np; ++c) packed[c] += row[c];
    }
    parts[k] = sensor_information(states[k].d, unpack_symmetric(pairs, packed.data(), m));
  }
  return finalize(sum_in_order(parts), FisherSource::kQuadrature, nodes);
}

namespace serial {

FisherMatrix fisher_quantized_series(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                     const Quantizer& q, const BitMapper& bm, double eta2, int zeta) {
  check_quantized_inputs(q, bm, eta2);
  check_series_budget(q.levels(), zeta);
  const auto states = sensor_states(net, model, params, q);
  const int m = q.levels();
  std::vector<ParamMatrix> parts(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(m, m);
    for (int n = 0; n <= zeta; ++n) {
      for (int mm = 0; mm <= n; ++mm) {
        double ratio = 1.0;  // n! / m!
        for (int r = mm + 1; r <= n; ++r) ratio *= r;
        const double sign = ((n + mm) % 2 == 0) ? 1.0 : -1.0;
        CompositionGenerator gen(n - mm, m);
        do {
          const auto& ell = gen.current();
          double prod = 1.0;
          for (int v = 0; v < m; ++v) {
            const int l = ell[static_cast<std::size_t>(v)];
            prod *= std::pow(states[k].p[static_cast<std::size_t>(v)], l) / std::tgamma(l + 1.0);
          }
          for (int j = 0; j < m; ++j) {
            for (int i = 0; i < m; ++i) phi(j, i) += sign * ratio * prod * lambda_term(ell, j, i, bm, eta2);
          }
        } while (gen.next());
      }
    }
    parts[k] = sensor_information(states[k].d, phi);
  }
  return finalize(sum_in_order(parts), FisherSource::kSeries, zeta);
}

FisherMatrix fisher_quantized_simpson(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                      const Quantizer& q, const BitMapper& bm, double eta2, int nodes) {
  check_quantized_inputs(q, bm, eta2);
  const auto states = sensor_states(net, model, params, q);
  std::vector<ParamMatrix> parts(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    parts[k] = sensor_information(states[k].d, phi_quadrature(states[k].p, bm, eta2, nodes));
  }
  return finalize(sum_in_order(parts), FisherSource::kQuadrature, nodes);
}

}  // namespace serial

}  // namespace fieldest
