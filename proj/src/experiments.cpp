#include "fieldest/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>

#include <omp.h>

#include "fieldest/rng.hpp"

namespace fieldest {

namespace {

const GaussianBell& bell() {
  static const GaussianBell model;
  return model;
}

}  // namespace

double squared_error(const ParamVector& theta_hat, const ParamVector& theta_true) {
  // Plain left-to-right sum so the value does not depend on vectorization.
  double s = 0.0;
  for (int i = 0; i < kNumParams; ++i) s += (theta_hat[i] - theta_true[i]) * (theta_hat[i] - theta_true[i]);
  return s;
}

ParamVector initial_region_sample(int region, const FieldParams& truth, std::uint64_t seed) {
  if (region < 1 || region > 8) throw std::invalid_argument("initial_region_sample: region must lie in 1..8");
  Rng rng(seed);
  const ParamVector t = truth.to_vector();
  ParamVector out;
  for (int i = 0; i < kNumParams; ++i) {
    const double a = t[i] * (1.0 - (region - 1) / 8.0);
    const double b = t[i] * (1.0 - region / 8.0);
    out[i] = rng.uniform(std::min(a, b), std::max(a, b));
  }
  out[kRhoX] = std::max(out[kRhoX], kMinInitialSpread);
  out[kRhoY] = std::max(out[kRhoY], kMinInitialSpread);
  return out;
}

double sorted_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("box_stats: empty sample");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  BoxStats b;
  b.median = sorted_quantile(s, 0.5);
  b.q1 = sorted_quantile(s, 0.25);
  b.q3 = sorted_quantile(s, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.q1;
  b.whisker_hi = b.q3;
  for (double v : s) {
    if (v >= lo_fence && v <= hi_fence) {
      b.whisker_lo = std::min(b.whisker_lo, v);
      b.whisker_hi = std::max(b.whisker_hi, v);
    } else {
      b.outliers.push_back(v);
    }
  }
  return b;
}

std::vector<double> outlier_probability(std::span<const double> se, std::span<const double> tau) {
  if (se.empty()) throw std::invalid_argument("outlier_probability: empty sample");
  std::vector<double> s(se.begin(), se.end());
  std::sort(s.begin(), s.end());
  std::vector<double> out;
  out.reserve(tau.size());
  for (double t : tau) {
    const auto above = s.end() - std::upper_bound(s.begin(), s.end(), t);
    out.push_back(static_cast<double>(above) / static_cast<double>(s.size()));
  }
  return out;
}

std::vector<double> log_grid(double lo, double hi, int points) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) throw std::invalid_argument("log_grid: need 0 < lo < hi, points >= 2");
  std::vector<double> out(static_cast<std::size_t>(points));
  const double a = std::log10(lo);
  const double b = std::log10(hi);
  for (int i = 0; i < points; ++i) out[static_cast<std::size_t>(i)] = std::pow(10.0, a + (b - a) * i / (points - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<CellKey> expand_cells(const ExperimentConfig& cfg) {
  const std::vector<int> ms = cfg.channel == ChannelKind::kAnalog ? std::vector<int>{0} : cfg.m;
  const std::vector<int> regions = cfg.init_policy == InitPolicy::kFixed ? std::vector<int>{0} : cfg.regions;
  std::vector<CellKey> out;
  for (int k : cfg.k) {
    for (int m : ms) {
      for (double so : cfg.snr_o_db) {
        for (double sc : cfg.snr_c_db) {
          for (int r : regions) {
            for (EstimatorKind e : cfg.effective_estimators()) out.push_back({k, m, so, sc, r, e});
          }
        }
      }
    }
  }
  return out;
}

CellSetup prepare_cell(const ExperimentConfig& cfg, const CellKey& key) {
  CellSetup c;
  c.key = key;
  c.channel = cfg.channel;
  c.sigma2 = calibrate_sigma(bell(), cfg.truth, cfg.area, key.snr_o_db, cfg.calibration_nodes);
  if (cfg.channel == ChannelKind::kAnalog) {
    c.eta2 = calibrate_eta_analog(bell(), cfg.truth, cfg.area, c.sigma2, key.snr_c_db, cfg.calibration_nodes);
  } else {
    c.quantizer = make_uniform_quantizer(key.m, cfg.quantizer_lo, cfg.quantizer_hi);
    c.bits = BitMapper(key.m);
    c.eta2 = calibrate_eta_quantized(bell(), cfg.truth, cfg.area, c.quantizer, c.sigma2, key.snr_c_db,
                                     cfg.calibration_nodes);
  }
  return c;
}

std::uint64_t trial_seed(std::uint64_t base, int index) noexcept {
  return base ^ static_cast<std::uint64_t>(index);
}

SensorNetwork trial_network(const CellSetup& cell, const ExperimentConfig& cfg, int index) {
  const std::uint64_t seed = trial_seed(cfg.seed, index);
  SensorNetwork net =
      deploy_uniform(static_cast<std::size_t>(cell.key.k), cfg.area, derive_seed(seed, Stream::kDeploy));
  net.set_noise_variance(cell.sigma2);
  return net;
}

TrialRecord run_trial(const ExperimentConfig& cfg, const CellSetup& cell, int index) {
  TrialRecord rec;
  rec.index = index;
  rec.seed = trial_seed(cfg.seed, index);
  const SensorNetwork net = trial_network(cell, cfg, index);
  rec.network_digest = net.digest();
  const ObservationVector obs = sample_observations(net, bell(), cfg.truth, derive_seed(rec.seed, Stream::kObserve));
  const std::uint64_t channel_seed = derive_seed(rec.seed, Stream::kChannel);
  rec.init = cell.key.region == 0 ? cfg.init_theta
                                  : initial_region_sample(cell.key.region, cfg.truth,
                                                          derive_seed(rec.seed, Stream::kInit));
  try {
    switch (cell.key.estimator) {
      case EstimatorKind::kNewton:
        rec.result = newton_ml_analog(amplify_forward(obs, cell.eta2, channel_seed), net, bell(), rec.init, cfg.solver);
        break;
      case EstimatorKind::kEm:
        rec.result = em_estimate(quantize_forward(obs, cell.quantizer, cell.bits, cell.eta2, channel_seed), net,
                                 cell.quantizer, cell.bits, bell(), rec.init, cfg.solver);
        break;
      case EstimatorKind::kNr:
        rec.result = nr_estimate_quantized(quantize_forward(obs, cell.quantizer, cell.bits, cell.eta2, channel_seed),
                                           net, cell.quantizer, cell.bits, bell(), rec.init, cfg.solver);
        break;
    }
  } catch (const std::exception& e) {
    rec.result = EstimateResult{};
    rec.result.theta_hat = rec.init;
    rec.result.trace.theta.push_back(rec.init);
    rec.result.trace.loglik.push_back(std::numeric_limits<double>::quiet_NaN());
    rec.result.divergence_reason = std::string("error: ") + e.what();
  }
  // A run that wandered off to non-finite values is scored at its last finite iterate.
  if (!rec.result.theta_hat.allFinite()) {
    rec.result.theta_hat = rec.init;
    for (auto it = rec.result.trace.theta.rbegin(); it != rec.result.trace.theta.rend(); ++it) {
      if (it->allFinite()) {
        rec.result.theta_hat = *it;
        break;
      }
    }
  }
  rec.converged = rec.result.converged;
  rec.se = squared_error(rec.result.theta_hat, cfg.truth.to_vector());
  if (!std::isfinite(rec.se)) rec.se = std::numeric_limits<double>::max();
  return rec;
}

std::optional<ParamVector> cell_crlb(const ExperimentConfig& cfg, const CellSetup& cell, std::string& note) {
  const int networks = std::min(cfg.crlb_networks, cfg.trials);
  ParamVector sum = ParamVector::Zero();
  int used = 0;
  int singular = 0;
  for (int n = 0; n < networks; ++n) {
    const SensorNetwork net = trial_network(cell, cfg, n);
    FisherMatrix f;
    if (cell.channel == ChannelKind::kAnalog) {
      f = fisher_analog(net, bell(), cfg.truth, cell.eta2);
    } else if (cfg.crlb_method == CrlbMethod::kSeries) {
      try {
        f = fisher_quantized_series(net, bell(), cfg.truth, cell.quantizer, cell.bits, cell.eta2, cfg.crlb_zeta);
      } catch (const std::length_error& e) {
        note = std::string("refused: ") + e.what();
        return std::nullopt;
      }
    } else {
      if (cell.bits.alpha() > kMaxQuadratureAlpha) {
        note = "refused: quadrature needs alpha <= " + std::to_string(kMaxQuadratureAlpha);
        return std::nullopt;
      }
      f = fisher_quantized_simpson(net, bell(), cfg.truth, cell.quantizer, cell.bits, cell.eta2, cfg.crlb_nodes);
    }
    if (!f.crlb_diag) {
      ++singular;
      continue;
    }
    sum += *f.crlb_diag;
    ++used;
  }
  if (used == 0) {
    note = "singular Fisher information on every network";
    return std::nullopt;
  }
  note = (cell.channel == ChannelKind::kAnalog ? std::string("analog")
                                                : to_string(cfg.crlb_method) + "(" +
                                                      std::to_string(cfg.crlb_method == CrlbMethod::kSeries
                                                                         ? cfg.crlb_zeta
                                                                         : cfg.crlb_nodes) +
                                                      ")") +
         " over " + std::to_string(used) + " networks";
  if (singular > 0) note += ", " + std::to_string(singular) + " singular skipped";
  return sum / used;
}

namespace {

CellReport summarize(const ExperimentConfig& cfg, const CellSetup& cell, const std::vector<TrialRecord>& recs,
                     const std::vector<double>& tau) {
  CellReport r;
  r.key = cell.key;
  r.channel = cell.channel;
  r.sigma2 = cell.sigma2;
  r.eta2 = cell.eta2;
  r.trials = static_cast<int>(recs.size());

  std::vector<double> se;
  std::vector<ParamVector> good;
  double se_good = 0.0;
  double iterations = 0.0;
  for (const TrialRecord& t : recs) {
    se.push_back(t.se);
    iterations += t.result.iterations;
    if (t.converged) {
      good.push_back(t.result.theta_hat);
      se_good += t.se;
    }
    r.records.push_back({t.index, t.seed, t.network_digest, t.converged, t.result.iterations,
                         t.result.divergence_reason.value_or(""), t.se, t.result.theta_hat});
  }
  r.converged = static_cast<int>(good.size());
  r.se_box = box_stats(se);
  double total = 0.0;
  for (double v : se) total += v;
  r.mse_all = total / static_cast<double>(se.size());
  r.mse_converged = good.empty() ? std::numeric_limits<double>::quiet_NaN() : se_good / static_cast<double>(good.size());
  r.mean_iterations = iterations / static_cast<double>(recs.size());
  if (!good.empty()) {
    for (const ParamVector& v : good) r.mean_converged += v;
    r.mean_converged /= static_cast<double>(good.size());
    if (good.size() > 1) {
      for (const ParamVector& v : good) r.var_converged += (v - r.mean_converged).cwiseAbs2();
      r.var_converged /= static_cast<double>(good.size() - 1);
    }
  }
  r.po = outlier_probability(se, tau);
  if (cfg.crlb_enabled) {
    r.crlb = cell_crlb(cfg, cell, r.crlb_note);
  } else {
    r.crlb_note = "disabled";
  }
  return r;
}

}  // namespace

std::vector<Comparison> compare_estimators(const std::vector<CellReport>& cells) {
  std::vector<Comparison> out;
  for (const CellReport& em : cells) {
    if (em.key.estimator != EstimatorKind::kEm) continue;
    CellKey want = em.key;
    want.estimator = EstimatorKind::kNr;
    const auto nr = std::find_if(cells.begin(), cells.end(), [&](const CellReport& c) { return c.key == want; });
    if (nr == cells.end() || nr->records.size() != em.records.size()) continue;
    Comparison c;
    c.em_key = em.key;
    c.nr_key = want;
    double it_em = 0.0;
    double it_nr = 0.0;
    for (std::size_t i = 0; i < em.records.size(); ++i) {
      if (em.records[i].converged && nr->records[i].converged) {
        ++c.jointly_converged;
        it_em += em.records[i].iterations;
        it_nr += nr->records[i].iterations;
      }
    }
    if (c.jointly_converged > 0) {
      c.em_mean_iterations = it_em / c.jointly_converged;
      c.nr_mean_iterations = it_nr / c.jointly_converged;
    }
    c.em_median_se = em.se_box.median;
    c.nr_median_se = nr->se_box.median;
    out.push_back(c);
  }
  return out;
}

MetricsReport run_campaign(const ExperimentConfig& cfg) {
  cfg.validate();
  MetricsReport report;
  report.seed = cfg.seed;
  report.trials = cfg.trials;
  report.tau = log_grid(cfg.tau_min, cfg.tau_max, cfg.tau_points);
  const int workers = cfg.workers > 0 ? cfg.workers : omp_get_max_threads();

  for (const CellKey& key : expand_cells(cfg)) {
    const CellSetup cell = prepare_cell(cfg, key);
    std::vector<TrialRecord> recs(static_cast<std::size_t>(cfg.trials));
    std::vector<std::exception_ptr> errors(recs.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (int i = 0; i < cfg.trials; ++i) {
      try {
        recs[static_cast<std::size_t>(i)] = run_trial(cfg, cell, i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    report.cells.push_back(summarize(cfg, cell, recs, report.tau));
  }
  report.comparisons = compare_estimators(report.cells);
  return report;
}

}  // namespace fieldest
