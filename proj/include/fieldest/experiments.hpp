#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fieldest/config.hpp"
#include "fieldest/crlb.hpp"
#include "fieldest/estimators.hpp"

namespace fieldest {

/// sum_i (theta_hat_i - theta_i)^2.
double squared_error(const ParamVector& theta_hat, const ParamVector& theta_true);

/// Smallest spread an initial-region draw may take.
inline constexpr double kMinInitialSpread = 1e-3;

/// Initial guess from region `region` (1..8): every parameter uniform between
/// t(1 - (region-1)/8) and t(1 - region/8), spreads floored at kMinInitialSpread.
ParamVector initial_region_sample(int region, const FieldParams& truth, std::uint64_t seed);

/// Box-plot summary with linearly interpolated quartiles and 1.5 IQR whiskers.
struct BoxStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;  ///< smallest sample >= q1 - 1.5 IQR
  double whisker_hi = 0.0;  ///< largest sample <= q3 + 1.5 IQR
  std::vector<double> outliers;  ///< samples outside the whiskers, ascending
};

/// Linear-interpolation quantile of sorted data, p in [0, 1].
double sorted_quantile(std::span<const double> sorted, double p);

/// Throws std::invalid_argument on an empty sample.
BoxStats box_stats(std::span<const double> samples);

/// Fraction of samples strictly above each tau.
std::vector<double> outlier_probability(std::span<const double> se, std::span<const double> tau);

/// `points` log-spaced values from lo to hi inclusive.
std::vector<double> log_grid(double lo, double hi, int points);

/// One point of the campaign sweep.
struct CellKey {
  int k = 0;
  int m = 0;       ///< 0 on the analog channel
  double snr_o_db = 0.0;
  double snr_c_db = 0.0;
  int region = 0;  ///< 0 when the initial guess is fixed
  EstimatorKind estimator = EstimatorKind::kEm;

  friend bool operator==(const CellKey&, const CellKey&) = default;
};

/// Cell keys of a config in sweep order (k, m, snr_o, snr_c, region, estimator).
std::vector<CellKey> expand_cells(const ExperimentConfig& cfg);

/// Calibrated channel for one cell. The quantizer is meaningful only when
/// the channel is quantized.
struct CellSetup {
  CellKey key;
  ChannelKind channel = ChannelKind::kQuantized;
  double sigma2 = 0.0;
  double eta2 = 0.0;
  Quantizer quantizer = make_uniform_quantizer(2, 0.0, 1.0);
  BitMapper bits{2};
};

CellSetup prepare_cell(const ExperimentConfig& cfg, const CellKey& key);

/// Seed of trial `index`; identical across cells so they share deployments and noise.
std::uint64_t trial_seed(std::uint64_t base, int index) noexcept;

struct TrialRecord {
  int index = 0;
  std::uint64_t seed = 0;
  std::uint64_t network_digest = 0;
  ParamVector init = ParamVector::Zero();
  EstimateResult result;
  double se = 0.0;
  bool converged = false;
};

/// Deploy, observe, transmit, estimate. Estimator failures are recorded, never thrown.
TrialRecord run_trial(const ExperimentConfig& cfg, const CellSetup& cell, int index);

/// Deployment used by trial `index` of a cell, with its noise variance set.
SensorNetwork trial_network(const CellSetup& cell, const ExperimentConfig& cfg, int index);

/// The part of a trial kept in a report.
struct TrialSummary {
  int index = 0;
  std::uint64_t seed = 0;
  std::uint64_t network_digest = 0;
  bool converged = false;
  int iterations = 0;
  std::string divergence_reason;
  double se = 0.0;
  ParamVector theta_hat = ParamVector::Zero();
};

struct CellReport {
  CellKey key;
  ChannelKind channel = ChannelKind::kQuantized;
  double sigma2 = 0.0;
  double eta2 = 0.0;
  int trials = 0;
  int converged = 0;
  BoxStats se_box;
  double mse_all = 0.0;        ///< mean SE over every trial
  double mse_converged = 0.0;  ///< mean SE over converged trials, NaN if none
  ParamVector mean_converged = ParamVector::Zero();
  ParamVector var_converged = ParamVector::Zero();  ///< unbiased per-parameter variance
  double mean_iterations = 0.0;
  std::optional<ParamVector> crlb;  ///< mean per-network CRLB diagonal
  std::string crlb_note;             ///< provenance, or why the bound is missing
  std::vector<double> po;            ///< P[SE > tau] on the report tau grid
  std::vector<TrialSummary> records;

  bool all_diverged() const noexcept { return converged == 0; }
};

/// EM against NR on the same trials of one sweep point.
struct Comparison {
  CellKey em_key;
  CellKey nr_key;
  int jointly_converged = 0;
  double em_mean_iterations = 0.0;  ///< over jointly converged trials
  double nr_mean_iterations = 0.0;
  double em_median_se = 0.0;  ///< over all trials
  double nr_median_se = 0.0;
};

struct MetricsReport {
  int format_version = 1;
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<double> tau;
  std::vector<CellReport> cells;
  std::vector<Comparison> comparisons;
};

/// Mean CRLB diagonal over the first `cfg.crlb_networks` trial deployments.
/// Empty with an explanatory note when any Fisher matrix is singular or the
/// series is refused.
std::optional<ParamVector> cell_crlb(const ExperimentConfig& cfg, const CellSetup& cell, std::string& note);

/// Runs every cell; trials run concurrently and are reduced in index order,
/// so the report does not depend on the worker count.
MetricsReport run_campaign(const ExperimentConfig& cfg);

/// EM/NR head-to-head entries for every pair of cells differing only in estimator.
std::vector<Comparison> compare_estimators(const std::vector<CellReport>& cells);

}  // namespace fieldest
