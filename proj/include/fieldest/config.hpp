#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fieldest/channel.hpp"
#include "fieldest/estimators.hpp"
#include "fieldest/field.hpp"

namespace fieldest {

enum class EstimatorKind { kNewton, kEm, kNr };
enum class InitPolicy { kFixed, kRegion };
enum class CrlbMethod { kQuadrature, kSeries };
enum class OutputFormat { kBoth, kCsv, kJson };

std::string to_string(EstimatorKind k);
std::string to_string(ChannelKind k);
std::string to_string(CrlbMethod m);

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a campaign needs. List-valued members are sweeps; a campaign
/// runs the cross product of all of them.
struct ExperimentConfig {
  FieldParams truth = FieldParams::reference();
  Area area = Area::square(8.0);

  std::vector<int> k{40};
  ChannelKind channel = ChannelKind::kQuantized;
  std::vector<int> m{8};
  double quantizer_lo = 0.0;
  double quantizer_hi = 12.0;
  std::vector<double> snr_o_db{15.0};
  std::vector<double> snr_c_db{15.0};
  int calibration_nodes = kDefaultAreaNodes;

  /// Empty means the natural choice for the channel: newton for analog, em for quantized.
  std::vector<EstimatorKind> estimators;
  SolverConfig solver;

  int trials = 1000;
  std::uint64_t seed = 1;
  int workers = 0;  ///< 0 lets OpenMP decide

  InitPolicy init_policy = InitPolicy::kFixed;
  ParamVector init_theta = (ParamVector() << 9.0, 1.5, 1.5, 3.0, 3.0).finished();
  std::vector<int> regions{1};

  std::string output_dir = "out";
  OutputFormat format = OutputFormat::kBoth;

  bool crlb_enabled = true;
  CrlbMethod crlb_method = CrlbMethod::kQuadrature;
  int crlb_zeta = 8;
  int crlb_nodes = 81;
  int crlb_networks = 10;  ///< trial deployments the per-cell bound is averaged over

  double tau_min = 1e-3;
  double tau_max = 1e2;
  int tau_points = 50;

  /// Estimators actually run, after applying the channel default.
  std::vector<EstimatorKind> effective_estimators() const;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

/// Parses the `key = value` format: one assignment per line, `#` starts a
/// comment, sweeps are comma separated. Unknown or repeated keys are errors.
ExperimentConfig parse_config(std::string_view text);

/// Reads and parses a config file; a missing file is a ConfigError.
ExperimentConfig load_config(const std::string& path);

}  // namespace fieldest
