#pragma once

#include <cstdint>
#include <vector>

#include "fieldest/field.hpp"

namespace fieldest {

class Quantizer;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Sensor positions plus per-sensor observation noise variance. The variance
/// vector stays empty until calibration.
class SensorNetwork {
 public:
  SensorNetwork(std::vector<Point> positions, Area area);

  std::size_t size() const noexcept { return positions_.size(); }
  const std::vector<Point>& positions() const noexcept { return positions_; }
  const Area& area() const noexcept { return area_; }

  bool calibrated() const noexcept { return !sigma2_.empty(); }
  const std::vector<double>& sigma2() const noexcept { return sigma2_; }

  /// Assigns one variance to every sensor. Zero is accepted so noiseless
  /// observation can be simulated; calibration always produces a positive value.
  void set_noise_variance(double sigma2);
  void set_noise_variance(std::vector<double> sigma2);

  /// Same network with every sensor listed `copies` times.
  SensorNetwork replicated(int copies) const;

  /// FNV-1a over the position bytes; identifies a deployment in trial records.
  std::uint64_t digest() const noexcept;

 private:
  std::vector<Point> positions_;
  Area area_;
  std::vector<double> sigma2_;
};

struct ObservationVector {
  std::vector<double> r;
  std::uint64_t seed = 0;
};

/// K i.i.d. uniform positions over `area`. Throws std::invalid_argument for k == 0.
SensorNetwork deploy_uniform(std::size_t k, const Area& area, std::uint64_t seed);

/// R_k = G_k + W_k with W_k ~ N(0, sigma2_k). Throws std::logic_error on an
/// uncalibrated network.
ObservationVector sample_observations(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                      std::uint64_t seed);

/// sigma^2 giving the requested observation SNR: (integral of G^2) / (A * 10^(snr/10)).
double calibrate_sigma(const FieldModel& model, const FieldParams& params, const Area& area, double snr_o_db,
                       int nodes = kDefaultAreaNodes);

/// eta^2 for the analog channel: (integral of G^2 / A + sigma^2) / 10^(snr/10).
double calibrate_eta_analog(const FieldModel& model, const FieldParams& params, const Area& area, double sigma2,
                            double snr_c_db, int nodes = kDefaultAreaNodes);

/// eta^2 for the quantized channel from the area average of E[q(R)^2], where
/// q(R) takes the reproduction value of the cell R falls in.
double calibrate_eta_quantized(const FieldModel& model, const FieldParams& params, const Area& area,
                               const Quantizer& quantizer, double sigma2, double snr_c_db,
                               int nodes = kDefaultAreaNodes);

}  // namespace fieldest
