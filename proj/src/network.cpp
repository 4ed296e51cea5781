#include "fieldest/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "fieldest/channel.hpp"
#include "fieldest/rng.hpp"

namespace fieldest {

SensorNetwork::SensorNetwork(std::vector<Point> positions, Area area)
    : positions_(std::move(positions)), area_(area) {
  if (positions_.empty()) throw std::invalid_argument("SensorNetwork: need at least one sensor");
  for (const Point& p : positions_) {
    if (!area_.contains(p.x, p.y)) throw std::invalid_argument("SensorNetwork: sensor outside the area");
  }
}

void SensorNetwork::set_noise_variance(double sigma2) {
  set_noise_variance(std::vector<double>(positions_.size(), sigma2));
}

void SensorNetwork::set_noise_variance(std::vector<double> sigma2) {
  if (sigma2.size() != positions_.size()) throw std::invalid_argument("SensorNetwork: variance count != K");
  for (double v : sigma2) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("SensorNetwork: bad noise variance");
  }
  sigma2_ = std::move(sigma2);
}

SensorNetwork SensorNetwork::replicated(int copies) const {
  std::vector<Point> pos;
  std::vector<double> s2;
  for (int c = 0; c < copies; ++c) {
    pos.insert(pos.end(), positions_.begin(), positions_.end());
    s2.insert(s2.end(), sigma2_.begin(), sigma2_.end());
  }
  SensorNetwork out(std::move(pos), area_);
  if (calibrated()) out.set_noise_variance(std::move(s2));
  return out;
}

std::uint64_t SensorNetwork::digest() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Point& p : positions_) {
    unsigned char bytes[2 * sizeof(double)];
    std::memcpy(bytes, &p.x, sizeof(double));
    std::memcpy(bytes + sizeof(double), &p.y, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

SensorNetwork deploy_uniform(std::size_t k, const Area& area, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("deploy_uniform: k must be >= 1");
  Rng rng(seed);
  std::vector<Point> pos(k);
  for (Point& p : pos) {
    p.x = rng.uniform(area.x_min(), area.x_max());
    p.y = rng.uniform(area.y_min(), area.y_max());
  }
  return {std::move(pos), area};
}

ObservationVector sample_observations(const SensorNetwork& net, const FieldModel& model, const FieldParams& params,
                                      std::uint64_t seed) {
  if (!net.calibrated()) throw std::logic_error("sample_observations: network noise variance not calibrated");
  Rng rng(seed);
  const ParamVector theta = params.to_vector();
  ObservationVector obs;
  obs.seed = seed;
  obs.r.resize(net.size());
  for (std::size_t k = 0; k < net.size(); ++k) {
    const Point& p = net.positions()[k];
    obs.r[k] = model.value(theta, p.x, p.y) + std::sqrt(net.sigma2()[k]) * rng.normal();
  }
  return obs;
}

double calibrate_sigma(const FieldModel& model, const FieldParams& params, const Area& area, double snr_o_db,
                       int nodes) {
  if (!std::isfinite(snr_o_db)) throw std::invalid_argument("calibrate_sigma: SNR must be finite");
  const double energy = field_squared_integral(model, params, area, nodes);
  return energy / (area.measure() * std::pow(10.0, snr_o_db / 10.0));
}

double calibrate_eta_analog(const FieldModel& model, const FieldParams& params, const Area& area, double sigma2,
                            double snr_c_db, int nodes) {
  if (!std::isfinite(snr_c_db)) throw std::invalid_argument("calibrate_eta_analog: SNR must be finite");
  const double energy = field_squared_integral(model, params, area, nodes);
  return (energy / area.measure() + sigma2) / std::pow(10.0, snr_c_db / 10.0);
}

double calibrate_eta_quantized(const FieldModel& model, const FieldParams& params, const Area& area,
                               const Quantizer& quantizer, double sigma2, double snr_c_db, int nodes) {
  if (!std::isfinite(snr_c_db)) throw std::invalid_argument("calibrate_eta_quantized: SNR must be finite");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("calibrate_eta_quantized: sigma2 must be positive");
  const double sigma = std::sqrt(sigma2);
  const ParamVector theta = params.to_vector();
  const auto nu = quantizer.reproduction();
  const double second_moment = integrate_area(area, nodes, [&](double x, double y) {
    const auto p = level_probabilities(quantizer, model.value(theta, x, y), sigma);
    double m2 = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) m2 += nu[j] * nu[j] * p[j];
    return m2;
  });
  return second_moment / (area.measure() * std::pow(10.0, snr_c_db / 10.0));
}

}  // namespace fieldest
