#include "fieldest/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fieldest {

std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kNewton:
      return "newton";
    case EstimatorKind::kEm:
      return "em";
    case EstimatorKind::kNr:
      return "nr";
  }
  return "unknown";
}

std::string to_string(ChannelKind k) { return k == ChannelKind::kAnalog ? "analog" : "quantized"; }

std::string to_string(CrlbMethod m) { return m == CrlbMethod::kSeries ? "series" : "quadrature"; }

std::vector<EstimatorKind> ExperimentConfig::effective_estimators() const {
  if (!estimators.empty()) return estimators;
  return {channel == ChannelKind::kAnalog ? EstimatorKind::kNewton : EstimatorKind::kEm};
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (k.empty() || m.empty() || snr_o_db.empty() || snr_c_db.empty() || regions.empty()) {
    fail("sweeps must not be empty");
  }
  for (int v : k) {
    if (v < 1) fail("network.k entries must be >= 1");
  }
  if (channel == ChannelKind::kQuantized) {
    for (int v : m) {
      if (v < 2 || (v & (v - 1)) != 0) fail("channel.m entries must be powers of two >= 2");
    }
    if (!(quantizer_hi > quantizer_lo)) fail("channel.quantizer_hi must exceed channel.quantizer_lo");
  }
  for (double v : snr_o_db) {
    if (!std::isfinite(v)) fail("channel.snr_o_db must be finite");
  }
  for (double v : snr_c_db) {
    if (!std::isfinite(v)) fail("channel.snr_c_db must be finite");
  }
  if (calibration_nodes < 11 || calibration_nodes % 2 == 0) fail("channel.calibration_nodes must be odd and >= 11");
  for (EstimatorKind e : effective_estimators()) {
    const bool analog = channel == ChannelKind::kAnalog;
    if (analog != (e == EstimatorKind::kNewton)) {
      fail("estimator '" + to_string(e) + "' does not apply to the " + to_string(channel) + " channel");
    }
  }
  try {
    solver.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (trials < 1) fail("campaign.trials must be >= 1");
  if (workers < 0) fail("campaign.workers must be >= 0");
  for (int r : regions) {
    if (r < 1 || r > 8) fail("init.region entries must lie in 1..8");
  }
  try {
    (void)FieldParams::from_vector(init_theta);
  } catch (const std::invalid_argument& e) {
    fail(std::string("init.theta: ") + e.what());
  }
  if (crlb_zeta < 0) fail("crlb.zeta must be >= 0");
  if (crlb_nodes < 21 || crlb_nodes % 2 == 0) fail("crlb.nodes must be odd and >= 21");
  if (crlb_networks < 1) fail("crlb.networks must be >= 1");
  if (!(tau_min > 0.0) || !(tau_max > tau_min) || tau_points < 2) {
    fail("metrics.tau_* must describe a positive increasing grid with >= 2 points");
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

long long to_integer(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

int to_int(const std::string& key, const std::string& s) {
  const long long v = to_integer(key, s);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw ConfigError(key + ": '" + s + "' is out of range");
  }
  return static_cast<int>(v);
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

template <typename T, typename F>
std::vector<T> list_of(const std::string& key, const std::string& value, F convert) {
  std::vector<T> out;
  for (const std::string& item : split_list(value)) {
    if (item.empty()) throw ConfigError(key + ": empty list entry");
    out.push_back(convert(key, item));
  }
  return out;
}

EstimatorKind to_estimator(const std::string& key, const std::string& s) {
  if (s == "newton") return EstimatorKind::kNewton;
  if (s == "em") return EstimatorKind::kEm;
  if (s == "nr") return EstimatorKind::kNr;
  throw ConfigError(key + ": unknown estimator '" + s + "' (newton, em, nr)");
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  ParamVector truth = cfg.truth.to_vector();
  double area[4] = {cfg.area.x_min(), cfg.area.x_max(), cfg.area.y_min(), cfg.area.y_max()};

  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto scalar = [](double& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = to_double(k, v); };
  };
  auto integer = [](int& dst) -> Setter {
    return [&dst](const std::string& k, const std::string& v) { dst = to_int(k, v); };
  };
  const std::map<std::string, Setter> setters{
      {"field.h", scalar(truth[kH])},
      {"field.rho_x", scalar(truth[kRhoX])},
      {"field.rho_y", scalar(truth[kRhoY])},
      {"field.x_c", scalar(truth[kXc])},
      {"field.y_c", scalar(truth[kYc])},
      {"area.x_min", scalar(area[0])},
      {"area.x_max", scalar(area[1])},
      {"area.y_min", scalar(area[2])},
      {"area.y_max", scalar(area[3])},
      {"network.k", [&](const std::string& k, const std::string& v) { cfg.k = list_of<int>(k, v, to_int); }},
      {"channel.kind",
       [&](const std::string& k, const std::string& v) {
         if (v == "analog") {
           cfg.channel = ChannelKind::kAnalog;
         } else if (v == "quantized") {
           cfg.channel = ChannelKind::kQuantized;
         } else {
           throw ConfigError(k + ": expected analog or quantized, got '" + v + "'");
         }
       }},
      {"channel.m", [&](const std::string& k, const std::string& v) { cfg.m = list_of<int>(k, v, to_int); }},
      {"channel.quantizer_lo", scalar(cfg.quantizer_lo)},
      {"channel.quantizer_hi", scalar(cfg.quantizer_hi)},
      {"channel.snr_o_db",
       [&](const std::string& k, const std::string& v) { cfg.snr_o_db = list_of<double>(k, v, to_double); }},
      {"channel.snr_c_db",
       [&](const std::string& k, const std::string& v) { cfg.snr_c_db = list_of<double>(k, v, to_double); }},
      {"channel.calibration_nodes", integer(cfg.calibration_nodes)},
      {"estimator.kind",
       [&](const std::string& k, const std::string& v) {
         cfg.estimators = list_of<EstimatorKind>(k, v, to_estimator);
       }},
      {"solver.tol", scalar(cfg.solver.tol)},
      {"solver.max_outer", integer(cfg.solver.max_outer)},
      {"solver.max_inner", integer(cfg.solver.max_inner)},
      {"solver.damping", integer(cfg.solver.damping)},
      {"solver.ridge", scalar(cfg.solver.ridge)},
      {"campaign.trials", integer(cfg.trials)},
      {"campaign.seed",
       [&](const std::string& k, const std::string& v) {
         const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), cfg.seed);
         if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(k + ": '" + v + "' is not a u64");
       }},
      {"campaign.workers", integer(cfg.workers)},
      {"init.policy",
       [&](const std::string& k, const std::string& v) {
         if (v == "fixed") {
           cfg.init_policy = InitPolicy::kFixed;
         } else if (v == "region") {
           cfg.init_policy = InitPolicy::kRegion;
         } else {
           throw ConfigError(k + ": expected fixed or region, got '" + v + "'");
         }
       }},
      {"init.theta",
       [&](const std::string& k, const std::string& v) {
         const auto vals = list_of<double>(k, v, to_double);
         if (vals.size() != kNumParams) throw ConfigError(k + ": needs 5 values h, rho_x, rho_y, x_c, y_c");
         for (int i = 0; i < kNumParams; ++i) cfg.init_theta[i] = vals[static_cast<std::size_t>(i)];
       }},
      {"init.region", [&](const std::string& k, const std::string& v) { cfg.regions = list_of<int>(k, v, to_int); }},
      {"output.dir", [&](const std::string&, const std::string& v) { cfg.output_dir = v; }},
      {"output.format",
       [&](const std::string& k, const std::string& v) {
         if (v == "csv") {
           cfg.format = OutputFormat::kCsv;
         } else if (v == "json") {
           cfg.format = OutputFormat::kJson;
         } else if (v == "both") {
           cfg.format = OutputFormat::kBoth;
         } else {
           throw ConfigError(k + ": expected csv, json or both, got '" + v + "'");
         }
       }},
      {"crlb.enabled", [&](const std::string& k, const std::string& v) { cfg.crlb_enabled = to_bool(k, v); }},
      {"crlb.method",
       [&](const std::string& k, const std::string& v) {
         if (v == "quadrature") {
           cfg.crlb_method = CrlbMethod::kQuadrature;
         } else if (v == "series") {
           cfg.crlb_method = CrlbMethod::kSeries;
         } else {
           throw ConfigError(k + ": expected quadrature or series, got '" + v + "'");
         }
       }},
      {"crlb.zeta", integer(cfg.crlb_zeta)},
      {"crlb.nodes", integer(cfg.crlb_nodes)},
      {"crlb.networks", integer(cfg.crlb_networks)},
      {"metrics.tau_min", scalar(cfg.tau_min)},
      {"metrics.tau_max", scalar(cfg.tau_max)},
      {"metrics.tau_points", integer(cfg.tau_points)},
  };

  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(where + key + ": missing value");
    try {
      it->second(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }

  try {
    cfg.truth = FieldParams::from_vector(truth);
    cfg.area = Area(area[0], area[1], area[2], area[3]);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!seen.count("init.policy") && seen.count("init.region")) cfg.init_policy = InitPolicy::kRegion;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

}  // namespace fieldest
