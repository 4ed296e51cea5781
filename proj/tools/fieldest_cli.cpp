// Batch front end: simulate, campaign, crlb, compare.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fieldest/config.hpp"
#include "fieldest/crlb.hpp"
#include "fieldest/experiments.hpp"
#include "fieldest/report_io.hpp"

namespace {

using namespace fieldest;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::optional<int> workers;
  std::optional<int> trials;
  std::optional<int> zeta;
  std::optional<int> nodes;
};

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.output_dir = *o.out;
  if (o.format) cfg.format = *o.format == "csv" ? OutputFormat::kCsv : OutputFormat::kJson;
  if (o.workers) cfg.workers = *o.workers;
  if (o.trials) cfg.trials = *o.trials;
  if (o.zeta) cfg.crlb_zeta = *o.zeta;
  if (o.nodes) cfg.crlb_nodes = *o.nodes;
  cfg.validate();
  return cfg;
}

std::string describe(const CellKey& k) {
  std::ostringstream s;
  s << "K=" << k.k;
  if (k.m > 0) s << " M=" << k.m;
  s << " snr_o=" << k.snr_o_db << " snr_c=" << k.snr_c_db;
  if (k.region > 0) s << " region=" << k.region;
  s << " " << to_string(k.estimator);
  return s.str();
}

int finish_campaign(const ExperimentConfig& cfg, const MetricsReport& report) {
  export_report(report, cfg.output_dir, cfg.format);
  bool diverged = false;
  for (const CellReport& c : report.cells) {
    std::printf("%-48s converged %d/%d  median SE %.6g  MSE %.6g\n", describe(c.key).c_str(), c.converged, c.trials,
                c.se_box.median, c.mse_all);
    if (c.all_diverged()) {
      std::fprintf(stderr, "every trial diverged in cell %s\n", describe(c.key).c_str());
      diverged = true;
    }
  }
  return diverged ? kExitDiverged : kExitOk;
}

int cmd_campaign(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  return finish_campaign(cfg, run_campaign(cfg));
}

int cmd_compare(const Options& o) {
  ExperimentConfig cfg = resolve(o);
  if (cfg.channel != ChannelKind::kQuantized) throw ConfigError("compare needs channel.kind = quantized");
  cfg.estimators = {EstimatorKind::kEm, EstimatorKind::kNr};
  const MetricsReport report = run_campaign(cfg);
  const int code = finish_campaign(cfg, report);
  for (const Comparison& c : report.comparisons) {
    std::printf("%s: jointly converged %d, mean iterations EM %.4g NR %.4g, median SE EM %.6g NR %.6g\n",
                describe(c.em_key).c_str(), c.jointly_converged, c.em_mean_iterations, c.nr_mean_iterations,
                c.em_median_se, c.nr_median_se);
  }
  return code;
}

int cmd_simulate(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const CellSetup cell = prepare_cell(cfg, expand_cells(cfg).front());
  const TrialRecord rec = run_trial(cfg, cell, 0);
  std::filesystem::create_directories(cfg.output_dir);
  write_trace_csv(rec.result, (std::filesystem::path(cfg.output_dir) / "trace.csv").string());
  std::printf("cell %s seed %llu\n", describe(cell.key).c_str(), static_cast<unsigned long long>(rec.seed));
  std::printf("iteration loglik h rho_x rho_y x_c y_c\n");
  for (std::size_t i = 0; i < rec.result.trace.theta.size(); ++i) {
    const ParamVector& t = rec.result.trace.theta[i];
    std::printf("%zu %.10g %.6g %.6g %.6g %.6g %.6g\n", i, rec.result.trace.loglik[i], t[0], t[1], t[2], t[3], t[4]);
  }
  std::printf("converged %s after %d iterations%s%s, SE %.6g\n", rec.converged ? "yes" : "no", rec.result.iterations,
              rec.result.divergence_reason ? ", reason " : "", rec.result.divergence_reason.value_or("").c_str(),
              rec.se);
  return kExitOk;
}

nlohmann::json fisher_json(const FisherMatrix& f) {
  nlohmann::json entries = nlohmann::json::array();
  for (int i = 0; i < kNumParams; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < kNumParams; ++j) row.push_back(f.entries(i, j));
    entries.push_back(row);
  }
  nlohmann::json crlb = nullptr;
  if (f.crlb_diag) {
    crlb = nlohmann::json::object();
    for (int i = 0; i < kNumParams; ++i) crlb[std::string(kParamNames[static_cast<std::size_t>(i)])] = (*f.crlb_diag)[i];
  }
  return {{"source", to_string(f.source)},
          {"setting", f.setting},
          {"condition", std::isfinite(f.condition) ? nlohmann::json(f.condition) : nlohmann::json(nullptr)},
          {"entries", entries},
          {"crlb", crlb}};
}

int cmd_crlb(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const CellSetup cell = prepare_cell(cfg, expand_cells(cfg).front());
  const SensorNetwork net = trial_network(cell, cfg, 0);
  const GaussianBell model;
  nlohmann::json out = {{"cell", describe(cell.key)}, {"sigma2", cell.sigma2}, {"eta2", cell.eta2}};
  std::ostringstream curve;
  curve << "zeta";
  for (auto n : kParamNames) curve << ",crlb_" << n;
  curve << ",max_rel_change\n";

  if (cell.channel == ChannelKind::kAnalog) {
    out["analog"] = fisher_json(fisher_analog(net, model, cfg.truth, cell.eta2));
  } else {
    try {
      const auto scan =
          fisher_quantized_series_scan(net, model, cfg.truth, cell.quantizer, cell.bits, cell.eta2, cfg.crlb_zeta);
      out["series"] = fisher_json(scan.back());
      for (std::size_t z = 0; z < scan.size(); ++z) {
        curve << z;
        for (int i = 0; i < kNumParams; ++i) {
          curve << ',' << (scan[z].crlb_diag ? format_double((*scan[z].crlb_diag)[i]) : std::string("nan"));
        }
        double change = std::numeric_limits<double>::quiet_NaN();
        if (z > 0) {
          change = ((scan[z].entries - scan[z - 1].entries).cwiseAbs().maxCoeff()) /
                   scan[z].entries.cwiseAbs().maxCoeff();
        }
        curve << ',' << format_double(change) << '\n';
      }
    } catch (const std::length_error& e) {
      std::fprintf(stderr, "series refused: %s\n", e.what());
      out["series"] = {{"refused", e.what()}};
    }
    if (cell.bits.alpha() <= kMaxQuadratureAlpha) {
      out["quadrature"] =
          fisher_json(fisher_quantized_simpson(net, model, cfg.truth, cell.quantizer, cell.bits, cell.eta2,
                                               cfg.crlb_nodes));
    } else {
      out["quadrature"] = {{"refused", "alpha exceeds the quadrature limit"}};
    }
  }
  std::filesystem::create_directories(cfg.output_dir);
  const std::filesystem::path dir(cfg.output_dir);
  write_text_file((dir / "crlb.json").string(), out.dump(2) + "\n");
  if (cell.channel == ChannelKind::kQuantized) write_text_file((dir / "zeta_curve.csv").string(), curve.str());
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed field estimation over analog and quantized sensor channels"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Config file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "Base seed");
    sub->add_option("--out", opt.out, "Output directory");
    sub->add_option("--format", opt.format, "Report format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--workers", opt.workers, "Worker threads (0 = all)")->check(CLI::NonNegativeNumber);
    sub->add_option("--trials", opt.trials, "Trials per cell")->check(CLI::PositiveNumber);
    sub->add_option("--zeta", opt.zeta, "Series truncation order")->check(CLI::NonNegativeNumber);
    sub->add_option("--nodes", opt.nodes, "Quadrature nodes per axis (odd)");
  };
  int (*handler)(const Options&) = nullptr;
  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Sub subs[] = {{"simulate", "Run one trial and print its iteration trace", cmd_simulate},
                      {"campaign", "Monte Carlo sweep written to report files", cmd_campaign},
                      {"crlb", "Fisher information and bounds for one deployment", cmd_crlb},
                      {"compare", "EM against NR on matched trials", cmd_compare}};
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    sub->callback([&handler, fn = s.fn] { handler = fn; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    return handler(opt);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  }
}
