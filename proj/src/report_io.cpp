#include "fieldest/report_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace fieldest {

using nlohmann::json;

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json param_json(const ParamVector& v) {
  json o = json::object();
  for (int i = 0; i < kNumParams; ++i) o[std::string(kParamNames[static_cast<std::size_t>(i)])] = number(v[i]);
  return o;
}

ParamVector param_from(const json& j) {
  ParamVector v;
  for (int i = 0; i < kNumParams; ++i) v[i] = number_from(j.at(std::string(kParamNames[static_cast<std::size_t>(i)])));
  return v;
}

EstimatorKind estimator_from(const std::string& s) {
  if (s == "newton") return EstimatorKind::kNewton;
  if (s == "em") return EstimatorKind::kEm;
  if (s == "nr") return EstimatorKind::kNr;
  throw std::invalid_argument("unknown estimator '" + s + "' in report");
}

json key_json(const CellKey& k) {
  return {{"k", k.k},
          {"m", k.m},
          {"snr_o_db", k.snr_o_db},
          {"snr_c_db", k.snr_c_db},
          {"region", k.region},
          {"estimator", to_string(k.estimator)}};
}

CellKey key_from(const json& j) {
  return {j.at("k").get<int>(),           j.at("m").get<int>(),      j.at("snr_o_db").get<double>(),
          j.at("snr_c_db").get<double>(), j.at("region").get<int>(), estimator_from(j.at("estimator"))};
}

json box_json(const BoxStats& b) {
  json out = json::array();
  for (double v : b.outliers) out.push_back(number(v));
  return {{"median", number(b.median)},         {"q1", number(b.q1)},
          {"q3", number(b.q3)},                 {"whisker_lo", number(b.whisker_lo)},
          {"whisker_hi", number(b.whisker_hi)}, {"outliers", out}};
}

BoxStats box_from(const json& j) {
  BoxStats b;
  b.median = number_from(j.at("median"));
  b.q1 = number_from(j.at("q1"));
  b.q3 = number_from(j.at("q3"));
  b.whisker_lo = number_from(j.at("whisker_lo"));
  b.whisker_hi = number_from(j.at("whisker_hi"));
  for (const json& v : j.at("outliers")) b.outliers.push_back(number_from(v));
  return b;
}

std::string key_csv(const CellKey& k) {
  return std::to_string(k.k) + "," + std::to_string(k.m) + "," + format_double(k.snr_o_db) + "," +
         format_double(k.snr_c_db) + "," + std::to_string(k.region) + "," + to_string(k.estimator);
}

constexpr const char* kKeyColumns = "k,m,snr_o_db,snr_c_db,region,estimator";

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json report_to_json(const MetricsReport& report) {
  json cells = json::array();
  for (const CellReport& c : report.cells) {
    json records = json::array();
    for (const TrialSummary& t : c.records) {
      records.push_back({{"index", t.index},
                         {"seed", t.seed},
                         {"network_digest", t.network_digest},
                         {"converged", t.converged},
                         {"iterations", t.iterations},
                         {"divergence_reason", t.divergence_reason},
                         {"se", number(t.se)},
                         {"theta_hat", param_json(t.theta_hat)}});
    }
    json po = json::array();
    for (double v : c.po) po.push_back(number(v));
    cells.push_back({{"key", key_json(c.key)},
                     {"channel", to_string(c.channel)},
                     {"sigma2", number(c.sigma2)},
                     {"eta2", number(c.eta2)},
                     {"trials", c.trials},
                     {"converged", c.converged},
                     {"se_box", box_json(c.se_box)},
                     {"mse_all", number(c.mse_all)},
                     {"mse_converged", number(c.mse_converged)},
                     {"mean_converged", param_json(c.mean_converged)},
                     {"var_converged", param_json(c.var_converged)},
                     {"mean_iterations", number(c.mean_iterations)},
                     {"crlb", c.crlb ? param_json(*c.crlb) : json(nullptr)},
                     {"crlb_note", c.crlb_note},
                     {"po", po},
                     {"records", records}});
  }
  json comparisons = json::array();
  for (const Comparison& c : report.comparisons) {
    comparisons.push_back({{"em_key", key_json(c.em_key)},
                           {"nr_key", key_json(c.nr_key)},
                           {"jointly_converged", c.jointly_converged},
                           {"em_mean_iterations", number(c.em_mean_iterations)},
                           {"nr_mean_iterations", number(c.nr_mean_iterations)},
                           {"em_median_se", number(c.em_median_se)},
                           {"nr_median_se", number(c.nr_median_se)}});
  }
  json tau = json::array();
  for (double t : report.tau) tau.push_back(number(t));
  return {{"format_version", report.format_version},
          {"seed", report.seed},
          {"trials", report.trials},
          {"tau", tau},
          {"cells", cells},
          {"comparisons", comparisons}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.format_version = j.at("format_version").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trials = j.at("trials").get<int>();
  for (const json& t : j.at("tau")) r.tau.push_back(number_from(t));
  for (const json& cj : j.at("cells")) {
    CellReport c;
    c.key = key_from(cj.at("key"));
    c.channel = cj.at("channel").get<std::string>() == "analog" ? ChannelKind::kAnalog : ChannelKind::kQuantized;
    c.sigma2 = number_from(cj.at("sigma2"));
    c.eta2 = number_from(cj.at("eta2"));
    c.trials = cj.at("trials").get<int>();
    c.converged = cj.at("converged").get<int>();
    c.se_box = box_from(cj.at("se_box"));
    c.mse_all = number_from(cj.at("mse_all"));
    c.mse_converged = number_from(cj.at("mse_converged"));
    c.mean_converged = param_from(cj.at("mean_converged"));
    c.var_converged = param_from(cj.at("var_converged"));
    c.mean_iterations = number_from(cj.at("mean_iterations"));
    if (!cj.at("crlb").is_null()) c.crlb = param_from(cj.at("crlb"));
    c.crlb_note = cj.at("crlb_note").get<std::string>();
    for (const json& v : cj.at("po")) c.po.push_back(number_from(v));
    for (const json& tj : cj.at("records")) {
      TrialSummary t;
      t.index = tj.at("index").get<int>();
      t.seed = tj.at("seed").get<std::uint64_t>();
      t.network_digest = tj.at("network_digest").get<std::uint64_t>();
      t.converged = tj.at("converged").get<bool>();
      t.iterations = tj.at("iterations").get<int>();
      t.divergence_reason = tj.at("divergence_reason").get<std::string>();
      t.se = number_from(tj.at("se"));
      t.theta_hat = param_from(tj.at("theta_hat"));
      c.records.push_back(std::move(t));
    }
    r.cells.push_back(std::move(c));
  }
  for (const json& cj : j.at("comparisons")) {
    Comparison c;
    c.em_key = key_from(cj.at("em_key"));
    c.nr_key = key_from(cj.at("nr_key"));
    c.jointly_converged = cj.at("jointly_converged").get<int>();
    c.em_mean_iterations = number_from(cj.at("em_mean_iterations"));
    c.nr_mean_iterations = number_from(cj.at("nr_mean_iterations"));
    c.em_median_se = number_from(cj.at("em_median_se"));
    c.nr_median_se = number_from(cj.at("nr_median_se"));
    r.comparisons.push_back(c);
  }
  return r;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  f.close();
  if (!f) throw IoError("failed writing '" + path + "'");
}

void write_report_json(const MetricsReport& report, const std::string& path) {
  write_text_file(path, report_to_json(report).dump(2) + "\n");
}

MetricsReport read_report_json(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  try {
    return report_from_json(json::parse(f));
  } catch (const json::exception& e) {
    throw IoError("'" + path + "' is not a valid report: " + e.what());
  }
}

void write_cells_csv(const MetricsReport& report, const std::string& path) {
  std::ostringstream out;
  out << kKeyColumns << ",statistic,value\n";
  for (const CellReport& c : report.cells) {
    const std::string key = key_csv(c.key);
    auto row = [&](const std::string& name, double v) { out << key << ',' << name << ',' << format_double(v) << '\n'; };
    row("trials", c.trials);
    row("converged", c.converged);
    row("sigma2", c.sigma2);
    row("eta2", c.eta2);
    row("median_se", c.se_box.median);
    row("q1_se", c.se_box.q1);
    row("q3_se", c.se_box.q3);
    row("whisker_lo_se", c.se_box.whisker_lo);
    row("whisker_hi_se", c.se_box.whisker_hi);
    row("outlier_count", static_cast<double>(c.se_box.outliers.size()));
    row("mse_all", c.mse_all);
    row("mse_converged", c.mse_converged);
    row("mean_iterations", c.mean_iterations);
    for (int i = 0; i < kNumParams; ++i) {
      const std::string p(kParamNames[static_cast<std::size_t>(i)]);
      row("mean_" + p, c.mean_converged[i]);
      row("var_" + p, c.var_converged[i]);
      row("crlb_" + p, c.crlb ? (*c.crlb)[i] : std::numeric_limits<double>::quiet_NaN());
    }
  }
  write_text_file(path, out.str());
}

void write_po_csv(const MetricsReport& report, const std::string& path) {
  std::ostringstream out;
  out << kKeyColumns << ",tau,po\n";
  for (const CellReport& c : report.cells) {
    const std::string key = key_csv(c.key);
    for (std::size_t i = 0; i < report.tau.size() && i < c.po.size(); ++i) {
      out << key << ',' << format_double(report.tau[i]) << ',' << format_double(c.po[i]) << '\n';
    }
  }
  write_text_file(path, out.str());
}

void write_trace_csv(const EstimateResult& result, const std::string& path) {
  std::ostringstream out;
  out << "iteration,loglik";
  for (auto name : kParamNames) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < result.trace.theta.size(); ++i) {
    out << i << ',' << format_double(i < result.trace.loglik.size() ? result.trace.loglik[i]
                                                                    : std::numeric_limits<double>::quiet_NaN());
    for (int p = 0; p < kNumParams; ++p) out << ',' << format_double(result.trace.theta[i][p]);
    out << '\n';
  }
  write_text_file(path, out.str());
}

void export_report(const MetricsReport& report, const std::string& dir, OutputFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);
  if (format != OutputFormat::kCsv) write_report_json(report, (base / "report.json").string());
  if (format != OutputFormat::kJson) {
    write_cells_csv(report, (base / "cells.csv").string());
    write_po_csv(report, (base / "po_curve.csv").string());
  }
}

}  // namespace fieldest
