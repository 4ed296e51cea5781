#pragma once

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "fieldest/experiments.hpp"

namespace fieldest {

/// File system failure; the message names the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

/// Doubles printed with 17 significant digits so they parse back exactly.
std::string format_double(double v);

/// report.json: the full nested report.
void write_report_json(const MetricsReport& report, const std::string& path);
MetricsReport read_report_json(const std::string& path);

/// cells.csv: k,m,snr_o_db,snr_c_db,region,estimator,statistic,value
void write_cells_csv(const MetricsReport& report, const std::string& path);

/// po_curve.csv: k,m,snr_o_db,snr_c_db,region,estimator,tau,po
void write_po_csv(const MetricsReport& report, const std::string& path);

/// trace.csv: iteration,loglik,h,rho_x,rho_y,x_c,y_c
void write_trace_csv(const EstimateResult& result, const std::string& path);

/// Writes the files selected by `format` into `dir`, creating it if needed.
void export_report(const MetricsReport& report, const std::string& dir, OutputFormat format);

/// Text written to `path` in one go; throws IoError.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fieldest
