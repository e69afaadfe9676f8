#pragma once

#include <string>
#include <utility>
#include <vector>

#include "socbench/dataset.hpp"

namespace socbench {

// Time-series files use the fixed header "k,i_A,v_V,soc"; an absent reference
// SOC is an empty cell. All numeric cells are written with %.17g so values
// round-trip exactly. UTF-8, LF line endings.
void write_timeseries_csv(const std::string& path, const TimeSeriesDataset& d);
TimeSeriesDataset read_timeseries_csv(const std::string& path, double tau_s = 1.0);

// Impedance sweeps use the fixed header "soc_bar,omega_rad_s,re_ohm,im_ohm".
void write_geis_csv(const std::string& path, const GeisDataset& g);
GeisDataset read_geis_csv(const std::string& path);

// Flat "metric,value" report.
void write_metric_report_csv(const std::string& path,
                             const std::vector<std::pair<std::string, double>>& rows);
std::vector<std::pair<std::string, double>> read_metric_report_csv(const std::string& path);

// Shared low-level helpers (also used by the trace and log writers).
std::vector<std::string> split_csv_line(const std::string& line);
double parse_csv_double(const std::string& cell, size_t line_no, const std::string& what);
long parse_csv_long(const std::string& cell, size_t line_no, const std::string& what);

}  // namespace socbench
