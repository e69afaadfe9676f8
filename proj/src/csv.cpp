#include "socbench/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "socbench/common.hpp"

namespace socbench {

namespace {

const char* kTimeSeriesHeader = "k,i_A,v_V,soc";
const char* kGeisHeader = "soc_bar,omega_rad_s,re_ohm,im_ohm";
const char* kReportHeader = "metric,value";

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

// Reads one line, dropping a trailing CR so CRLF inputs still parse.
bool get_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

void expect_header(std::istream& in, const char* want, const std::string& path) {
  std::string line;
  if (!get_line(in, line))
    throw ParseError(path + ": empty file, expected header \"" + want + "\"");
  if (line != want)
    throw ParseError(path + ":1: header \"" + line + "\" does not match expected columns \"" +
                     want + "\"");
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_csv_double(const std::string& cell, size_t line_no, const std::string& what) {
  if (cell.empty())
    throw ParseError("line " + std::to_string(line_no) + ": empty " + what + " cell");
  errno = 0;
  char* end = nullptr;
  double x = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE)
    throw ParseError("line " + std::to_string(line_no) + ": malformed " + what + " \"" + cell +
                     "\"");
  if (!std::isfinite(x))
    throw ParseError("line " + std::to_string(line_no) + ": non-finite " + what + " \"" + cell +
                     "\"");
  return x;
}

long parse_csv_long(const std::string& cell, size_t line_no, const std::string& what) {
  if (cell.empty())
    throw ParseError("line " + std::to_string(line_no) + ": empty " + what + " cell");
  errno = 0;
  char* end = nullptr;
  long x = std::strtol(cell.c_str(), &end, 10);
  if (end != cell.c_str() + cell.size() || errno == ERANGE)
    throw ParseError("line " + std::to_string(line_no) + ": malformed " + what + " \"" + cell +
                     "\"");
  return x;
}

void write_timeseries_csv(const std::string& path, const TimeSeriesDataset& d) {
  d.validate();
  auto out = open_output(path);
  out << kTimeSeriesHeader << '\n';
  for (const auto& s : d.samples) {
    out << s.k << ',' << fmt_double(s.i) << ',' << fmt_double(s.v) << ',';
    if (s.soc) out << fmt_double(*s.soc);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

TimeSeriesDataset read_timeseries_csv(const std::string& path, double tau_s) {
  auto in = open_input(path);
  expect_header(in, kTimeSeriesHeader, path);
  TimeSeriesDataset d;
  d.tau_s = tau_s;
  std::string line;
  size_t line_no = 1;
  while (get_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 4)
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 4 cells, got " +
                       std::to_string(cells.size()));
    Sample s;
    s.k = parse_csv_long(cells[0], line_no, "k");
    s.i = parse_csv_double(cells[1], line_no, "i_A");
    s.v = parse_csv_double(cells[2], line_no, "v_V");
    if (!cells[3].empty()) s.soc = parse_csv_double(cells[3], line_no, "soc");
    d.samples.push_back(s);
  }
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return d;
}

void write_geis_csv(const std::string& path, const GeisDataset& g) {
  auto out = open_output(path);
  out << kGeisHeader << '\n';
  for (const auto& [soc_bar, points] : g)
    for (const auto& p : points)
      out << fmt_double(soc_bar) << ',' << fmt_double(p.omega) << ',' << fmt_double(p.z.real())
          << ',' << fmt_double(p.z.imag()) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

GeisDataset read_geis_csv(const std::string& path) {
  auto in = open_input(path);
  expect_header(in, kGeisHeader, path);
  GeisDataset g;
  std::string line;
  size_t line_no = 1;
  while (get_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 4)
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 4 cells, got " +
                       std::to_string(cells.size()));
    double soc_bar = parse_csv_double(cells[0], line_no, "soc_bar");
    ImpedancePoint p;
    p.omega = parse_csv_double(cells[1], line_no, "omega_rad_s");
    if (p.omega <= 0.0)
      throw ParseError(path + ": line " + std::to_string(line_no) + ": omega_rad_s must be > 0");
    p.z = {parse_csv_double(cells[2], line_no, "re_ohm"),
           parse_csv_double(cells[3], line_no, "im_ohm")};
    g[soc_bar].push_back(p);
  }
  return g;
}

void write_metric_report_csv(const std::string& path,
                             const std::vector<std::pair<std::string, double>>& rows) {
  auto out = open_output(path);
  out << kReportHeader << '\n';
  for (const auto& [name, value] : rows) out << name << ',' << fmt_double(value) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::pair<std::string, double>> read_metric_report_csv(const std::string& path) {
  auto in = open_input(path);
  expect_header(in, kReportHeader, path);
  std::vector<std::pair<std::string, double>> rows;
  std::string line;
  size_t line_no = 1;
  while (get_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2)
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 2 cells");
    rows.emplace_back(cells[0], parse_csv_double(cells[1], line_no, "value"));
  }
  return rows;
}

}  // namespace socbench
