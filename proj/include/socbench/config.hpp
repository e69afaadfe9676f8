#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace socbench {

// Flat key = value text configuration. Values are whitespace-separated
// tokens, so scalar and array entries share one syntax:
//
//   sim.seed = 1
//   cell.theta_ocv = 2.52 4.9 -14 28 -35 28 -14 4 -0.23
//
// '#' starts a comment. Later assignments to the same key override earlier
// ones, which is how CLI overrides are layered on top of file values.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_long(const std::string& key) const;
  long get_long(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  Eigen::VectorXd get_vector(const std::string& key) const;
  Eigen::VectorXd get_vector(const std::string& key, const Eigen::VectorXd& fallback) const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, const Eigen::VectorXd& value);

  // Keys in sorted order, for deterministic serialization.
  std::vector<std::string> keys() const;
  void save(const std::string& path) const;

 private:
  const std::vector<std::string>& require(const std::string& key) const;
  std::map<std::string, std::vector<std::string>> values_;
};

}  // namespace socbench
