#include "socbench/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "socbench/common.hpp"

namespace socbench {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double to_double(const std::string& key, const std::string& tok) {
  errno = 0;
  char* end = nullptr;
  double x = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || errno == ERANGE || !std::isfinite(x))
    throw ConfigError("config key \"" + key + "\": not a finite number: \"" + tok + "\"");
  return x;
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = tokenize(value);
  }
  return cfg;
}

const std::vector<std::string>& Config::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key \"" + key + "\"");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const auto& toks = require(key);
  if (toks.size() != 1)
    throw ConfigError("config key \"" + key + "\": expected a single number");
  return to_double(key, toks[0]);
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long Config::get_long(const std::string& key) const {
  double x = get_double(key);
  long n = static_cast<long>(x);
  if (static_cast<double>(n) != x)
    throw ConfigError("config key \"" + key + "\": expected an integer");
  return n;
}

long Config::get_long(const std::string& key, long fallback) const {
  return has(key) ? get_long(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  const auto& toks = require(key);
  if (toks.size() == 1) {
    if (toks[0] == "true" || toks[0] == "1") return true;
    if (toks[0] == "false" || toks[0] == "0") return false;
  }
  throw ConfigError("config key \"" + key + "\": expected true/false");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::string Config::get_string(const std::string& key) const {
  const auto& toks = require(key);
  std::string out;
  for (size_t n = 0; n < toks.size(); ++n) {
    if (n) out += ' ';
    out += toks[n];
  }
  return out;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

Eigen::VectorXd Config::get_vector(const std::string& key) const {
  const auto& toks = require(key);
  if (toks.empty()) throw ConfigError("config key \"" + key + "\": empty array");
  Eigen::VectorXd out(static_cast<Eigen::Index>(toks.size()));
  for (size_t n = 0; n < toks.size(); ++n)
    out(static_cast<Eigen::Index>(n)) = to_double(key, toks[n]);
  return out;
}

Eigen::VectorXd Config::get_vector(const std::string& key, const Eigen::VectorXd& fallback) const {
  return has(key) ? get_vector(key) : fallback;
}

void Config::set(const std::string& key, const std::string& value) {
  values_[key] = tokenize(value);
}

void Config::set(const std::string& key, double value) { values_[key] = {fmt_double(value)}; }

void Config::set(const std::string& key, const Eigen::VectorXd& value) {
  std::vector<std::string> toks;
  for (Eigen::Index n = 0; n < value.size(); ++n) toks.push_back(fmt_double(value(n)));
  values_[key] = toks;
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back(k);
  return out;
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& [k, toks] : values_) {
    out << k << " =";
    for (const auto& t : toks) out << ' ' << t;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace socbench
