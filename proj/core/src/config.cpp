#include "thinfb/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "thinfb/error.hpp"

namespace thinfb {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* end = t.data() + t.size();
  const auto r = std::from_chars(t.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

std::string canonical_value(const std::string& v) {
  double x;
  if (!parse_double(v, x)) return trim(v);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Config Config::parse(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config", e.message() + " at line " + std::to_string(e.line()));
  }
  Config c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      c.set(section, body.data());
      continue;
    }
    for (const auto& [key, leaf] : body) {
      if (!leaf.empty()) throw ValidationError(section + "." + key, "nested keys are not supported");
      c.set(section + "." + key, leaf.data());
    }
  }
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void Config::set(const std::string& key, const std::string& value) {
  if (key.empty()) throw ValidationError("config", "empty key");
  values_[key] = trim(value);
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
  const auto it = values_.find(key);
  return it == values_.end() ? def : it->second;
}

double Config::get_double(const std::string& key, double def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  double x;
  if (!parse_double(it->second, x) || !std::isfinite(x)) throw ValidationError(key, "not a finite number: '" + it->second + "'");
  return x;
}

double Config::get_positive(const std::string& key, double def) const {
  const double x = get_double(key, def);
  if (!(x > 0.0)) throw ValidationError(key, "must be positive");
  return x;
}

int Config::get_int(const std::string& key, int def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string t = trim(it->second);
  int x = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ValidationError(key, "not an integer: '" + t + "'");
  return x;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string t = trim(it->second);
  std::uint64_t x = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ValidationError(key, "not an unsigned integer: '" + t + "'");
  return x;
}

bool Config::get_bool(const std::string& key, bool def) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return def;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError(key, "not a boolean: '" + v + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + canonical_value(v) + "\n";
  return out;
}

std::string Config::to_ini() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) sections[""][k] = v;
    else sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  std::string out;
  for (const auto& [s, kv] : sections) {
    if (!s.empty()) out += "[" + s + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

SolverConfig solver_config(const Config& c) {
  SolverConfig s;
  s.tol = c.get_positive("solver.tol", s.tol);
  s.max_iter = c.get_int("solver.max_iter", s.max_iter);
  if (s.max_iter < 1) throw ValidationError("solver.max_iter", "must be >= 1");
  s.omega = c.get_double("solver.omega", s.omega);
  if (s.omega >= 2.0) throw ValidationError("solver.omega", "must be < 2");
  s.nested = c.get_bool("solver.nested", s.nested);
  s.check_every = c.get_int("solver.check_every", s.check_every);
  if (s.check_every < 1) throw ValidationError("solver.check_every", "must be >= 1");
  return s;
}

LayerConfig layer_config(const Config& c) {
  LayerConfig l;
  l.band_intervals = c.get_int("layer.band_intervals", l.band_intervals);
  l.longitudes = c.get_int("layer.longitudes", l.longitudes);
  l.margin = c.get_positive("layer.margin", l.margin);
  l.eta_cap = c.get_positive("layer.eta_cap", l.eta_cap);
  l.eta_min_exponent = c.get_int("layer.eta_min_exponent", l.eta_min_exponent);
  if (l.band_intervals < 2) throw ValidationError("layer.band_intervals", "must be >= 2");
  if (l.longitudes < 8) throw ValidationError("layer.longitudes", "must be >= 8");
  return l;
}

ReplaceOptions replace_options(const Config& c) {
  ReplaceOptions r;
  r.tol = c.get_positive("replace.tol", r.tol);
  r.psor_sweeps = c.get_int("replace.psor_sweeps", r.psor_sweeps);
  r.max_newton = c.get_int("replace.max_newton", r.max_newton);
  if (r.max_newton < 1) throw ValidationError("replace.max_newton", "must be >= 1");
  return r;
}

DichotomyConfig dichotomy_config(const Config& c) {
  DichotomyConfig d;
  d.eps_tilde = c.get_positive("dichotomy.eps_tilde", d.eps_tilde);
  d.r0 = c.get_positive("dichotomy.r0", d.r0);
  if (!(d.r0 < 1.0)) throw ValidationError("dichotomy.r0", "must lie in (0, 1)");
  d.c_search = c.get_positive("dichotomy.c_search", d.c_search);
  d.e0_factor = c.get_positive("dichotomy.e0_factor", d.e0_factor);
  d.branch_a_c = c.get_positive("dichotomy.branch_a_c", d.branch_a_c);
  d.branch_a_C = c.get_positive("dichotomy.branch_a_C", d.branch_a_C);
  d.allowance_factor = c.get_positive("dichotomy.allowance_factor", d.allowance_factor);
  d.search_evaluations = c.get_int("dichotomy.search_evaluations", d.search_evaluations);
  d.zoom = c.get_bool("dichotomy.zoom", d.zoom);
  d.initial_zooms = c.get_int("dichotomy.initial_zooms", d.initial_zooms);
  if (d.initial_zooms < 0) throw ValidationError("dichotomy.initial_zooms", "must be >= 0");
  d.layer = layer_config(c);
  d.replace = replace_options(c);
  d.solver = solver_config(c);
  return d;
}

SeqParams seq_params(const Config& c) {
  SeqParams s;
  s.A = c.get_double("seq.A", s.A);
  s.A_grow = c.get_double("seq.A_grow", s.A_grow);
  s.a = c.get_double("seq.a", s.a);
  s.gamma = c.get_double("seq.gamma", s.gamma);
  s.e0 = c.get_double("seq.e0", s.e0);
  s.n_steps = c.get_int("seq.steps", s.n_steps);
  // Default w0 saturates the cap.
  s.w0 = c.get_double("seq.w0", s.A * std::pow(s.e0, 1.0 + s.gamma));
  try {
    s.validate();
  } catch (const ValidationError& e) {
    const std::string key = e.field() == "n_steps" ? "steps" : e.field();
    throw ValidationError("seq." + key, std::string(e.what()).substr(e.field().size() + 2));
  }
  return s;
}

}  // namespace thinfb
