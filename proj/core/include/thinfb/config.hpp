#pragma once

// Experiment configuration: INI text ("[section]" then "key = value"),
// addressed as "section.key". The hash is FNV-1a 64 over the canonical form
// (keys sorted, numbers reprinted with 17 significant digits), so it does not
// depend on key order or on how a number was spelled.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "thinfb/dichotomy.hpp"
#include "thinfb/seqlab.hpp"
#include "thinfb/sphere_layer.hpp"
#include "thinfb/vi_solver.hpp"

namespace thinfb {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

class Config {
 public:
  static Config parse(const std::string& text);  // throws ValidationError
  static Config load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& def) const;
  double get_double(const std::string& key, double def) const;
  double get_positive(const std::string& key, double def) const;  // > 0 or ValidationError naming key
  int get_int(const std::string& key, int def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;
  bool get_bool(const std::string& key, bool def) const;

  std::string canonical() const;
  std::uint64_t hash_value() const { return fnv1a64(canonical()); }
  std::string hash() const { return hex64(hash_value()); }
  std::string to_ini() const;

 private:
  std::map<std::string, std::string> values_;
};

SolverConfig solver_config(const Config& c);
LayerConfig layer_config(const Config& c);
ReplaceOptions replace_options(const Config& c);
DichotomyConfig dichotomy_config(const Config& c);
SeqParams seq_params(const Config& c);

}  // namespace thinfb
