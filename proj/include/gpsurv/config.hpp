#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gpsurv/core.hpp"

namespace gpsurv {

enum class ParamType { integer, real, string, boolean, int_list, real_list };

struct ParamSpec {
  std::string name;
  ParamType type;
  bool required = false;
  nlohmann::json fallback;  // used when not required and absent
};

inline const std::vector<std::string>& known_commands() {
  static const std::vector<std::string> c{"simulate", "verify-bounds", "test-stat",
                                          "kl",       "consistency",   "check-assumptions"};
  return c;
}

inline const std::vector<ParamSpec>& command_schema(const std::string& command) {
  using T = ParamType;
  using J = nlohmann::json;
  static const std::map<std::string, std::vector<ParamSpec>> table{
      {"simulate",
       {{"n", T::integer, true, {}},
        {"omega0", T::real, true, {}},
        {"kernel", T::string, true, {}},
        {"lengthscale", T::real, false, 1.0},
        {"variance", T::real, false, 1.0},
        {"d", T::integer, false, 1},
        {"design", T::string, false, "RD"},
        {"law", T::string, false, "uniform"},
        {"beta_alpha", T::real_list, false, J::array()},
        {"beta_beta", T::real_list, false, J::array()},
        {"horizon", T::real, false, 20.0},
        {"level", T::integer, false, 8},
        {"truth", T::string, false, "zero"}}},
      {"test-stat",
       {{"dataset", T::string, true, {}},
        {"theta", T::string, false, ""},
        {"omega0", T::real, false, 2.0},
        {"epsilon", T::real, false, 0.3},
        {"level", T::integer, false, 8},
        {"per_axis", T::integer, false, 0}}},
      {"kl",
       {{"omega0", T::real, false, 2.0},
        {"omega", T::real, false, 1.0},
        {"d", T::integer, false, 0},
        {"offset", T::real, false, 0.0},
        {"delta", T::real, false, 0.1},
        {"tau", T::real, false, 2.0},
        {"horizon", T::real, false, 60.0},
        {"level", T::integer, false, 12},
        {"per_axis", T::integer, false, 8},
        {"panels", T::integer, false, 16384}}},
      {"verify-bounds",
       {{"suite", T::string, false, "default"},
        {"reps", T::integer, false, 20000},
        {"level", T::integer, false, 9},
        {"dyadic_paths", T::integer, false, 1000}}},
      {"consistency",
       {{"omega0", T::real, false, 2.0},
        {"d", T::integer, false, 1},
        {"n_ladder", T::int_list, false, J::array({250, 1000, 4000})},
        {"epsilon", T::real, false, 0.2},
        {"replications", T::integer, false, 5},
        {"knots", T::integer, false, 8},
        {"iterations", T::integer, false, 6000},
        {"burn_in", T::integer, false, 2000},
        {"thinning", T::integer, false, 10},
        {"proposal_scale_omega", T::real, false, 0.1},
        {"proposal_scale_path", T::real, false, 0.3},
        {"kernel", T::string, false, "se"},
        {"lengthscale", T::real, false, 5.0},
        {"variance", T::real, false, 1.0},
        {"omega_shape", T::real, false, 2.0},
        {"omega_rate", T::real, false, 1.0},
        {"data_horizon", T::real, false, 20.0},
        {"time_knots", T::integer, false, 129},
        {"cov_knots", T::integer, false, 17}}},
      {"check-assumptions",
       {{"kernel", T::string, true, {}},
        {"lengthscale", T::real, false, 1.0},
        {"variance", T::real, false, 1.0},
        {"n_max", T::integer, false, 40},
        {"horizons", T::real_list, false, J::array({10.0, 100.0, 1000.0})}}},
  };
  auto it = table.find(command);
  if (it == table.end()) throw ConfigError("unknown command '" + command + "'");
  return it->second;
}

struct RunConfig {
  std::string command;
  nlohmann::json params = nlohmann::json::object();  // defaults filled
  std::uint64_t seed = 1;
  std::string output_path;
  std::string base_dir;  // directory of the config file, for relative paths; not serialized

  bool operator==(const RunConfig& o) const {
    return command == o.command && params == o.params && seed == o.seed && output_path == o.output_path;
  }

  double real(const std::string& k) const { return params.at(k).get<double>(); }
  long long integer(const std::string& k) const { return params.at(k).get<long long>(); }
  std::string str(const std::string& k) const { return params.at(k).get<std::string>(); }
};

namespace cfg_detail {
inline bool type_ok(const nlohmann::json& v, ParamType t) {
  switch (t) {
    case ParamType::integer: return v.is_number_integer();
    case ParamType::real: return v.is_number();
    case ParamType::string: return v.is_string();
    case ParamType::boolean: return v.is_boolean();
    case ParamType::int_list:
      if (!v.is_array()) return false;
      for (const auto& e : v)
        if (!e.is_number_integer()) return false;
      return true;
    case ParamType::real_list:
      if (!v.is_array()) return false;
      for (const auto& e : v)
        if (!e.is_number()) return false;
      return true;
  }
  return false;
}

inline const char* type_name(ParamType t) {
  switch (t) {
    case ParamType::integer: return "integer";
    case ParamType::real: return "real";
    case ParamType::string: return "string";
    case ParamType::boolean: return "boolean";
    case ParamType::int_list: return "list of integers";
    case ParamType::real_list: return "list of reals";
  }
  return "?";
}
}  // namespace cfg_detail

// `command_hint` fills the command when the document omits it.
inline RunConfig parse_config(const std::string& source, const std::string& command_hint = "") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(source);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not well-formed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  if (doc.contains("command")) {
    if (!doc["command"].is_string()) throw ConfigError("key 'command' must be a string");
    cfg.command = doc["command"].get<std::string>();
    if (!command_hint.empty() && command_hint != cfg.command)
      throw ConfigError("config command '" + cfg.command + "' does not match requested '" + command_hint + "'");
  } else if (!command_hint.empty()) {
    cfg.command = command_hint;
  } else {
    throw ConfigError("missing required key 'command'");
  }
  const auto& schema = command_schema(cfg.command);

  if (doc.contains("seed")) {
    const auto& s = doc["seed"];
    if (!s.is_number_integer() || (s.is_number_integer() && !s.is_number_unsigned() && s.get<long long>() < 0))
      throw ConfigError("key 'seed' must be a nonnegative integer");
    cfg.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("output_path")) {
    if (!doc["output_path"].is_string()) throw ConfigError("key 'output_path' must be a string");
    cfg.output_path = doc["output_path"].get<std::string>();
  }

  std::set<std::string> known{"command", "seed", "output_path"};
  for (const auto& p : schema) known.insert(p.name);
  for (const auto& [k, v] : doc.items())
    if (!known.count(k)) throw ConfigError("unknown key '" + k + "' for command " + cfg.command);

  for (const auto& p : schema) {
    if (doc.contains(p.name)) {
      const auto& v = doc[p.name];
      if (!cfg_detail::type_ok(v, p.type))
        throw ConfigError("key '" + p.name + "' must be a " + cfg_detail::type_name(p.type));
      cfg.params[p.name] = p.type == ParamType::real ? nlohmann::json(v.get<double>()) : v;
    } else if (p.required) {
      throw ConfigError("missing required key '" + p.name + "' for command " + cfg.command);
    } else {
      cfg.params[p.name] = p.fallback;
    }
  }
  return cfg;
}

inline std::string emit_config(const RunConfig& cfg) {
  nlohmann::json j = cfg.params;
  j["command"] = cfg.command;
  j["seed"] = cfg.seed;
  if (!cfg.output_path.empty()) j["output_path"] = cfg.output_path;
  return j.dump(2);
}

// FNV-1a over the canonical emitted form.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : emit_config(cfg)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace gpsurv
