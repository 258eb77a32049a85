#pragma once

#include "satmem/cnf.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace satmem {

using json = nlohmann::json;

enum class SolveResult { Sat, Unsat, Unknown };

inline const char *to_string(SolveResult r) {
  switch (r) {
  case SolveResult::Sat:
    return "SAT";
  case SolveResult::Unsat:
    return "UNSAT";
  case SolveResult::Unknown:
    break;
  }
  return "UNKNOWN";
}

inline SolveResult parse_result(const std::string &s) {
  if (s == "SAT")
    return SolveResult::Sat;
  if (s == "UNSAT")
    return SolveResult::Unsat;
  if (s == "UNKNOWN")
    return SolveResult::Unknown;
  throw std::invalid_argument("unknown result " + s);
}

struct SolveOutcome {
  SolveResult result = SolveResult::Unknown;
  Assignment model;  // present iff result == Sat
  std::string error; // annotation, e.g. MEMORY_UNAVAILABLE
};

inline json to_json(const SolveOutcome &o) {
  json j = {{"result", to_string(o.result)}};
  if (o.result == SolveResult::Sat)
    j["model"] = o.model;
  if (!o.error.empty())
    j["error"] = o.error;
  return j;
}

inline SolveOutcome outcome_from_json(const json &j) {
  SolveOutcome o;
  o.result = parse_result(j.at("result").get<std::string>());
  if (j.contains("model"))
    o.model = j["model"].get<std::vector<bool>>();
  if (j.contains("error"))
    o.error = j["error"].get<std::string>();
  return o;
}

/// Per-solver settings that spread a portfolio across the search space.
struct DiversificationSettings {
  std::uint32_t rank = 0;
  std::uint32_t size = 1;
  std::map<std::uint32_t, bool> phases; // variable index -> value tried first
  bool jitter = false;                  // rank-seeded random default phase
  bool export_learned = false;
  std::size_t export_max_len = 2;

  void validate() const {
    if (size == 0)
      throw std::invalid_argument("size must be positive");
    if (rank >= size)
      throw std::invalid_argument("rank must be below size");
    for (auto &[v, _] : phases)
      if (v == 0)
        throw std::invalid_argument("phase variable index must be positive");
  }

  std::optional<bool> phase(std::uint32_t var) const {
    auto it = phases.find(var);
    if (it == phases.end())
      return std::nullopt;
    return it->second;
  }
};

/// Parses "x<i>" with i >= 1.
inline std::uint32_t parse_phase_key(const std::string &key) {
  if (key.size() < 2 || key[0] != 'x')
    throw std::invalid_argument("phase key must look like x<i>: " + key);
  std::uint64_t v = 0;
  for (std::size_t i = 1; i < key.size(); ++i) {
    if (key[i] < '0' || key[i] > '9')
      throw std::invalid_argument("phase key must look like x<i>: " + key);
    v = v * 10 + static_cast<std::uint64_t>(key[i] - '0');
    if (v > 0x7FFFFFFF)
      throw std::invalid_argument("phase index too large: " + key);
  }
  if (v == 0)
    throw std::invalid_argument("phase index must be >= 1: " + key);
  return static_cast<std::uint32_t>(v);
}

inline DiversificationSettings settings_from_json(const json &j) {
  DiversificationSettings s;
  if (!j.is_object())
    return s;
  s.rank = j.value("rank", 0u);
  s.size = j.value("size", 1u);
  if (j.contains("phases") && j["phases"].is_object())
    for (auto &[k, v] : j["phases"].items())
      s.phases[parse_phase_key(k)] = v.get<bool>();
  s.jitter = j.value("jitter", false);
  s.export_learned = j.value("exportLearned", false);
  s.export_max_len = j.value("exportMaxLen", std::size_t{2});
  s.validate();
  return s;
}

inline json to_json(const DiversificationSettings &s) {
  json phases = json::object();
  for (auto &[v, b] : s.phases)
    phases["x" + std::to_string(v)] = b;
  json j = {{"rank", s.rank}, {"size", s.size}, {"phases", phases}};
  if (s.jitter)
    j["jitter"] = true;
  if (s.export_learned) {
    j["exportLearned"] = true;
    j["exportMaxLen"] = s.export_max_len;
  }
  return j;
}

} // namespace satmem
