#pragma once

// Command implementations behind the satmem tool. Each returns a process exit
// code and writes human-readable output to the given stream.

#include "satmem/dimacs.hpp"
#include "satmem/factor.hpp"
#include "satmem/server.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace satmem::cli {

inline constexpr int kExitOk = 0;   // also SAT
inline constexpr int kExitError = 1;
inline constexpr int kExitUnsat = 20;
inline constexpr int kExitUnknown = 30;

class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Decimal, or a bit string written most significant bit first with a 0b prefix.
inline FactorizationSpec parse_product(const std::string &text, std::size_t l) {
  if (text.rfind("0b", 0) == 0)
    return FactorizationSpec::from_bit_string(l, text.substr(2));
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw FactorError("product must be a nonnegative decimal or a 0b bit string: " + text);
  std::uint64_t n = 0;
  try {
    n = std::stoull(text);
  } catch (const std::out_of_range &) {
    throw FactorError("product too large: " + text);
  }
  return FactorizationSpec::from_integer(l, n);
}

inline std::string endpoint_from_env() {
  const char *e = std::getenv(kEndpointEnv);
  return e ? std::string(e) : std::string();
}

inline std::vector<std::string> layout_comments(const FactorizationSpec &spec) {
  const std::size_t l = spec.l;
  return {"factorization of " + std::to_string(spec.product()) + " with l = " + std::to_string(l),
          "u = x1..x" + std::to_string(l) + ", v = x" + std::to_string(l + 1) + "..x" + std::to_string(2 * l) +
              ", least significant bit first",
          "auxiliary variables follow the factor bits"};
}

/// Copies `local` into the memory behind `mirror`. Variables above `base`
/// are reserved in one bracket and renumbered if another writer grew the
/// memory meanwhile; variables up to `base` must already exist remotely.
inline void upload(const CnfStore &local, std::size_t base, MemoryMirror &mirror) {
  if (mirror.var_count() < base)
    throw MirrorError("remote memory has fewer than " + std::to_string(base) + " variables");
  const std::size_t extra = local.var_count() - base;
  Literal first = static_cast<Literal>(base) + 1;
  if (extra > 0)
    first = mirror.reserve_variables(extra);
  const Literal shift = first - static_cast<Literal>(base) - 1;
  for (Clause c : local.clauses()) {
    for (auto &lit : c)
      if (var_of(lit) > base)
        lit += lit > 0 ? shift : -shift;
    mirror.add_clause_direct(c);
  }
  mirror.sync();
}

struct Encoded {
  CnfStore store;
  FactorLayout layout;
};

inline Encoded encode_local(const FactorizationSpec &spec) {
  Encoded e{CnfStore(2 * spec.l), {}};
  e.layout = build_factorization(spec, e.store);
  return e;
}

inline void print_summary(std::ostream &out, const Encoded &e, const FactorizationSpec &spec) {
  out << "variables: " << e.store.var_count() << "\n"
      << "clauses: " << e.store.clause_count() << "\n"
      << "u: x1..x" << spec.l << " (LSB first)\n"
      << "v: x" << spec.l + 1 << "..x" << 2 * spec.l << " (LSB first)\n";
}

/// encode --l L --product P --out (tcp://... | path.cnf)
inline int cmd_encode(std::size_t l, const std::string &product, const std::string &out_target, std::ostream &out,
                      std::ostream &err) {
  try {
    const auto spec = parse_product(product, l);
    auto enc = encode_local(spec);
    if (out_target.rfind("tcp://", 0) == 0) {
      auto mirror = MemoryMirror::connect(out_target);
      if (mirror->var_count() != 0 && mirror->var_count() != 2 * l)
        throw MirrorError("target memory must be empty or hold exactly " + std::to_string(2 * l) + " variables");
      if (mirror->var_count() == 0 && mirror->reserve_variables(2 * l) != 1)
        throw MirrorError("another writer grew the memory during encoding");
      upload(enc.store, 2 * l, *mirror);
    } else {
      std::ofstream f(out_target);
      if (!f)
        throw std::runtime_error("cannot write " + out_target);
      f << dimacs_write(enc.store, layout_comments(spec));
    }
    print_summary(out, enc, spec);
    return kExitOk;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

/// Picks the decisive outcome among child results.
inline std::optional<SolveOutcome> decisive(const json &results, std::string &errors) {
  std::optional<SolveOutcome> unknown;
  for (const auto &r : results) {
    if (!r.contains("result")) {
      errors += r.value("error", std::string("error")) + " ";
      continue;
    }
    auto o = outcome_from_json(r);
    if (o.result != SolveResult::Unknown)
      return o;
    unknown = o;
  }
  return unknown;
}

struct FactorOptions {
  std::uint64_t n = 0;
  std::size_t l = 0;
  std::string endpoint;   // empty: run an in-process node
  std::size_t portfolio = 1;
  double wait = 30;       // seconds to wait for free solvers
};

/// factor N --l L: encode into a fresh memory, solve, decode, check.
inline int cmd_factor(const FactorOptions &o, std::ostream &out, std::ostream &err) {
  try {
    if (o.portfolio == 0)
      throw UsageError("portfolio must be at least 1");
    const auto spec = FactorizationSpec::from_integer(o.l, o.n);
    std::unique_ptr<Node> embedded;
    std::string endpoint = o.endpoint;
    if (endpoint.empty()) {
      NodeOptions no;
      no.workers = o.portfolio;
      embedded = std::make_unique<Node>(no);
      endpoint = embedded->endpoint();
    }
    RpcClient rpc(endpoint);
    auto created = rpc.call("SatCnf.create", "", {{"initialVariableCount", 2 * o.l}});
    if (created.contains("error"))
      throw std::runtime_error("cannot create memory: " + created["error"].get<std::string>());
    const std::string mem_id = created.at("id"), mem_url = created.at("directUrl");
    auto enc = encode_local(spec);
    {
      auto mirror = MemoryMirror::connect(mem_url);
      upload(enc.store, 2 * o.l, *mirror);
    }

    json results;
    if (o.portfolio == 1) {
      auto solver = rpc.call("Kernel.findAvailable", "", {{"timeout", o.wait}});
      if (solver.contains("error")) {
        rpc.call("SatCnf.delete", mem_id);
        err << "error: " << solver["error"].get<std::string>() << "\n";
        return kExitError;
      }
      results = json::array({rpc.call("SatSolver.solve", solver.at("solverId"),
                                      {{"memoryUrl", mem_url}, {"timeout", o.wait}})});
    } else {
      json calls = json::array();
      for (std::size_t r = 0; r < o.portfolio; ++r)
        calls.push_back({{"memoryUrl", mem_url},
                         {"timeout", o.wait},
                         {"diversification", {{"rank", r}, {"size", o.portfolio}, {"jitter", r > 0}}}});
      results = rpc.call("Kernel.parallelize", "", {{"calls", calls}, {"shortCircuit", true}});
    }
    rpc.call("SatCnf.delete", mem_id);

    std::string errors;
    auto outcome = decisive(results, errors);
    if (!outcome) {
      err << "error: " << (errors.empty() ? std::string("no result") : errors) << "\n";
      return kExitError;
    }
    if (outcome->result == SolveResult::Unsat) {
      out << "UNSAT (no two factors of length " << o.l << ")\n";
      return kExitUnsat;
    }
    if (outcome->result == SolveResult::Unknown) {
      out << "UNKNOWN" << (outcome->error.empty() ? "" : " (" + outcome->error + ")") << "\n";
      return kExitUnknown;
    }
    // Never trust the solver: the model must satisfy the encoding and multiply back.
    if (outcome->model.size() != enc.store.var_count() || !enc.store.evaluate(outcome->model))
      throw std::runtime_error("solver returned a model that does not satisfy the encoding");
    auto [u, v] = decode_model(outcome->model, spec);
    if (u * v != o.n || u < v || v < 2)
      throw std::runtime_error("decoded factors " + std::to_string(u) + ", " + std::to_string(v) +
                               " do not factor " + std::to_string(o.n));
    out << o.n << " = " << u << " × " << v << "\n";
    return kExitOk;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

/// solve FILE: local reference solver over a DIMACS file.
inline int cmd_solve(const std::string &path, std::ostream &out, std::ostream &err) {
  try {
    std::ifstream f(path);
    if (!f)
      throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    auto store = dimacs_read(ss.str());
    auto r = DpllSolver().run(store);
    if (r.result == SolveResult::Sat) {
      out << "s SATISFIABLE\nv";
      for (std::size_t i = 0; i < r.model.size(); ++i)
        out << ' ' << (r.model[i] ? "" : "-") << i + 1;
      out << " 0\n";
      return kExitOk;
    }
    if (r.result == SolveResult::Unsat) {
      out << "s UNSATISFIABLE\n";
      return kExitUnsat;
    }
    out << "s UNKNOWN\n";
    return kExitUnknown;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

/// dimacs export URL --out FILE
inline int cmd_dimacs_export(const std::string &memory_url, const std::string &path, std::ostream &out,
                             std::ostream &err) {
  try {
    auto mirror = MemoryMirror::connect(memory_url);
    auto snap = mirror->sync();
    DimacsDocument doc{snap.var_count, snap.clauses, {"exported from " + memory_url}};
    std::ofstream f(path);
    if (!f)
      throw std::runtime_error("cannot write " + path);
    f << dimacs_format(doc);
    out << "variables: " << snap.var_count << "\nclauses: " << snap.clauses.size() << "\n";
    return kExitOk;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

/// dimacs import FILE --endpoint URL: creates a memory holding the file.
inline int cmd_dimacs_import(const std::string &path, const std::string &endpoint, std::ostream &out,
                             std::ostream &err) {
  try {
    std::ifstream f(path);
    if (!f)
      throw std::runtime_error("cannot read " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    auto doc = dimacs_parse(ss.str());
    RpcClient rpc(endpoint);
    auto created = rpc.call("SatCnf.create", "", {{"initialVariableCount", doc.var_count}});
    if (created.contains("error"))
      throw std::runtime_error("cannot create memory: " + created["error"].get<std::string>());
    auto mirror = MemoryMirror::connect(created.at("directUrl"));
    for (const auto &c : doc.clauses)
      mirror->add_clause_direct(c);
    mirror->sync();
    out << "id: " << created.at("id").get<std::string>() << "\n"
        << "directUrl: " << created.at("directUrl").get<std::string>() << "\n";
    return kExitOk;
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
}

} // namespace satmem::cli
