#pragma once

// Shared solvers: a worker runs one search at a time against a memory reached
// over the direct channel; the kernel keeps the registry, routes SatSolver.*
// calls (locally or to the owning node) and runs parallelize/join.

#include "satmem/dpll.hpp"
#include "satmem/memory_client.hpp"
#include "satmem/rpc.hpp"
#include "satmem/solver_types.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace satmem {

enum class SolverState { Idle, Busy, Paused };

inline const char *to_string(SolverState s) {
  switch (s) {
  case SolverState::Idle:
    return "IDLE";
  case SolverState::Busy:
    return "BUSY";
  case SolverState::Paused:
    break;
  }
  return "PAUSED";
}

inline SolverState parse_state(const std::string &s) {
  if (s == "IDLE")
    return SolverState::Idle;
  if (s == "BUSY")
    return SolverState::Busy;
  if (s == "PAUSED")
    return SolverState::Paused;
  throw std::invalid_argument("unknown solver state " + s);
}

struct SolverRecord {
  std::string solver_id;
  std::string solver_type = "ReferenceDpll";
  std::string endpoint; // empty for solvers hosted by this process
  SolverState state = SolverState::Idle;
  std::string current_web_pid;
};

inline json to_json(const SolverRecord &r) {
  json j = {{"solverId", r.solver_id},
            {"solverType", r.solver_type},
            {"endpoint", r.endpoint},
            {"state", to_string(r.state)}};
  if (!r.current_web_pid.empty())
    j["currentWebPid"] = r.current_web_pid;
  return j;
}

inline SolverRecord record_from_json(const json &j) {
  SolverRecord r;
  r.solver_id = j.at("solverId").get<std::string>();
  r.solver_type = j.value("solverType", std::string("ReferenceDpll"));
  r.endpoint = j.value("endpoint", std::string());
  r.state = parse_state(j.value("state", std::string("IDLE")));
  r.current_web_pid = j.value("currentWebPid", std::string());
  return r;
}

/// Feeds a search from a live mirror and publishes learned clauses to it.
class MirrorFeed final : public ClauseFeed {
public:
  explicit MirrorFeed(MemoryMirror &m) : mirror_(m) {}

  std::size_t poll(std::vector<Clause> &fresh) override {
    const std::uint64_t g = mirror_.generation();
    if (!first_ && g == seen_)
      return vars_;
    first_ = false;
    seen_ = g;
    auto got = mirror_.clauses_since(cursor_);
    fresh.insert(fresh.end(), std::make_move_iterator(got.begin()), std::make_move_iterator(got.end()));
    // Read after the clauses so every delivered literal is in range.
    vars_ = mirror_.var_count();
    return vars_;
  }

  bool alive() const override { return mirror_.alive(); }

  void export_clause(const Clause &c) override {
    try {
      mirror_.add_clause_direct(c);
    } catch (const std::exception &) {
      // A dead connection surfaces through alive().
    }
  }

private:
  MemoryMirror &mirror_;
  std::size_t cursor_ = 0, vars_ = 0;
  std::uint64_t seen_ = 0;
  bool first_ = true;
};

/// One reference solver. All methods are thread-safe; solve() blocks.
class SolverWorker {
public:
  explicit SolverWorker(std::string id) : id_(std::move(id)) {}

  const std::string &id() const noexcept { return id_; }

  SolverRecord record() const {
    std::lock_guard lock(mu_);
    SolverRecord r;
    r.solver_id = id_;
    r.state = state_;
    r.current_web_pid = pid_;
    return r;
  }

  /// Marks an idle solver as handed out by find_available for `lease`.
  bool try_claim(std::chrono::milliseconds lease) {
    std::lock_guard lock(mu_);
    const auto now = std::chrono::steady_clock::now();
    if (state_ != SolverState::Idle || claimed_until_ > now)
      return false;
    claimed_until_ = now + lease;
    return true;
  }

  /// `timeout` bounds only the wait for this solver to become idle.
  json solve(const std::string &memory_url, std::chrono::milliseconds timeout,
             const DiversificationSettings &settings, const std::string &web_pid) {
    std::shared_ptr<SearchControl> control;
    {
      std::unique_lock lock(mu_);
      if (!cv_.wait_for(lock, timeout, [&] { return state_ == SolverState::Idle; }))
        return error_result("BUSY");
      state_ = SolverState::Busy;
      pid_ = web_pid;
      claimed_until_ = {};
      control = control_ = std::make_shared<SearchControl>();
    }
    json out;
    try {
      auto mirror = MemoryMirror::connect(memory_url);
      MirrorFeed feed(*mirror);
      out = to_json(DpllSolver(settings).run(feed, *control));
    } catch (const std::exception &e) {
      out = error_result("MEMORY_UNAVAILABLE", e.what());
    }
    control->finish();
    {
      std::lock_guard lock(mu_);
      state_ = SolverState::Idle;
      pid_.clear();
      control_.reset();
    }
    cv_.notify_all();
    if (on_idle)
      on_idle();
    return out;
  }

  json pause(const std::string &web_pid) {
    std::lock_guard lock(mu_);
    if (auto e = check_caller(web_pid))
      return *e;
    if (state_ != SolverState::Busy)
      return error_result("NOT_BUSY", "pause needs a running search");
    control_->request_pause();
    state_ = SolverState::Paused;
    return {{"state", to_string(state_)}};
  }

  json resume(const std::string &web_pid) {
    std::lock_guard lock(mu_);
    if (auto e = check_caller(web_pid))
      return *e;
    if (state_ != SolverState::Paused)
      return error_result("NOT_PAUSED", "non-paused solver cannot resume");
    control_->resume();
    state_ = SolverState::Busy;
    return {{"state", to_string(state_)}};
  }

  /// Stops the search for good; the in-flight solve returns UNKNOWN.
  json cancel(const std::string &web_pid, std::chrono::milliseconds settle = std::chrono::seconds(5)) {
    std::unique_lock lock(mu_);
    if (auto e = check_caller(web_pid))
      return *e;
    if (state_ == SolverState::Idle)
      return error_result("NOT_RUNNING", "no search to cancel");
    control_->cancel();
    cv_.wait_for(lock, settle, [&] { return state_ == SolverState::Idle; });
    return {{"state", to_string(state_)}};
  }

  /// Blocks until the search is parked at a decision boundary.
  bool wait_parked(std::chrono::milliseconds timeout) {
    std::shared_ptr<SearchControl> c;
    {
      std::lock_guard lock(mu_);
      c = control_;
    }
    return c && c->wait_parked(timeout);
  }

  /// Called after every solve; the registry uses it to wake waiters.
  std::function<void()> on_idle;

private:
  std::optional<json> check_caller(const std::string &web_pid) const {
    if (state_ != SolverState::Idle && web_pid != pid_)
      return error_result("WEBPID_MISMATCH", "caller does not own the running search");
    return std::nullopt;
  }

  const std::string id_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  SolverState state_ = SolverState::Idle;
  std::string pid_;
  std::shared_ptr<SearchControl> control_;
  std::chrono::steady_clock::time_point claimed_until_{};
};

struct KernelOptions {
  std::string endpoint;                          // this node's web-call endpoint, if any
  std::chrono::milliseconds claim_lease{5'000};  // hold on a solver handed out by findAvailable
  std::chrono::milliseconds remote_timeout{24LL * 3600 * 1000};
};

/// Registry, solver routing and parallelize/join.
class Kernel {
public:
  explicit Kernel(KernelOptions opts = {}) : opts_(std::move(opts)) {}

  Kernel(const Kernel &) = delete;
  Kernel &operator=(const Kernel &) = delete;

  /// Creates and registers `n` local reference solvers; returns their ids.
  std::vector<std::string> spawn_workers(std::size_t n) {
    std::vector<std::string> ids;
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < n; ++i) {
      auto w = std::make_shared<SolverWorker>(make_uuid());
      w->on_idle = [this] {
        std::lock_guard l(mu_);
        cv_.notify_all();
      };
      ids.push_back(w->id());
      order_.push_back(w->id());
      local_[w->id()] = w;
    }
    return ids;
  }

  std::shared_ptr<SolverWorker> local_worker(const std::string &id) const {
    std::lock_guard lock(mu_);
    auto it = local_.find(id);
    return it == local_.end() ? nullptr : it->second;
  }

  void register_solver(SolverRecord r) {
    std::lock_guard lock(mu_);
    if (local_.count(r.solver_id))
      return;
    if (!remote_.count(r.solver_id))
      order_.push_back(r.solver_id);
    remote_[r.solver_id] = std::move(r);
    cv_.notify_all();
  }

  std::vector<SolverRecord> list_solvers() const {
    std::vector<SolverRecord> out;
    std::lock_guard lock(mu_);
    for (auto &id : order_) {
      if (auto it = local_.find(id); it != local_.end()) {
        auto r = it->second->record();
        r.endpoint = opts_.endpoint;
        out.push_back(r);
      } else {
        out.push_back(remote_.at(id));
      }
    }
    return out;
  }

  /// First idle solver in registration order, claimed for a short lease.
  std::optional<SolverRecord> find_available(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      std::vector<std::string> ids;
      {
        std::lock_guard lock(mu_);
        ids = order_;
      }
      for (auto &id : ids) {
        if (auto w = local_worker(id)) {
          if (w->try_claim(opts_.claim_lease)) {
            auto r = w->record();
            r.endpoint = opts_.endpoint;
            return r;
          }
          continue;
        }
        SolverRecord rec;
        {
          std::lock_guard lock(mu_);
          rec = remote_.at(id);
        }
        try {
          RpcClient c(rec.endpoint, std::chrono::seconds(2));
          auto res = c.call("SatSolver.claim", id, {{"leaseMs", opts_.claim_lease.count()}});
          if (res.value("claimed", false)) {
            rec.state = SolverState::Idle;
            return rec;
          }
        } catch (const std::exception &) {
          // Unreachable node: skip it this round.
        }
      }
      std::unique_lock lock(mu_);
      if (std::chrono::steady_clock::now() >= deadline)
        return std::nullopt;
      cv_.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() + std::chrono::milliseconds(20)));
    }
  }

  /// Routes one SatSolver.* or Kernel.* envelope. Unknown methods yield
  /// NO_SUCH_METHOD; nothing throws for application errors.
  json handle_web_call(const json &envelope) {
    if (!envelope.is_object() || !envelope.contains("method") || !envelope["method"].is_string())
      return error_result("BAD_ENVELOPE", "missing method");
    const std::string method = envelope["method"];
    const json arg = envelope.contains("argument") && envelope["argument"].is_object() ? envelope["argument"]
                                                                                       : json::object();
    const std::string ref = envelope.value("objectRef", std::string());
    const std::string pid = envelope.value("webPid", std::string());
    try {
      if (method.rfind("SatSolver.", 0) == 0)
        return solver_call(method, ref, arg, pid);
      if (method == "Kernel.parallelize")
        return parallelize(arg.value("calls", json::array()), arg.value("shortCircuit", false), pid);
      if (method == "Kernel.listSolvers") {
        json list = json::array();
        for (auto &r : list_solvers())
          list.push_back(to_json(r));
        return {{"solvers", list}};
      }
      if (method == "Kernel.registerSolver") {
        auto r = record_from_json(arg);
        if (r.endpoint.empty())
          return error_result("BAD_ARGUMENT", "remote solver needs an endpoint");
        register_solver(r);
        return {{"registered", r.solver_id}};
      }
      if (method == "Kernel.findAvailable") {
        auto r = find_available(timeout_arg(arg));
        if (!r)
          return error_result("NONE_AVAILABLE");
        return to_json(*r);
      }
      return error_result("NO_SUCH_METHOD", method);
    } catch (const json::exception &e) {
      return error_result("BAD_ARGUMENT", e.what());
    } catch (const std::invalid_argument &e) {
      return error_result("BAD_ARGUMENT", e.what());
    }
  }

  /// SatSolver.{solve,pause,resume,cancel,claim} addressed to `solver_id`.
  json solver_call(const std::string &method, const std::string &solver_id, const json &arg,
                   const std::string &pid) {
    auto w = local_worker(solver_id);
    if (!w) {
      std::optional<SolverRecord> rec;
      {
        std::lock_guard lock(mu_);
        if (auto it = remote_.find(solver_id); it != remote_.end())
          rec = it->second;
      }
      if (!rec)
        return error_result("NO_SUCH_OBJECT", solver_id);
      try {
        RpcClient c(rec->endpoint, opts_.remote_timeout);
        return c.call(method, solver_id, arg, pid);
      } catch (const std::exception &e) {
        return error_result("TRANSPORT", e.what());
      }
    }
    if (method == "SatSolver.solve") {
      if (!arg.contains("memoryUrl") || !arg["memoryUrl"].is_string())
        return error_result("BAD_ARGUMENT", "memoryUrl required");
      return w->solve(arg["memoryUrl"], timeout_arg(arg), settings_from_json(arg.value("diversification", json::object())),
                      pid);
    }
    if (method == "SatSolver.pause")
      return w->pause(pid);
    if (method == "SatSolver.resume")
      return w->resume(pid);
    if (method == "SatSolver.cancel")
      return w->cancel(pid);
    if (method == "SatSolver.claim")
      return {{"claimed", w->try_claim(std::chrono::milliseconds(arg.value("leaseMs", opts_.claim_lease.count())))}};
    if (method == "SatSolver.status")
      return to_json(w->record());
    return error_result("NO_SUCH_METHOD", method);
  }

  /// Runs the child solve calls concurrently and joins them. Results are
  /// positional; a child's error is stored in its own slot. With
  /// `short_circuit`, the first SAT or UNSAT cancels every unfinished sibling.
  ///
  /// A call is {"solverId"?, "memoryUrl", "timeout"?, "diversification"?,
  /// "webPid"?}; without solverId the first available solver is used.
  json parallelize(const json &calls, bool short_circuit, const std::string &pid) {
    if (!calls.is_array())
      throw std::invalid_argument("calls must be an array");
    struct Join {
      std::mutex mu;
      std::condition_variable cv;
      std::size_t counter = 0;
      std::vector<json> results;
      std::vector<bool> filled;
      std::vector<std::string> solver; // assigned solver per child, once known
      bool decided = false;
    };
    auto join = std::make_shared<Join>();
    const std::size_t n = calls.size();
    join->results.resize(n);
    join->filled.assign(n, false);
    join->solver.resize(n);
    std::vector<std::string> pids(n);
    for (std::size_t i = 0; i < n; ++i)
      pids[i] = calls[i].value("webPid", (pid.empty() ? std::string("parallelize") : pid) + "/" + std::to_string(i) +
                                             "/" + make_uuid());

    std::vector<std::thread> children;
    for (std::size_t i = 0; i < n; ++i)
      children.emplace_back([this, join, &calls, &pids, i, short_circuit] {
        const json &call = calls[i];
        json result;
        std::string sid = call.value("solverId", std::string());
        if (sid.empty()) {
          auto r = find_available(timeout_arg(call));
          if (r)
            sid = r->solver_id;
          else
            result = error_result("NONE_AVAILABLE");
        }
        if (!sid.empty()) {
          bool skip;
          {
            std::lock_guard lock(join->mu);
            join->solver[i] = sid;
            skip = join->decided;
          }
          result = skip ? json{{"result", "UNKNOWN"}, {"error", "CANCELLED"}}
                        : solver_call("SatSolver.solve", sid, call, pids[i]);
        }
        std::lock_guard lock(join->mu);
        join->results[i] = std::move(result);
        join->filled[i] = true;
        ++join->counter;
        const std::string r = join->results[i].value("result", std::string());
        if (short_circuit && (r == "SAT" || r == "UNSAT"))
          join->decided = true;
        join->cv.notify_all();
      });

    {
      std::unique_lock lock(join->mu);
      while (join->counter < n) {
        join->cv.wait_for(lock, std::chrono::milliseconds(10));
        if (!join->decided)
          continue;
        // Keep cancelling: a sibling may not have started its search yet.
        std::vector<std::pair<std::string, std::string>> targets;
        for (std::size_t i = 0; i < n; ++i)
          if (!join->filled[i] && !join->solver[i].empty())
            targets.emplace_back(join->solver[i], pids[i]);
        lock.unlock();
        for (auto &[sid, cpid] : targets)
          solver_call("SatSolver.cancel", sid, json::object(), cpid);
        lock.lock();
      }
    }
    for (auto &t : children)
      t.join();
    return json(join->results);
  }

private:
  // "timeout" is in seconds and may be fractional.
  static std::chrono::milliseconds timeout_arg(const json &arg) {
    const double s = arg.value("timeout", 0.0);
    if (s < 0)
      throw std::invalid_argument("timeout must be nonnegative");
    return std::chrono::milliseconds(static_cast<std::int64_t>(s * 1000));
  }

  KernelOptions opts_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::string> order_;
  std::map<std::string, std::shared_ptr<SolverWorker>> local_;
  std::map<std::string, SolverRecord> remote_;
};

} // namespace satmem
