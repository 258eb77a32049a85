#pragma once

// Reference DPLL solver: chronological backtracking, two-watched-literal unit
// propagation, lowest-index decisions with phase hints. Pause and cancel are
// observed before every decision.

#include "satmem/cnf.hpp"
#include "satmem/solver_types.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <unordered_set>
#include <vector>

namespace satmem {

/// Pause/cancel signals shared between a running search and its controllers.
class SearchControl {
public:
  void request_pause() {
    std::lock_guard lock(mu_);
    pause_ = true;
    cv_.notify_all();
  }

  void resume() {
    std::lock_guard lock(mu_);
    pause_ = false;
    cv_.notify_all();
  }

  void cancel() {
    std::lock_guard lock(mu_);
    cancel_ = true;
    cv_.notify_all();
  }

  bool cancelled() const {
    std::lock_guard lock(mu_);
    return cancel_;
  }

  /// True while the search thread is parked at a decision boundary.
  bool parked() const {
    std::lock_guard lock(mu_);
    return parked_;
  }

  /// Marks the search as over so nobody waits for it to park.
  void finish() {
    std::lock_guard lock(mu_);
    finished_ = true;
    cv_.notify_all();
  }

  /// Blocks until the search is parked, has finished, or `timeout` elapses.
  bool wait_parked(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return parked_ || cancel_ || finished_; }) && parked_;
  }

  /// Called by the search before each decision. Returns false once cancelled.
  bool checkpoint() {
    if (hook)
      hook(++decisions_);
    std::unique_lock lock(mu_);
    if (pause_ && !cancel_) {
      parked_ = true;
      cv_.notify_all();
      cv_.wait(lock, [&] { return !pause_ || cancel_; });
      parked_ = false;
    }
    return !cancel_;
  }

  /// Test hook run at each decision boundary with the decision count.
  std::function<void(std::uint64_t)> hook;

private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  bool pause_ = false;
  bool cancel_ = false;
  bool parked_ = false;
  bool finished_ = false;
  std::uint64_t decisions_ = 0;
};

/// Source of clauses and variables that may grow while a search runs.
class ClauseFeed {
public:
  virtual ~ClauseFeed() = default;
  /// Appends clauses not yet delivered and returns the current variable count.
  virtual std::size_t poll(std::vector<Clause> &fresh) = 0;
  virtual bool alive() const { return true; }
  /// Receives conflict-derived clauses when export is enabled.
  virtual void export_clause(const Clause &) {}
};

/// A fixed clause list; the trivial feed.
class StaticFeed final : public ClauseFeed {
public:
  StaticFeed(std::size_t var_count, std::vector<Clause> clauses)
      : vars_(var_count), clauses_(std::move(clauses)) {}
  explicit StaticFeed(const CnfStore &store) : StaticFeed(store.var_count(), store.clauses()) {}

  std::size_t poll(std::vector<Clause> &fresh) override {
    if (!delivered_) {
      fresh.insert(fresh.end(), clauses_.begin(), clauses_.end());
      delivered_ = true;
    }
    return vars_;
  }

  void export_clause(const Clause &c) override { exported.push_back(c); }

  std::vector<Clause> exported;

private:
  std::size_t vars_;
  std::vector<Clause> clauses_;
  bool delivered_ = false;
};

class DpllSolver {
public:
  explicit DpllSolver(DiversificationSettings settings = {})
      : settings_(std::move(settings)), rng_(settings_.rank) {}

  SolveOutcome run(ClauseFeed &feed, SearchControl &control) {
    reset();
    if (!ingest(feed))
      return unsat_or_unknown(feed);
    for (;;) {
      if (!propagate()) {
        if (!backtrack(feed))
          return {SolveResult::Unsat, {}, {}};
        continue;
      }
      if (!control.checkpoint())
        return {SolveResult::Unknown, {}, {}};
      if (!feed.alive())
        return {SolveResult::Unknown, {}, "MEMORY_UNAVAILABLE"};
      if (!ingest(feed))
        return unsat_or_unknown(feed);
      if (qhead_ < trail_.size())
        continue;
      const std::uint32_t v = next_unassigned();
      if (v == 0)
        return {SolveResult::Sat, model(), {}};
      bool phase = false;
      if (auto p = settings_.phase(v))
        phase = *p;
      else if (settings_.jitter)
        phase = (rng_() & 1U) != 0;
      levels_.push_back({static_cast<std::uint32_t>(trail_.size()), phase ? Literal(v) : -Literal(v), false});
      enqueue(levels_.back().decision);
    }
  }

  SolveOutcome run(const CnfStore &store) {
    StaticFeed feed(store);
    SearchControl control;
    return run(feed, control);
  }

  SolveOutcome run(std::size_t var_count, std::vector<Clause> clauses) {
    StaticFeed feed(var_count, std::move(clauses));
    SearchControl control;
    return run(feed, control);
  }

  std::uint64_t decisions() const noexcept { return decisions_; }
  std::uint64_t conflicts() const noexcept { return conflicts_; }

  /// Current decision level; exposed for pause-transparency tests.
  std::size_t level() const noexcept { return levels_.size(); }
  const std::vector<Literal> &trail() const noexcept { return trail_; }

private:
  struct Level {
    std::uint32_t trail_start;
    Literal decision;
    bool flipped;
  };

  static std::size_t idx(Literal l) {
    return 2 * static_cast<std::size_t>(var_of(l)) + (l < 0 ? 1 : 0);
  }

  // 1 true, -1 false, 0 unassigned
  int value(Literal l) const {
    const int v = assign_[var_of(l)];
    return l < 0 ? -v : v;
  }

  void reset() {
    vars_ = 0;
    clauses_.clear();
    watches_.clear();
    assign_.assign(1, 0);
    trail_.clear();
    levels_.clear();
    units_.clear();
    known_.clear();
    qhead_ = 0;
    scan_from_ = 1;
    decisions_ = conflicts_ = 0;
  }

  SolveOutcome unsat_or_unknown(ClauseFeed &feed) {
    if (!feed.alive())
      return {SolveResult::Unknown, {}, "MEMORY_UNAVAILABLE"};
    return {SolveResult::Unsat, {}, {}};
  }

  void grow(std::size_t n) {
    if (n <= vars_)
      return;
    vars_ = n;
    assign_.resize(n + 1, 0);
    watches_.resize(2 * (n + 1));
  }

  // Pulls new clauses from the feed. Returns false on a root-level conflict.
  bool ingest(ClauseFeed &feed) {
    fresh_.clear();
    grow(feed.poll(fresh_));
    bool restart = false;
    std::vector<std::uint32_t> pending;
    for (auto &raw : fresh_) {
      Clause c = canonical(raw);
      if (!known_.insert(c).second)
        continue;
      for (Literal l : c)
        grow(var_of(l));
      if (c.size() == 1) {
        units_.push_back(c[0]);
        restart = true;
        continue;
      }
      clauses_.push_back(std::move(c));
      const auto ci = static_cast<std::uint32_t>(clauses_.size() - 1);
      auto &cl = clauses_.back();
      // Watching two unassigned literals is sound at any level.
      std::size_t free_found = 0;
      for (std::size_t k = 0; k < cl.size() && free_found < 2; ++k)
        if (value(cl[k]) == 0)
          std::swap(cl[free_found++], cl[k]);
      if (free_found == 2) {
        watch(ci);
      } else {
        restart = true;
        pending.push_back(ci);
      }
    }
    if (!restart)
      return true;
    // Root-level assignments are permanent; only decisions are undone.
    undo_to(levels_.empty() ? trail_.size() : levels_.front().trail_start);
    levels_.clear();
    for (Literal u : units_) {
      if (value(u) == -1)
        return false;
      if (value(u) == 0)
        enqueue(u);
    }
    for (auto ci : pending)
      if (!attach_at_root(ci))
        return false;
    return true;
  }

  // Attaches a clause with the trail at level 0.
  bool attach_at_root(std::uint32_t ci) {
    auto &cl = clauses_[ci];
    for (Literal l : cl)
      if (value(l) == 1) {
        // Root-satisfied clauses are never needed again; keep it inert.
        return true;
      }
    std::size_t free_found = 0;
    for (std::size_t k = 0; k < cl.size() && free_found < 2; ++k)
      if (value(cl[k]) == 0)
        std::swap(cl[free_found++], cl[k]);
    if (free_found == 0)
      return false;
    if (free_found == 1) {
      units_.push_back(cl[0]);
      enqueue(cl[0]);
      return true;
    }
    watch(ci);
    return true;
  }

  void watch(std::uint32_t ci) {
    const auto &cl = clauses_[ci];
    watches_[idx(cl[0])].push_back(ci);
    watches_[idx(cl[1])].push_back(ci);
  }

  void enqueue(Literal l) {
    assign_[var_of(l)] = l > 0 ? 1 : -1;
    trail_.push_back(l);
  }

  bool propagate() {
    while (qhead_ < trail_.size()) {
      const Literal falsified = -trail_[qhead_++];
      auto &ws = watches_[idx(falsified)];
      std::size_t keep = 0;
      for (std::size_t i = 0; i < ws.size(); ++i) {
        const std::uint32_t ci = ws[i];
        auto &cl = clauses_[ci];
        if (cl[0] == falsified)
          std::swap(cl[0], cl[1]);
        if (value(cl[0]) == 1) {
          ws[keep++] = ci;
          continue;
        }
        bool moved = false;
        for (std::size_t k = 2; k < cl.size(); ++k)
          if (value(cl[k]) != -1) {
            std::swap(cl[1], cl[k]);
            watches_[idx(cl[1])].push_back(ci);
            moved = true;
            break;
          }
        if (moved)
          continue;
        ws[keep++] = ci;
        if (value(cl[0]) == -1) {
          for (++i; i < ws.size(); ++i)
            ws[keep++] = ws[i];
          ws.resize(keep);
          ++conflicts_;
          return false;
        }
        enqueue(cl[0]);
      }
      ws.resize(keep);
    }
    return true;
  }

  void undo_to(std::size_t trail_size) {
    while (trail_.size() > trail_size) {
      const std::uint32_t v = var_of(trail_.back());
      assign_[v] = 0;
      if (v < scan_from_)
        scan_from_ = v;
      trail_.pop_back();
    }
    qhead_ = std::min(qhead_, trail_.size());
  }

  // Flips the deepest unflipped decision. False when the search is exhausted.
  bool backtrack(ClauseFeed &feed) {
    while (!levels_.empty()) {
      Level top = levels_.back();
      levels_.pop_back();
      undo_to(top.trail_start);
      if (!top.flipped) {
        levels_.push_back({top.trail_start, -top.decision, true});
        enqueue(-top.decision);
        return true;
      }
      // Both branches failed: the remaining decisions imply a conflict.
      if (settings_.export_learned && !levels_.empty() &&
          levels_.size() <= settings_.export_max_len) {
        Clause learned;
        for (const auto &lv : levels_)
          learned.push_back(-lv.decision);
        learned = canonical(learned);
        if (known_.insert(learned).second)
          feed.export_clause(learned);
      }
    }
    return false;
  }

  std::uint32_t next_unassigned() {
    while (scan_from_ <= vars_ && assign_[scan_from_] != 0)
      ++scan_from_;
    if (scan_from_ > vars_)
      return 0;
    ++decisions_;
    return static_cast<std::uint32_t>(scan_from_);
  }

  Assignment model() const {
    Assignment m(vars_);
    for (std::size_t v = 1; v <= vars_; ++v)
      m[v - 1] = assign_[v] == 1;
    return m;
  }

  DiversificationSettings settings_;
  std::mt19937 rng_;
  std::size_t vars_ = 0;
  std::vector<Clause> clauses_;
  std::vector<std::vector<std::uint32_t>> watches_;
  std::vector<int> assign_;
  std::vector<Literal> trail_;
  std::vector<Level> levels_;
  std::vector<Literal> units_;
  std::unordered_set<Clause, ClauseHash> known_;
  std::vector<Clause> fresh_;
  std::size_t qhead_ = 0;
  std::size_t scan_from_ = 1;
  std::uint64_t decisions_ = 0;
  std::uint64_t conflicts_ = 0;
};

} // namespace satmem
