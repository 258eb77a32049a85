#pragma once

// In-memory CNF model: canonical clauses, duplicate suppression and
// fork-layered storage. Literals are signed 1-based variable indices.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace satmem {

using Literal = std::int32_t;
using Clause = std::vector<Literal>;
using Assignment = std::vector<bool>;

inline std::uint32_t var_of(Literal lit) noexcept {
  return static_cast<std::uint32_t>(lit < 0 ? -static_cast<std::int64_t>(lit) : lit);
}

class CnfError : public std::runtime_error {
public:
  enum class Code { ZeroLiteral, OutOfRange, EmptyClause, InvalidArgument, LengthMismatch };

  CnfError(Code code, const std::string &what) : std::runtime_error(what), code_(code) {}
  Code code() const noexcept { return code_; }

private:
  Code code_;
};

/// Total order used for canonical clauses: ascending variable, and the
/// negative literal first when both polarities of a variable occur.
inline bool literal_less(Literal a, Literal b) noexcept {
  const auto va = var_of(a), vb = var_of(b);
  return va != vb ? va < vb : a < b;
}

/// Sorts and removes exact duplicates. Tautologies are kept.
inline Clause canonical(std::span<const Literal> lits) {
  if (lits.empty())
    throw CnfError(CnfError::Code::EmptyClause, "empty clause");
  Clause c(lits.begin(), lits.end());
  for (Literal l : c)
    if (l == 0)
      throw CnfError(CnfError::Code::ZeroLiteral, "zero literal");
  std::sort(c.begin(), c.end(), literal_less);
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

inline bool is_canonical(std::span<const Literal> c) {
  if (c.empty())
    return false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i] == 0)
      return false;
    if (i > 0 && !literal_less(c[i - 1], c[i]))
      return false;
  }
  return true;
}

struct ClauseHash {
  std::size_t operator()(const Clause &c) const noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Literal l : c) {
      h ^= static_cast<std::uint32_t>(l);
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

/// True iff some literal of `c` is satisfied. `values[i-1]` is x_i.
inline bool clause_satisfied(std::span<const Literal> c, const Assignment &values) {
  for (Literal l : c) {
    const bool v = values[var_of(l) - 1];
    if ((l > 0) == v)
      return true;
  }
  return false;
}

namespace detail {

struct VarCounter {
  std::size_t count = 0;
};

struct Layer {
  std::vector<Clause> clauses;
  std::unordered_map<Clause, std::size_t, ClauseHash> position;
};

// A contiguous prefix of a layer that is visible to a view.
struct Segment {
  std::shared_ptr<Layer> layer;
  // npos: the whole layer, including future appends.
  std::size_t limit;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t size() const { return limit == npos ? layer->clauses.size() : limit; }
  bool contains(const Clause &c) const {
    auto it = layer->position.find(c);
    return it != layer->position.end() && it->second < size();
  }
};

// Shared by an origin and all of its forks.
struct Family {
  mutable std::shared_mutex mutex;
};

} // namespace detail

/// A CNF view: either a base store or a fork of another view.
///
/// Forks never copy clause data. An attached fork sees the origin's current
/// clauses plus its own layer and shares the origin's variable counter; a
/// detached fork sees the origin's clauses as of fork time plus its own layer
/// and counts variables independently.
class CnfStore {
public:
  explicit CnfStore(std::size_t initial_vars = 0)
      : family_(std::make_shared<detail::Family>()),
        vars_(std::make_shared<detail::VarCounter>(detail::VarCounter{initial_vars})),
        own_(std::make_shared<detail::Layer>()) {}

  CnfStore(const CnfStore &) = delete;
  CnfStore &operator=(const CnfStore &) = delete;
  CnfStore(CnfStore &&) noexcept = default;
  CnfStore &operator=(CnfStore &&) noexcept = default;

  std::size_t var_count() const {
    std::shared_lock lock(family_->mutex);
    return vars_->count;
  }

  Literal add_variable() { return add_variables(1); }

  /// Returns the first of `n` new variable indices.
  Literal add_variables(std::size_t n) {
    if (n == 0)
      throw CnfError(CnfError::Code::InvalidArgument, "variable count must be positive");
    std::unique_lock lock(family_->mutex);
    const std::size_t first = vars_->count + 1;
    vars_->count += n;
    return static_cast<Literal>(first);
  }

  /// Adds the canonical form of `lits`; false when it is already visible.
  bool add_clause(std::span<const Literal> lits) {
    Clause c = canonical(lits);
    std::unique_lock lock(family_->mutex);
    for (Literal l : c)
      if (var_of(l) > vars_->count)
        throw CnfError(CnfError::Code::OutOfRange,
                       "literal " + std::to_string(l) + " exceeds variable count " +
                           std::to_string(vars_->count));
    if (visible_locked(c))
      return false;
    own_->position.emplace(c, own_->clauses.size());
    own_->clauses.push_back(std::move(c));
    return true;
  }

  bool add_clause(std::initializer_list<Literal> lits) {
    return add_clause(std::span<const Literal>(lits.begin(), lits.size()));
  }

  bool contains(std::span<const Literal> lits) const {
    Clause c = canonical(lits);
    std::shared_lock lock(family_->mutex);
    return visible_locked(c);
  }

  /// All visible clauses, inherited segments first, in insertion order.
  std::vector<Clause> clauses() const {
    std::shared_lock lock(family_->mutex);
    std::vector<Clause> out;
    auto segs = segments_locked();
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const auto &seg = segs[s];
      const std::size_t n = seg.size();
      for (std::size_t i = 0; i < n; ++i) {
        const Clause &c = seg.layer->clauses[i];
        // An attached origin may later add a clause this fork already holds.
        if (s > 0 && visible_in(segs, s, c))
          continue;
        out.push_back(c);
      }
    }
    return out;
  }

  std::size_t clause_count() const { return clauses().size(); }

  /// Clauses of this view's own layer starting at `cursor`. For a base store
  /// this is the append-only tail of clauses().
  std::vector<Clause> own_clauses_since(std::size_t cursor) const {
    std::shared_lock lock(family_->mutex);
    std::vector<Clause> out;
    for (std::size_t i = cursor; i < own_->clauses.size(); ++i)
      out.push_back(own_->clauses[i]);
    return out;
  }

  std::size_t own_clause_count() const {
    std::shared_lock lock(family_->mutex);
    return own_->clauses.size();
  }

  bool is_fork() const noexcept { return !inherited_.empty() || parent_ != nullptr; }
  bool detached() const noexcept { return detached_; }

  /// Creates a layered view over this one; see the class comment.
  CnfStore fork(bool detach) const {
    std::unique_lock lock(family_->mutex);
    CnfStore f(family_);
    f.detached_ = detach;
    if (detach) {
      for (auto seg : segments_locked()) {
        seg.limit = seg.size();
        f.inherited_.push_back(std::move(seg));
      }
      f.vars_ = std::make_shared<detail::VarCounter>(detail::VarCounter{vars_->count});
    } else {
      f.parent_ = std::make_shared<Parent>(Parent{inherited_, parent_, own_, vars_});
      f.vars_ = vars_;
    }
    return f;
  }

  /// True iff every visible clause has a satisfied literal.
  bool evaluate(const Assignment &values) const {
    std::shared_lock lock(family_->mutex);
    if (values.size() != vars_->count)
      throw CnfError(CnfError::Code::LengthMismatch,
                     "assignment length " + std::to_string(values.size()) +
                         " != variable count " + std::to_string(vars_->count));
    for (const auto &seg : segments_locked()) {
      const std::size_t n = seg.size();
      for (std::size_t i = 0; i < n; ++i)
        if (!clause_satisfied(seg.layer->clauses[i], values))
          return false;
    }
    return true;
  }

private:
  // Everything an attached fork needs to recompute its parent's segments.
  struct Parent {
    std::vector<detail::Segment> inherited;
    std::shared_ptr<Parent> parent;
    std::shared_ptr<detail::Layer> own;
    std::shared_ptr<detail::VarCounter> vars;

    void collect(std::vector<detail::Segment> &out) const {
      if (parent)
        parent->collect(out);
      else
        out.insert(out.end(), inherited.begin(), inherited.end());
      out.push_back({own, detail::Segment::npos});
    }
  };

  explicit CnfStore(std::shared_ptr<detail::Family> family)
      : family_(std::move(family)), own_(std::make_shared<detail::Layer>()) {}

  std::vector<detail::Segment> segments_locked() const {
    std::vector<detail::Segment> segs;
    if (parent_)
      parent_->collect(segs);
    else
      segs = inherited_;
    segs.push_back({own_, detail::Segment::npos});
    return segs;
  }

  static bool visible_in(const std::vector<detail::Segment> &segs, std::size_t upto,
                         const Clause &c) {
    for (std::size_t s = 0; s < upto; ++s)
      if (segs[s].contains(c))
        return true;
    return false;
  }

  bool visible_locked(const Clause &c) const {
    auto segs = segments_locked();
    return visible_in(segs, segs.size(), c);
  }

  std::shared_ptr<detail::Family> family_;
  std::shared_ptr<detail::VarCounter> vars_;
  std::shared_ptr<detail::Layer> own_;
  // Detached forks: frozen segments. Attached forks: empty, see parent_.
  std::vector<detail::Segment> inherited_;
  std::shared_ptr<Parent> parent_;
  bool detached_ = false;
};

} // namespace satmem
