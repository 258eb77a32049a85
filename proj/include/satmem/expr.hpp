#pragma once

// Boolean expression DAGs and their Tseitin-style lowering into a clause sink.
//
// Two entry points share one gate cache:
//   CircuitBuilder::build()        returns a literal equal to an expression,
//   CircuitBuilder::assert_formula() adds clauses that make a formula hold.
// Every auxiliary variable is defined by a full equivalence, so it is
// functionally determined by the variables it was built from.

#include "satmem/cnf.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace satmem {

/// Destination for generated variables and clauses.
class ClauseSink {
public:
  virtual ~ClauseSink() = default;
  virtual std::size_t var_count() const = 0;
  /// Returns the first of `n` fresh variables.
  virtual Literal new_variables(std::size_t n) = 0;
  virtual void add_clause(std::span<const Literal> lits) = 0;
};

class StoreSink final : public ClauseSink {
public:
  explicit StoreSink(CnfStore &store) : store_(store) {}
  std::size_t var_count() const override { return store_.var_count(); }
  Literal new_variables(std::size_t n) override { return store_.add_variables(n); }
  void add_clause(std::span<const Literal> lits) override { store_.add_clause(lits); }

private:
  CnfStore &store_;
};

enum class ExprKind { Var, Const, Not, And, Or, Xor, Maj3, Impl, Equiv };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprKind kind;
  std::vector<Expr> children;
  Literal var = 0;   // Var only; may be negative
  bool value = false; // Const only
};

class ExprError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

namespace expr {

inline Expr var(Literal v) {
  if (v == 0)
    throw ExprError("variable literal must be nonzero");
  return std::make_shared<ExprNode>(ExprNode{ExprKind::Var, {}, v, false});
}
inline Expr constant(bool b) { return std::make_shared<ExprNode>(ExprNode{ExprKind::Const, {}, 0, b}); }
inline Expr make(ExprKind k, std::vector<Expr> children) {
  return std::make_shared<ExprNode>(ExprNode{k, std::move(children), 0, false});
}
inline Expr not_(Expr a) { return make(ExprKind::Not, {std::move(a)}); }
inline Expr and_(std::vector<Expr> xs) { return make(ExprKind::And, std::move(xs)); }
inline Expr or_(std::vector<Expr> xs) { return make(ExprKind::Or, std::move(xs)); }
inline Expr xor_(Expr a, Expr b) { return make(ExprKind::Xor, {std::move(a), std::move(b)}); }
inline Expr maj3(Expr a, Expr b, Expr c) { return make(ExprKind::Maj3, {std::move(a), std::move(b), std::move(c)}); }
inline Expr impl(Expr a, Expr b) { return make(ExprKind::Impl, {std::move(a), std::move(b)}); }
inline Expr equiv(Expr a, Expr b) { return make(ExprKind::Equiv, {std::move(a), std::move(b)}); }

inline void validate(const ExprNode &n) {
  const std::size_t k = n.children.size();
  bool ok = true;
  switch (n.kind) {
  case ExprKind::Var:
    ok = k == 0 && n.var != 0;
    break;
  case ExprKind::Const:
    ok = k == 0;
    break;
  case ExprKind::Not:
    ok = k == 1;
    break;
  case ExprKind::And:
  case ExprKind::Or:
    ok = k >= 2;
    break;
  case ExprKind::Xor:
  case ExprKind::Impl:
  case ExprKind::Equiv:
    ok = k == 2;
    break;
  case ExprKind::Maj3:
    ok = k == 3;
    break;
  }
  if (!ok)
    throw ExprError("malformed expression node arity");
  for (const auto &c : n.children)
    if (!c)
      throw ExprError("null child");
}

/// Direct evaluation; `values[i-1]` is x_i.
inline bool eval(const Expr &e, const Assignment &values) {
  std::unordered_map<const ExprNode *, bool> memo;
  std::function<bool(const Expr &)> go = [&](const Expr &n) -> bool {
    if (auto it = memo.find(n.get()); it != memo.end())
      return it->second;
    bool r = false;
    const auto &c = n->children;
    switch (n->kind) {
    case ExprKind::Var:
      r = n->var > 0 ? values.at(n->var - 1) : !values.at(-n->var - 1);
      break;
    case ExprKind::Const:
      r = n->value;
      break;
    case ExprKind::Not:
      r = !go(c[0]);
      break;
    case ExprKind::And:
      r = true;
      for (auto &x : c)
        r = go(x) && r;
      break;
    case ExprKind::Or:
      for (auto &x : c)
        r = go(x) || r;
      break;
    case ExprKind::Xor:
      r = go(c[0]) != go(c[1]);
      break;
    case ExprKind::Maj3:
      r = (int(go(c[0])) + int(go(c[1])) + int(go(c[2]))) >= 2;
      break;
    case ExprKind::Impl:
      r = !go(c[0]) || go(c[1]);
      break;
    case ExprKind::Equiv:
      r = go(c[0]) == go(c[1]);
      break;
    }
    memo[n.get()] = r;
    return r;
  };
  return go(e);
}

} // namespace expr

/// Clauses for `out <=> f(inputs)` read off the truth table: the rows that
/// violate the equivalence are merged into prime cubes, one clause each.
inline std::vector<Clause> equivalence_clauses(Literal out, std::span<const Literal> inputs,
                                               const std::function<bool(unsigned)> &f) {
  const unsigned k = static_cast<unsigned>(inputs.size());
  if (k > 4)
    throw std::invalid_argument("truth-table extraction supports at most 4 inputs");
  // Position 0 is `out`, position i+1 is inputs[i].
  const unsigned n = k + 1;
  struct Cube {
    unsigned value, care;
    bool operator<(const Cube &o) const { return std::tie(care, value) < std::tie(o.care, o.value); }
    bool operator==(const Cube &o) const { return care == o.care && value == o.value; }
  };
  const unsigned full = (1u << n) - 1;
  std::vector<Cube> layer;
  for (unsigned row = 0; row < (1u << k); ++row) {
    const bool want = f(row);
    const unsigned bad_out = want ? 0u : 1u;
    layer.push_back({bad_out | (row << 1), full});
  }
  std::vector<Cube> primes;
  while (!layer.empty()) {
    std::vector<Cube> next;
    std::vector<bool> merged(layer.size(), false);
    for (std::size_t i = 0; i < layer.size(); ++i)
      for (std::size_t j = i + 1; j < layer.size(); ++j) {
        if (layer[i].care != layer[j].care)
          continue;
        const unsigned diff = (layer[i].value ^ layer[j].value) & layer[i].care;
        if (diff && !(diff & (diff - 1))) {
          merged[i] = merged[j] = true;
          next.push_back({layer[i].value & ~diff, layer[i].care & ~diff});
        }
      }
    for (std::size_t i = 0; i < layer.size(); ++i)
      if (!merged[i])
        primes.push_back(layer[i]);
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    layer = std::move(next);
  }
  std::stable_sort(primes.begin(), primes.end(), [](const Cube &a, const Cube &b) {
    return __builtin_popcount(a.care) < __builtin_popcount(b.care);
  });
  std::vector<Clause> out_clauses;
  for (const Cube &c : primes) {
    Clause cl;
    for (unsigned p = 0; p < n; ++p) {
      if (!((c.care >> p) & 1))
        continue;
      const Literal base = p == 0 ? out : inputs[p - 1];
      // The clause must be false exactly on the cube.
      cl.push_back(((c.value >> p) & 1) ? -base : base);
    }
    out_clauses.push_back(std::move(cl));
  }
  return out_clauses;
}

/// Emits gates into a sink with literal reuse: structurally equal gates get
/// the same output literal and their clauses are emitted once.
class CircuitBuilder {
public:
  explicit CircuitBuilder(ClauseSink &sink) : sink_(sink) {}

  ClauseSink &sink() noexcept { return sink_; }

  Literal fresh() { return sink_.new_variables(1); }

  void emit(std::span<const Literal> lits) {
    sink_.add_clause(lits);
    ++clauses_;
  }
  void emit(std::initializer_list<Literal> lits) { emit(std::span<const Literal>(lits.begin(), lits.size())); }

  std::size_t clauses_emitted() const noexcept { return clauses_; }

  /// A variable forced true by a unit clause.
  Literal const_true() {
    if (!true_) {
      true_ = fresh();
      emit({true_});
    }
    return true_;
  }

  /// A variable forced false by a unit clause.
  Literal const_false() {
    if (!false_) {
      false_ = fresh();
      emit({-false_});
    }
    return false_;
  }

  Literal constant(bool b) { return b ? const_true() : const_false(); }

  /// nullopt unless `l` is one of the reserved constant literals.
  std::optional<bool> known(Literal l) const {
    if (true_ && var_of(l) == var_of(true_))
      return l == true_;
    if (false_ && var_of(l) == var_of(false_))
      return l != false_;
    return std::nullopt;
  }

  Literal and2(Literal a, Literal b) {
    if (auto ka = known(a))
      return *ka ? b : constant(false);
    if (auto kb = known(b))
      return *kb ? a : constant(false);
    if (a == b)
      return a;
    if (a == -b)
      return constant(false);
    return gate(Gate::And, {a, b});
  }

  Literal or2(Literal a, Literal b) {
    if (auto ka = known(a))
      return *ka ? constant(true) : b;
    if (auto kb = known(b))
      return *kb ? constant(true) : a;
    if (a == b)
      return a;
    if (a == -b)
      return constant(true);
    return gate(Gate::Or, {a, b});
  }

  Literal xor2(Literal a, Literal b) {
    if (auto ka = known(a))
      return *ka ? -b : b;
    if (auto kb = known(b))
      return *kb ? -a : a;
    if (a == b)
      return constant(false);
    if (a == -b)
      return constant(true);
    // Normalize polarity so x^y, !x^!y share one gate.
    bool flip = false;
    if (a < 0) {
      a = -a;
      flip = !flip;
    }
    if (b < 0) {
      b = -b;
      flip = !flip;
    }
    const Literal g = gate(Gate::Xor, {a, b});
    return flip ? -g : g;
  }

  Literal maj3(Literal a, Literal b, Literal c) {
    std::array<Literal, 3> v{a, b, c};
    for (int i = 0; i < 3; ++i)
      if (auto k = known(v[i])) {
        const Literal x = v[(i + 1) % 3], y = v[(i + 2) % 3];
        return *k ? or2(x, y) : and2(x, y);
      }
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        if (v[i] == v[j])
          return v[i];
        if (v[i] == -v[j])
          return v[3 - i - j];
      }
    return gate(Gate::Maj3, {a, b, c});
  }

  /// n-ary conjunction split into a right-nested chain of binary gates.
  Literal and_n(std::span<const Literal> xs) {
    if (xs.empty())
      return constant(true);
    Literal acc = xs.back();
    for (std::size_t i = xs.size() - 1; i-- > 0;)
      acc = and2(xs[i], acc);
    return acc;
  }

  Literal or_n(std::span<const Literal> xs) {
    if (xs.empty())
      return constant(false);
    Literal acc = xs.back();
    for (std::size_t i = xs.size() - 1; i-- > 0;)
      acc = or2(xs[i], acc);
    return acc;
  }

  /// A literal whose value equals `root` in every model of the emitted clauses.
  Literal build(const Expr &root) {
    if (!root)
      throw ExprError("null expression");
    if (auto it = built_.find(root.get()); it != built_.end())
      return it->second;
    expr::validate(*root);
    const auto &c = root->children;
    Literal r = 0;
    switch (root->kind) {
    case ExprKind::Var:
      check_var(root->var);
      r = root->var;
      break;
    case ExprKind::Const:
      r = constant(root->value);
      break;
    case ExprKind::Not:
      r = -build(c[0]);
      break;
    case ExprKind::And:
    case ExprKind::Or: {
      std::vector<Literal> xs;
      for (auto &x : c)
        xs.push_back(build(x));
      r = root->kind == ExprKind::And ? and_n(xs) : or_n(xs);
      break;
    }
    case ExprKind::Xor:
      r = xor2(build(c[0]), build(c[1]));
      break;
    case ExprKind::Maj3:
      r = maj3(build(c[0]), build(c[1]), build(c[2]));
      break;
    case ExprKind::Impl:
      r = or2(-build(c[0]), build(c[1]));
      break;
    case ExprKind::Equiv:
      r = -xor2(build(c[0]), build(c[1]));
      break;
    }
    built_[root.get()] = r;
    keep_.push_back(root);
    return r;
  }

  /// Adds clauses asserting `formula`. The formula is rewritten to And/Or/Not,
  /// negations are pushed to the variables, inner subformulas get defining
  /// variables, long definitions are split into binary ones, and each binary
  /// definition is turned into clauses from its truth table. The result is
  /// equisatisfiable and every formula model extends uniquely.
  void assert_formula(const Expr &formula) {
    if (!formula)
      throw ExprError("null expression");
    Nnf top = to_nnf(formula, false);
    assert_nnf(top);
  }

private:
  enum class Gate { And, Or, Xor, Maj3 };

  void check_var(Literal v) const {
    if (var_of(v) > sink_.var_count())
      throw CnfError(CnfError::Code::OutOfRange, "expression variable " + std::to_string(v) +
                                                     " not in memory");
  }

  Literal gate(Gate g, std::vector<Literal> in) {
    std::sort(in.begin(), in.end());
    auto key = std::make_pair(g, in);
    if (auto it = gates_.find(key); it != gates_.end())
      return it->second;
    const Literal t = fresh();
    define(t, g, in);
    gates_.emplace(std::move(key), t);
    return t;
  }

  void define(Literal t, Gate g, std::span<const Literal> in) {
    std::function<bool(unsigned)> f;
    switch (g) {
    case Gate::And:
      f = [](unsigned r) { return r == 3u; };
      break;
    case Gate::Or:
      f = [](unsigned r) { return r != 0u; };
      break;
    case Gate::Xor:
      f = [](unsigned r) { return r == 1u || r == 2u; };
      break;
    case Gate::Maj3:
      f = [](unsigned r) { return __builtin_popcount(r) >= 2; };
      break;
    }
    for (auto &cl : equivalence_clauses(t, in, f))
      emit(cl);
  }

  // Negation normal form over And/Or with literal leaves.
  struct NnfNode;
  using Nnf = std::shared_ptr<NnfNode>;
  struct NnfNode {
    enum Kind { Lit, True, False, And, Or } kind;
    Literal lit = 0;
    std::vector<Nnf> children;
    Literal defined = 0; // defining variable once introduced
  };

  static Nnf nnf_const(bool b) {
    auto n = std::make_shared<NnfNode>();
    n->kind = b ? NnfNode::True : NnfNode::False;
    return n;
  }

  // Rewrites auxiliaries and applies De Morgan in one pass; memoized per
  // (node, polarity) so DAG sharing survives.
  Nnf to_nnf(const Expr &e, bool neg) {
    auto key = std::make_pair(e.get(), neg);
    if (auto it = nnf_memo_.find(key); it != nnf_memo_.end())
      return it->second;
    expr::validate(*e);
    keep_.push_back(e);
    const auto &c = e->children;
    Nnf r;
    auto junction = [&](bool conj, std::vector<Nnf> xs) { return make_junction(conj, std::move(xs)); };
    switch (e->kind) {
    case ExprKind::Var: {
      check_var(e->var);
      r = std::make_shared<NnfNode>();
      r->kind = NnfNode::Lit;
      r->lit = neg ? -e->var : e->var;
      break;
    }
    case ExprKind::Const:
      r = nnf_const(e->value != neg);
      break;
    case ExprKind::Not:
      r = to_nnf(c[0], !neg);
      break;
    case ExprKind::And:
    case ExprKind::Or: {
      // De Morgan: a negated conjunction is a disjunction of negations.
      const bool conj = (e->kind == ExprKind::And) != neg;
      std::vector<Nnf> xs;
      for (auto &x : c)
        xs.push_back(to_nnf(x, neg));
      r = junction(conj, std::move(xs));
      break;
    }
    case ExprKind::Impl: // a -> b  ==  !a | b
      r = neg ? junction(true, {to_nnf(c[0], false), to_nnf(c[1], true)})
              : junction(false, {to_nnf(c[0], true), to_nnf(c[1], false)});
      break;
    case ExprKind::Xor:
    case ExprKind::Equiv: {
      // a ^ b == (a & !b) | (!a & b);  a <-> b == (a & b) | (!a & !b)
      const bool is_xor = (e->kind == ExprKind::Xor) != neg;
      if (is_xor)
        r = junction(false, {junction(true, {to_nnf(c[0], false), to_nnf(c[1], true)}),
                             junction(true, {to_nnf(c[0], true), to_nnf(c[1], false)})});
      else
        r = junction(false, {junction(true, {to_nnf(c[0], false), to_nnf(c[1], false)}),
                             junction(true, {to_nnf(c[0], true), to_nnf(c[1], true)})});
      break;
    }
    case ExprKind::Maj3: {
      // maj(a,b,c) == (a&b) | (a&c) | (b&c); its negation is maj(!a,!b,!c).
      auto a = to_nnf(c[0], neg), b = to_nnf(c[1], neg), d = to_nnf(c[2], neg);
      r = junction(false, {junction(true, {a, b}), junction(true, {a, d}), junction(true, {b, d})});
      break;
    }
    }
    nnf_memo_[key] = r;
    return r;
  }

  // Flattens nested junctions of the same kind and folds constants.
  static Nnf make_junction(bool conj, std::vector<Nnf> xs) {
    const auto same = conj ? NnfNode::And : NnfNode::Or;
    const auto absorbing = conj ? NnfNode::False : NnfNode::True;
    const auto neutral = conj ? NnfNode::True : NnfNode::False;
    std::vector<Nnf> flat;
    for (auto &x : xs) {
      if (x->kind == absorbing)
        return nnf_const(!conj);
      if (x->kind == neutral)
        continue;
      if (x->kind == same && !x->defined)
        flat.insert(flat.end(), x->children.begin(), x->children.end());
      else
        flat.push_back(x);
    }
    if (flat.empty())
      return nnf_const(conj);
    if (flat.size() == 1)
      return flat[0];
    auto n = std::make_shared<NnfNode>();
    n->kind = same;
    n->children = std::move(flat);
    return n;
  }

  void assert_nnf(const Nnf &n) {
    switch (n->kind) {
    case NnfNode::True:
      return;
    case NnfNode::False:
      emit({const_false()});
      return;
    case NnfNode::Lit:
      emit({n->lit});
      return;
    case NnfNode::And:
      for (auto &c : n->children)
        assert_nnf(c);
      return;
    case NnfNode::Or: {
      Clause cl;
      for (auto &c : n->children)
        cl.push_back(literal_for(c));
      emit(cl);
      return;
    }
    }
  }

  // A literal equivalent to an inner subformula, introducing a variable for
  // junctions. Variables are allocated outermost first.
  Literal literal_for(const Nnf &n) {
    switch (n->kind) {
    case NnfNode::Lit:
      return n->lit;
    case NnfNode::True:
      return const_true();
    case NnfNode::False:
      return const_false();
    case NnfNode::And:
    case NnfNode::Or:
      break;
    }
    if (n->defined)
      return n->defined;
    const Literal t = fresh();
    n->defined = t;
    std::vector<Literal> lits;
    for (auto &c : n->children)
      lits.push_back(literal_for(c));
    define_chain(t, n->kind == NnfNode::And ? Gate::And : Gate::Or, lits);
    return t;
  }

  // t <=> op(x0, op(x1, ...)) with a new variable for each inner tail.
  void define_chain(Literal t, Gate g, std::span<const Literal> xs) {
    if (xs.size() == 2) {
      const Literal in[2] = {xs[0], xs[1]};
      define(t, g, in);
      return;
    }
    const Literal tail = fresh();
    const Literal in[2] = {xs[0], tail};
    define(t, g, in);
    define_chain(tail, g, xs.subspan(1));
  }

  ClauseSink &sink_;
  std::size_t clauses_ = 0;
  Literal true_ = 0, false_ = 0;
  std::map<std::pair<Gate, std::vector<Literal>>, Literal> gates_;
  std::unordered_map<const ExprNode *, Literal> built_;
  std::map<std::pair<const ExprNode *, bool>, Nnf> nnf_memo_;
  std::vector<Expr> keep_; // pins memo keys
};

/// Lowers `formula` into `ctx`'s sink and returns the number of clauses added.
inline std::size_t lower_to_cnf(const Expr &formula, CircuitBuilder &ctx) {
  const std::size_t before = ctx.clauses_emitted();
  ctx.assert_formula(formula);
  return ctx.clauses_emitted() - before;
}

} // namespace satmem
