#pragma once

// Integer factorization as CNF: u * v = N over l-bit factors.
//
// Layout: u is x_1..x_l and v is x_{l+1}..x_{2l}, least significant bit first.
// The top bit of each factor is a sign bit forced to 0, so factors range over
// [0, 2^(l-1)). Auxiliary variables follow the factor bits.

#include "satmem/arith.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace satmem {

class FactorError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct FactorizationSpec {
  std::size_t l = 0;
  std::vector<bool> product_bits; // 2l bits, LSB first

  void validate() const {
    if (l < 2 || (l & (l - 1)))
      throw FactorError("factor length must be a power of two >= 2, got " + std::to_string(l));
    if (product_bits.size() != 2 * l)
      throw FactorError("expected " + std::to_string(2 * l) + " product bits, got " +
                        std::to_string(product_bits.size()));
  }

  static FactorizationSpec from_integer(std::size_t l, std::uint64_t n) {
    FactorizationSpec s;
    s.l = l;
    if (l < 2 || (l & (l - 1)))
      s.validate();
    if (2 * l < 64 && (n >> (2 * l)) != 0)
      throw FactorError(std::to_string(n) + " does not fit in " + std::to_string(2 * l) + " product bits");
    if (2 * l > 64)
      throw FactorError("factor length above 32 is not supported");
    for (std::size_t i = 0; i < 2 * l; ++i)
      s.product_bits.push_back(i < 64 && ((n >> i) & 1));
    return s;
  }

  /// Product from a bit string written most significant bit first.
  static FactorizationSpec from_bit_string(std::size_t l, const std::string &msb_first) {
    FactorizationSpec s;
    s.l = l;
    if (msb_first.empty() || msb_first.size() > 2 * l)
      throw FactorError("product bit string must have 1.." + std::to_string(2 * l) + " bits");
    for (auto it = msb_first.rbegin(); it != msb_first.rend(); ++it) {
      if (*it != '0' && *it != '1')
        throw FactorError("product bit string may contain only 0 and 1");
      s.product_bits.push_back(*it == '1');
    }
    s.product_bits.resize(2 * l, false);
    s.validate();
    return s;
  }

  std::uint64_t product() const {
    std::uint64_t n = 0;
    for (std::size_t i = product_bits.size(); i-- > 0;)
      n = (n << 1) | (product_bits[i] ? 1u : 0u);
    return n;
  }
};

struct FactorLayout {
  std::vector<Literal> u_vars, v_vars;
};

/// Emits the factorization constraints into `sink`, growing it to at least 2l
/// variables first. Every model restricted to the factor bits is a pair
/// 2 <= v <= u < 2^(l-1) with u * v = N, and all other variables are
/// determined by the factor bits.
inline FactorLayout build_factorization(const FactorizationSpec &spec, ClauseSink &sink) {
  spec.validate();
  const std::size_t l = spec.l;
  if (sink.var_count() < 2 * l)
    sink.new_variables(2 * l - sink.var_count());
  CircuitBuilder ctx(sink);
  const BitVec u = BitVec::vars(1, l), v = BitVec::vars(static_cast<Literal>(l) + 1, l);

  const BitVec p = product_with(u, v, ctx);
  for (std::size_t i = 0; i < 2 * l; ++i)
    ctx.emit({spec.product_bits[i] ? p[i] : -p[i]});

  // Nontriviality: some bit other than the lowest and the sign bit is set,
  // which excludes the factors 0 and 1.
  for (const BitVec *f : {&u, &v}) {
    Clause c(f->bits.begin() + 1, f->bits.end() - 1);
    if (c.empty())
      c.push_back(ctx.const_false());
    ctx.emit(c);
  }

  ctx.emit({-u.msb()});
  ctx.emit({-v.msb()});

  // u - v >= 0, evaluated one bit wider so the difference cannot overflow.
  const BitVec d = sum_with(sign_extend(u, l + 1), negation(sign_extend(v, l + 1), ctx), ctx);
  ctx.emit({-d.msb()});

  FactorLayout out;
  out.u_vars = u.bits;
  out.v_vars = v.bits;
  return out;
}

inline FactorLayout build_factorization(const FactorizationSpec &spec, CnfStore &store) {
  StoreSink sink(store);
  return build_factorization(spec, sink);
}

/// Reads u from x_1..x_l and v from x_{l+1}..x_{2l}.
inline std::pair<std::uint64_t, std::uint64_t> decode_model(const Assignment &model, std::size_t l) {
  if (model.size() < 2 * l)
    throw FactorError("model has " + std::to_string(model.size()) + " values, need " + std::to_string(2 * l));
  if (l > 32)
    throw FactorError("factor length above 32 is not supported");
  std::uint64_t u = 0, v = 0;
  for (std::size_t i = l; i-- > 0;) {
    u = (u << 1) | (model[i] ? 1u : 0u);
    v = (v << 1) | (model[l + i] ? 1u : 0u);
  }
  return {u, v};
}

inline std::pair<std::uint64_t, std::uint64_t> decode_model(const Assignment &model, const FactorizationSpec &spec) {
  return decode_model(model, spec.l);
}

} // namespace satmem
