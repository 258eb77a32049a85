#pragma once

// Fixed-width two's-complement circuits over bit vectors of literals.
// Bit 0 is the least significant bit; results wrap modulo 2^width.

#include "satmem/expr.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace satmem {

struct BitVec {
  std::vector<Literal> bits; // LSB first

  std::size_t width() const noexcept { return bits.size(); }
  Literal operator[](std::size_t i) const { return bits.at(i); }
  Literal msb() const { return bits.at(bits.size() - 1); }

  /// Bits x_first .. x_{first+width-1}.
  static BitVec vars(Literal first, std::size_t width) {
    BitVec v;
    for (std::size_t i = 0; i < width; ++i)
      v.bits.push_back(first + static_cast<Literal>(i));
    return v;
  }
  static BitVec constant(std::uint64_t value, std::size_t width, CircuitBuilder &ctx) {
    BitVec v;
    for (std::size_t i = 0; i < width; ++i)
      v.bits.push_back(ctx.constant(i < 64 && ((value >> i) & 1)));
    return v;
  }

  BitVec slice(std::size_t lo, std::size_t n) const {
    if (lo + n > bits.size())
      throw std::out_of_range("bit slice out of range");
    return BitVec{{bits.begin() + static_cast<std::ptrdiff_t>(lo),
                   bits.begin() + static_cast<std::ptrdiff_t>(lo + n)}};
  }
};

class WidthError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline BitVec zero_extend(const BitVec &a, std::size_t width, CircuitBuilder &ctx) {
  BitVec r = a;
  r.bits.resize(std::min(width, a.width()));
  while (r.width() < width)
    r.bits.push_back(ctx.constant(false));
  return r;
}

inline BitVec sign_extend(const BitVec &a, std::size_t width) {
  if (a.width() == 0)
    throw WidthError("cannot sign-extend an empty vector");
  BitVec r = a;
  r.bits.resize(std::min(width, a.width()));
  while (r.width() < width)
    r.bits.push_back(a.msb());
  return r;
}

/// a << k, keeping the width of `a`.
inline BitVec shift_left(const BitVec &a, std::size_t k, CircuitBuilder &ctx) {
  BitVec r;
  for (std::size_t i = 0; i < a.width(); ++i)
    r.bits.push_back(i < k ? ctx.constant(false) : a.bits[i - k]);
  return r;
}

/// -a: every bit inverted, then +1 rippled through half adders.
inline BitVec negation(const BitVec &a, CircuitBuilder &ctx) {
  BitVec r;
  Literal carry = ctx.constant(true);
  for (Literal bit : a.bits) {
    const Literal x = -bit;
    r.bits.push_back(ctx.xor2(x, carry));
    carry = ctx.and2(x, carry);
  }
  return r;
}

/// a + b with the final carry discarded.
inline BitVec sum_with(const BitVec &a, const BitVec &b, CircuitBuilder &ctx) {
  if (a.width() != b.width())
    throw WidthError("sum_with operands differ in width");
  BitVec r;
  Literal carry = 0;
  for (std::size_t i = 0; i < a.width(); ++i) {
    const bool last = i + 1 == a.width();
    if (i == 0) {
      r.bits.push_back(ctx.xor2(a[0], b[0]));
      if (!last)
        carry = ctx.and2(a[0], b[0]);
    } else {
      r.bits.push_back(ctx.xor2(ctx.xor2(a[i], b[i]), carry));
      if (!last)
        carry = ctx.maj3(a[i], b[i], carry);
    }
  }
  return r;
}

/// a if s is false, -a if s is true.
inline BitVec conditional_negation(const BitVec &a, Literal s, CircuitBuilder &ctx) {
  BitVec r;
  Literal carry = s;
  for (Literal bit : a.bits) {
    const Literal y = ctx.xor2(bit, s);
    r.bits.push_back(ctx.xor2(y, carry));
    carry = ctx.and2(y, carry);
  }
  return r;
}

namespace detail {

inline BitVec schoolbook(const BitVec &a, const BitVec &b, CircuitBuilder &ctx) {
  const std::size_t w = a.width(), out = 2 * w;
  BitVec acc = BitVec::constant(0, out, ctx);
  for (std::size_t i = 0; i < w; ++i) {
    BitVec row;
    for (std::size_t j = 0; j < out; ++j)
      row.bits.push_back(j >= i && j - i < w ? ctx.and2(a[j - i], b[i]) : ctx.constant(false));
    acc = sum_with(acc, row, ctx);
  }
  return acc;
}

// Sign bit and magnitude of x - y, both n bits wide, unsigned.
inline std::pair<Literal, BitVec> abs_difference(const BitVec &x, const BitVec &y, CircuitBuilder &ctx) {
  const std::size_t n = x.width();
  BitVec d = sum_with(zero_extend(x, n + 1, ctx), negation(zero_extend(y, n + 1, ctx), ctx), ctx);
  const Literal sign = d.msb();
  BitVec mag = conditional_negation(d, sign, ctx).slice(0, n);
  return {sign, mag};
}

} // namespace detail

/// Unsigned a * b as a 2w-bit vector, Karatsuba recursion for w >= 4.
/// With a = U1*2^n + U0 and b = V1*2^n + V0:
///   a*b = P2*2^2n + (P2 + P0 + (U1-U0)(V0-V1))*2^n + P0.
/// The middle product is formed from magnitudes and its sign is applied at
/// full width, so every partial product stays unsigned.
inline BitVec product_with(const BitVec &a, const BitVec &b, CircuitBuilder &ctx) {
  const std::size_t w = a.width();
  if (w != b.width())
    throw WidthError("product_with operands differ in width");
  if (w == 0 || (w & (w - 1)))
    throw WidthError("product_with width must be a power of two");
  if (w <= 2)
    return detail::schoolbook(a, b, ctx);
  const std::size_t n = w / 2, out = 2 * w;
  const BitVec u0 = a.slice(0, n), u1 = a.slice(n, n);
  const BitVec v0 = b.slice(0, n), v1 = b.slice(n, n);
  const BitVec p2 = zero_extend(product_with(u1, v1, ctx), out, ctx);
  const BitVec p0 = zero_extend(product_with(u0, v0, ctx), out, ctx);
  auto [su, mu] = detail::abs_difference(u1, u0, ctx);
  auto [sv, mv] = detail::abs_difference(v0, v1, ctx);
  const BitVec m = zero_extend(product_with(mu, mv, ctx), out, ctx);
  const BitVec mid = conditional_negation(m, ctx.xor2(su, sv), ctx);

  BitVec acc = sum_with(shift_left(p2, 2 * n, ctx), shift_left(p2, n, ctx), ctx);
  acc = sum_with(acc, shift_left(mid, n, ctx), ctx);
  acc = sum_with(acc, shift_left(p0, n, ctx), ctx);
  return sum_with(acc, p0, ctx);
}

} // namespace satmem
