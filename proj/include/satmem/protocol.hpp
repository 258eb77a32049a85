#pragma once

// Binary direct-access protocol. All integers little-endian. Every message
// is one opcode byte followed by an opcode-specific, self-delimiting payload.

#include "satmem/cnf.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace satmem::wire {

enum class Opcode : std::uint8_t {
  AddVariable = 0x01,
  AddClause = 0x02,
  LockVars = 0x03,
  AddVars = 0x04,
  UnlockVars = 0x05,
  SnapshotRequest = 0x06,
  Error = 0x7F,
  VarIndex = 0x81,
  LockGranted = 0x83,
  FirstIndex = 0x84,
  Snapshot = 0x86,
};

enum class ErrorCode : std::uint16_t { Locked = 1, Malformed = 2, OutOfRange = 3 };

struct AddVariable {};
struct AddClause {
  Clause literals;
};
struct LockVars {};
struct AddVars {
  std::uint32_t count = 0;
};
struct UnlockVars {};
struct SnapshotRequest {};
struct ErrorMsg {
  ErrorCode code = ErrorCode::Malformed;
  std::string message;
};
struct VarIndex {
  std::uint32_t index = 0;
};
struct LockGranted {};
struct FirstIndex {
  std::uint32_t index = 0;
};
struct Snapshot {
  std::uint32_t var_count = 0;
  std::vector<Clause> clauses;
};

using Message = std::variant<AddVariable, AddClause, LockVars, AddVars, UnlockVars, SnapshotRequest,
                             ErrorMsg, VarIndex, LockGranted, FirstIndex, Snapshot>;

class ProtocolError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_clause(std::vector<std::uint8_t> &out, const Clause &c) {
  put_u32(out, static_cast<std::uint32_t>(c.size()));
  for (Literal l : c)
    put_u32(out, static_cast<std::uint32_t>(l));
}

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  Clause clause() {
    std::uint32_t n = u32();
    need(std::size_t{n} * 4);
    Clause c(n);
    for (auto &l : c)
      l = static_cast<Literal>(u32());
    return c;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t position() const { return pos_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw ProtocolError("truncated message");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <class... Fs> struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs> Overloaded(Fs...) -> Overloaded<Fs...>;

} // namespace detail

inline std::vector<std::uint8_t> encode(const Message &msg) {
  using namespace detail;
  std::vector<std::uint8_t> out;
  auto op = [&](Opcode o) { out.push_back(static_cast<std::uint8_t>(o)); };
  std::visit(Overloaded{
                 [&](const AddVariable &) { op(Opcode::AddVariable); },
                 [&](const AddClause &m) {
                   op(Opcode::AddClause);
                   put_clause(out, m.literals);
                 },
                 [&](const LockVars &) { op(Opcode::LockVars); },
                 [&](const AddVars &m) {
                   op(Opcode::AddVars);
                   put_u32(out, m.count);
                 },
                 [&](const UnlockVars &) { op(Opcode::UnlockVars); },
                 [&](const SnapshotRequest &) { op(Opcode::SnapshotRequest); },
                 [&](const ErrorMsg &m) {
                   op(Opcode::Error);
                   put_u16(out, static_cast<std::uint16_t>(m.code));
                   put_u16(out, static_cast<std::uint16_t>(m.message.size()));
                   out.insert(out.end(), m.message.begin(), m.message.end());
                 },
                 [&](const VarIndex &m) {
                   op(Opcode::VarIndex);
                   put_u32(out, m.index);
                 },
                 [&](const LockGranted &) { op(Opcode::LockGranted); },
                 [&](const FirstIndex &m) {
                   op(Opcode::FirstIndex);
                   put_u32(out, m.index);
                 },
                 [&](const Snapshot &m) {
                   op(Opcode::Snapshot);
                   put_u32(out, m.var_count);
                   put_u32(out, static_cast<std::uint32_t>(m.clauses.size()));
                   for (const auto &c : m.clauses)
                     put_clause(out, c);
                 },
             },
             msg);
  return out;
}

/// Decodes one message from the front of `bytes`; `consumed` receives its length.
inline Message decode_prefix(std::span<const std::uint8_t> bytes, std::size_t &consumed) {
  detail::Reader r(bytes);
  Message msg;
  switch (static_cast<Opcode>(r.u8())) {
  case Opcode::AddVariable:
    msg = AddVariable{};
    break;
  case Opcode::AddClause:
    msg = AddClause{r.clause()};
    break;
  case Opcode::LockVars:
    msg = LockVars{};
    break;
  case Opcode::AddVars:
    msg = AddVars{r.u32()};
    break;
  case Opcode::UnlockVars:
    msg = UnlockVars{};
    break;
  case Opcode::SnapshotRequest:
    msg = SnapshotRequest{};
    break;
  case Opcode::Error: {
    auto code = static_cast<ErrorCode>(r.u16());
    auto len = r.u16();
    msg = ErrorMsg{code, r.text(len)};
    break;
  }
  case Opcode::VarIndex:
    msg = VarIndex{r.u32()};
    break;
  case Opcode::LockGranted:
    msg = LockGranted{};
    break;
  case Opcode::FirstIndex:
    msg = FirstIndex{r.u32()};
    break;
  case Opcode::Snapshot: {
    Snapshot s;
    s.var_count = r.u32();
    std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i)
      s.clauses.push_back(r.clause());
    msg = std::move(s);
    break;
  }
  default:
    throw ProtocolError("unknown opcode");
  }
  consumed = r.position();
  return msg;
}

/// Decodes exactly one message; trailing bytes are malformed.
inline Message decode(std::span<const std::uint8_t> bytes) {
  std::size_t used = 0;
  Message m = decode_prefix(bytes, used);
  if (used != bytes.size())
    throw ProtocolError("trailing bytes after message");
  return m;
}

} // namespace satmem::wire
