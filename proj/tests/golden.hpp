#pragma once

// Byte-exact encodings of one or more messages per opcode.

#include "satmem/protocol.hpp"

#include <utility>
#include <vector>

namespace satmem::testing {

inline std::vector<std::pair<wire::Message, std::vector<std::uint8_t>>> golden_messages() {
  using namespace satmem::wire;
  return {
      {AddVariable{}, {0x01}},
      {AddClause{{1, -2}}, {0x02, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0xFE, 0xFF, 0xFF, 0xFF}},
      {AddClause{{}}, {0x02, 0x00, 0x00, 0x00, 0x00}},
      {LockVars{}, {0x03}},
      {AddVars{258}, {0x04, 0x02, 0x01, 0x00, 0x00}},
      {UnlockVars{}, {0x05}},
      {SnapshotRequest{}, {0x06}},
      {ErrorMsg{ErrorCode::Locked, "ab"}, {0x7F, 0x01, 0x00, 0x02, 0x00, 0x61, 0x62}},
      {ErrorMsg{ErrorCode::Malformed, ""}, {0x7F, 0x02, 0x00, 0x00, 0x00}},
      {ErrorMsg{ErrorCode::OutOfRange, "x"}, {0x7F, 0x03, 0x00, 0x01, 0x00, 0x78}},
      {VarIndex{0x01020304}, {0x81, 0x04, 0x03, 0x02, 0x01}},
      {LockGranted{}, {0x83}},
      {FirstIndex{7}, {0x84, 0x07, 0x00, 0x00, 0x00}},
      {Snapshot{3, {{1}, {-3, 2}}},
       {0x86, 0x03, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
        0x02, 0x00, 0x00, 0x00, 0xFD, 0xFF, 0xFF, 0xFF, 0x02, 0x00, 0x00, 0x00}},
      {Snapshot{0, {}}, {0x86, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
  };
}

} // namespace satmem::testing
