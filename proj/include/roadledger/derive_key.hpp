#pragma once

#include "roadledger/crypto.hpp"

namespace roadledger::authsvc {

/// Per-message key: SHA-256(master_key || root).
inline Digest derive_key(const Digest& master_key, const Digest& root) {
  return Sha256().update(master_key).update(root).finish();
}

}  // namespace roadledger::authsvc
