#pragma once

#include <nlohmann/json.hpp>

#include "styx/common.hpp"

namespace styx {

// Repo-wide value codec: user values and message payloads are JSON documents
// serialized to CBOR. Self-describing, byte-deterministic for equal inputs.
using Value = nlohmann::json;

namespace codec {

inline Bytes encode(const Value& v) {
  std::vector<std::uint8_t> cbor = nlohmann::json::to_cbor(v);
  return Bytes(cbor.begin(), cbor.end());
}

inline Value decode(const Bytes& b) {
  try {
    return nlohmann::json::from_cbor(b);
  } catch (const nlohmann::json::exception& e) {
    throw StorageIoError(std::string("codec: undecodable value: ") + e.what());
  }
}

}  // namespace codec

}  // namespace styx
