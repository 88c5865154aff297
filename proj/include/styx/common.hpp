#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace styx {

// Opaque byte strings: entity values, params and wire payloads all travel
// as Bytes; the protocol never looks inside them.
using Bytes = std::string;

using WorkerId = std::uint32_t;   // 0-based worker index
using SequencerId = std::uint64_t; // 1-based sid assigned at registration
using EpochNo = std::uint64_t;
using Offset = std::uint64_t;     // record ordinal within a log partition

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedKeyError : public Error { public: using Error::Error; };
class DuplicateOperatorError : public Error { public: using Error::Error; };
class UnknownOperatorError : public Error { public: using Error::Error; };
class UnknownFunctionError : public Error { public: using Error::Error; };
class WrongPartitionError : public Error { public: using Error::Error; };
class LogGapError : public Error { public: using Error::Error; };
class ClusterFullError : public Error { public: using Error::Error; };
class StorageIoError : public Error { public: using Error::Error; };
class ShareOverflowError : public Error { public: using Error::Error; };
class OffsetRangeError : public Error { public: using Error::Error; };
class DeltaGapError : public Error { public: using Error::Error; };
class TraceCorruptError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };

// Raised by user functions to abort a transaction; any other exception
// escaping a function is treated the same way.
class LogicAbort : public Error {
 public:
  using Error::Error;
};

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Little-endian encode/decode helpers for the bit-exact file formats.
namespace le {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint16_t u16() { return static_cast<std::uint16_t>(raw(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(raw(4)); }
  std::uint64_t u64() { return raw(8); }

  Bytes bytes(std::size_t n) {
    need(n);
    Bytes b(data_.substr(pos_, n));
    pos_ += n;
    return b;
  }

  bool exhausted() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::uint64_t raw(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += n;
    return v;
  }

  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw StorageIoError("truncated record");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace le

}  // namespace styx
