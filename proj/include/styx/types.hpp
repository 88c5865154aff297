#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "styx/common.hpp"

namespace styx {

// Global transaction identifier. tid = sid + lc * n_seq, which keeps the
// per-sequencer arithmetic progressions disjoint.
struct Tid {
  std::uint64_t value = 0;

  constexpr auto operator<=>(const Tid&) const = default;
};

inline Tid make_tid(SequencerId sid, std::uint64_t lc, std::uint64_t n_seq) {
  return Tid{sid + lc * n_seq};
}

// Inverse of make_tid: recovers (sid, lc) with sid in [1, n_seq].
inline std::pair<SequencerId, std::uint64_t> decompose_tid(Tid tid,
                                                           std::uint64_t n_seq) {
  if (tid.value == 0) throw Error("decompose_tid: tid must be >= 1");
  if (n_seq == 0) throw Error("decompose_tid: n_seq must be >= 1");
  // sid ranges over [1, n_seq], so shift down by one, split, shift back.
  std::uint64_t v = tid.value - 1;
  SequencerId sid = v % n_seq + 1;
  std::uint64_t lc = v / n_seq;
  return {sid, lc};
}

// "entities://<operator>/<key>"
struct NamespacedKey {
  std::string op;
  std::string key;

  auto operator<=>(const NamespacedKey&) const = default;

  std::string render() const { return "entities://" + op + "/" + key; }
};

inline NamespacedKey parse_namespaced_key(std::string_view text) {
  constexpr std::string_view scheme = "entities://";
  if (text.substr(0, scheme.size()) != scheme)
    throw MalformedKeyError("key must begin with entities:// : " +
                            std::string(text));
  std::string_view rest = text.substr(scheme.size());
  auto slash = rest.find('/');
  if (slash == std::string_view::npos)
    throw MalformedKeyError("key missing '/' separator: " + std::string(text));
  std::string_view op = rest.substr(0, slash);
  std::string_view key = rest.substr(slash + 1);
  if (op.empty())
    throw MalformedKeyError("empty operator in key: " + std::string(text));
  if (key.empty())
    throw MalformedKeyError("empty entity key in key: " + std::string(text));
  return NamespacedKey{std::string(op), std::string(key)};
}

enum class CallMode : std::uint8_t { Async = 0, Sync = 1 };

struct FunctionInvocation {
  NamespacedKey target;
  std::string function_name;
  std::vector<Bytes> params;  // each entry is one codec-encoded value
  CallMode mode = CallMode::Async;
};

enum class TxnStatus : std::uint8_t {
  Pending = 0,
  Committed = 1,
  AbortedLogic = 2,
  Rescheduled = 3,
};

inline const char* to_string(TxnStatus s) {
  switch (s) {
    case TxnStatus::Pending: return "pending";
    case TxnStatus::Committed: return "committed";
    case TxnStatus::AbortedLogic: return "aborted_logic";
    case TxnStatus::Rescheduled: return "rescheduled";
  }
  return "?";
}

// A sequenced client request. Keeps its tid across reschedules.
struct Transaction {
  Tid tid;
  Bytes request_id;
  FunctionInvocation root;
  TxnStatus status = TxnStatus::Pending;
  std::optional<EpochNo> epoch_of_commit;
};

// Per-transaction read/write footprint accumulated during one execution.
// Writes are buffered here and only reach the store on commit; nullopt
// buffered for a key means the transaction deleted it.
struct RwSet {
  std::set<NamespacedKey> reads;
  std::set<NamespacedKey> writes;
  std::map<NamespacedKey, std::optional<Bytes>> write_buffer;

  void merge(const RwSet& other) {
    reads.insert(other.reads.begin(), other.reads.end());
    writes.insert(other.writes.begin(), other.writes.end());
    for (const auto& [k, v] : other.write_buffer) write_buffer[k] = v;
  }
};

struct ClusterConfig {
  std::uint32_t n_workers = 1;
  std::uint32_t epoch_interval_ms = 1;
  std::uint32_t epoch_max_txns = 1000;
  std::uint32_t snapshot_interval_ms = 10000;
  std::uint32_t heartbeat_interval_ms = 250;
  std::uint32_t heartbeat_timeout_ms = 1000;
  std::uint64_t rng_seed = 0;

  // n_seq always equals n_workers: one sequencer per worker.
  std::uint64_t n_seq() const { return n_workers; }

  void validate() const {
    if (n_workers == 0) throw ConfigError("n_workers must be >= 1");
    if (epoch_interval_ms == 0) throw ConfigError("epoch_interval_ms must be >= 1");
    if (epoch_max_txns == 0) throw ConfigError("epoch_max_txns must be >= 1");
    if (snapshot_interval_ms == 0)
      throw ConfigError("snapshot_interval_ms must be >= 1");
    if (heartbeat_timeout_ms < heartbeat_interval_ms)
      throw ConfigError("heartbeat timeout shorter than heartbeat interval");
  }
};

}  // namespace styx
