#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "styx/codec.hpp"
#include "styx/types.hpp"

namespace styx {

// Invocation address inside a transaction's call tree: the sequence of call
// ordinals from the root. Stable between discovery and cached re-execution.
using CallPath = std::vector<std::uint32_t>;

struct InvocationEntry {
  CallPath path;
  WorkerId host = 0;

  bool operator<(const InvocationEntry& o) const { return path < o.path; }
};

namespace wire {

inline Value path_to_json(const CallPath& p) {
  Value a = Value::array();
  for (auto v : p) a.push_back(v);
  return a;
}

inline CallPath path_from_json(const Value& a) {
  CallPath p;
  for (const auto& v : a) p.push_back(v.get<std::uint32_t>());
  return p;
}

inline Value entries_to_json(const std::vector<InvocationEntry>& es) {
  Value a = Value::array();
  for (const auto& e : es) a.push_back({{"p", path_to_json(e.path)}, {"h", e.host}});
  return a;
}

inline std::vector<InvocationEntry> entries_from_json(const Value& a) {
  std::vector<InvocationEntry> out;
  for (const auto& v : a)
    out.push_back({path_from_json(v.at("p")), v.at("h").get<WorkerId>()});
  return out;
}

inline Value bin(const Bytes& b) {
  return Value::binary(std::vector<std::uint8_t>(b.begin(), b.end()));
}

inline Bytes unbin(const Value& v) {
  const auto& bytes = v.get_binary();
  return Bytes(bytes.begin(), bytes.end());
}

inline Value params_to_json(const std::vector<Bytes>& params) {
  Value a = Value::array();
  for (const auto& p : params) a.push_back(bin(p));
  return a;
}

inline std::vector<Bytes> params_from_json(const Value& a) {
  std::vector<Bytes> out;
  for (const auto& v : a) out.push_back(unbin(v));
  return out;
}

}  // namespace wire

// A client request as it sits in the input log.
struct ClientRequest {
  Bytes request_id;
  NamespacedKey target;
  std::string function_name;
  std::vector<Bytes> params;

  Bytes encode() const {
    return codec::encode(Value{{"rid", wire::bin(request_id)},
                               {"target", target.render()},
                               {"fn", function_name},
                               {"params", wire::params_to_json(params)}});
  }

  static ClientRequest decode(const Bytes& b) {
    Value v = codec::decode(b);
    ClientRequest r;
    r.request_id = wire::unbin(v.at("rid"));
    r.target = parse_namespaced_key(v.at("target").get<std::string>());
    r.function_name = v.at("fn").get<std::string>();
    r.params = wire::params_from_json(v.at("params"));
    return r;
  }
};

// A reply as it sits in the output log; carries the TID explicitly so the
// recovery duplicate scan works by decoding records.
struct OutputRecord {
  Bytes request_id;
  Tid tid{0};
  TxnStatus status = TxnStatus::Committed;
  Bytes payload;  // encoded return value, or abort message text
  EpochNo epoch = 0;

  Bytes encode() const {
    return codec::encode(Value{{"rid", wire::bin(request_id)},
                               {"tid", tid.value},
                               {"status", int(status)},
                               {"payload", wire::bin(payload)},
                               {"epoch", epoch}});
  }

  static OutputRecord decode(const Bytes& b) {
    Value v = codec::decode(b);
    OutputRecord r;
    r.request_id = wire::unbin(v.at("rid"));
    r.tid = Tid{v.at("tid").get<std::uint64_t>()};
    r.status = TxnStatus(v.at("status").get<int>());
    r.payload = wire::unbin(v.at("payload"));
    r.epoch = v.at("epoch").get<EpochNo>();
    return r;
  }
};

// Function-call message (discovery and cached re-execution share the shape).
struct FnCallMsg {
  Tid tid{0};
  CallPath path;
  std::vector<InvocationEntry> chain;          // ancestors, root first
  std::vector<InvocationEntry> extra_entries;  // absorbed sync-subtree entries
  NamespacedKey target;
  std::string function_name;
  std::vector<Bytes> params;
  CallMode mode = CallMode::Async;
  std::optional<Bytes> share;  // absent on sync calls in replay
  WorkerId root_worker = 0;
  WorkerId caller_worker = 0;
  bool replay = false;
  std::uint64_t generation = 0;

  Bytes encode() const {
    Value v{{"tid", tid.value},
            {"path", wire::path_to_json(path)},
            {"chain", wire::entries_to_json(chain)},
            {"extra", wire::entries_to_json(extra_entries)},
            {"target", target.render()},
            {"fn", function_name},
            {"params", wire::params_to_json(params)},
            {"mode", int(mode)},
            {"root_w", root_worker},
            {"caller_w", caller_worker},
            {"replay", replay},
            {"gen", generation}};
    if (share) v["share"] = wire::bin(*share);
    return codec::encode(v);
  }

  static FnCallMsg decode(const Bytes& b) {
    Value v = codec::decode(b);
    FnCallMsg m;
    m.tid = Tid{v.at("tid").get<std::uint64_t>()};
    m.path = wire::path_from_json(v.at("path"));
    m.chain = wire::entries_from_json(v.at("chain"));
    m.extra_entries = wire::entries_from_json(v.at("extra"));
    m.target = parse_namespaced_key(v.at("target").get<std::string>());
    m.function_name = v.at("fn").get<std::string>();
    m.params = wire::params_from_json(v.at("params"));
    m.mode = CallMode(v.at("mode").get<int>());
    m.root_worker = v.at("root_w").get<WorkerId>();
    m.caller_worker = v.at("caller_w").get<WorkerId>();
    m.replay = v.at("replay").get<bool>();
    m.generation = v.at("gen").get<std::uint64_t>();
    if (v.contains("share")) m.share = wire::unbin(v.at("share"));
    return m;
  }
};

// Response to a sync call.
struct FnRespMsg {
  Tid tid{0};
  CallPath caller_path;
  CallPath callee_path;
  std::optional<Bytes> value;  // encoded return value when normal
  std::optional<Bytes> share;  // returned when the callee made no async calls
  bool abort = false;
  std::string abort_msg;
  bool terminated = false;  // replay only: callee stopped at a cache mismatch
  std::vector<InvocationEntry> entries;
  bool replay = false;
  std::uint64_t generation = 0;

  Bytes encode() const {
    Value v{{"tid", tid.value},
            {"to", wire::path_to_json(caller_path)},
            {"from", wire::path_to_json(callee_path)},
            {"abort", abort},
            {"abort_msg", abort_msg},
            {"terminated", terminated},
            {"entries", wire::entries_to_json(entries)},
            {"replay", replay},
            {"gen", generation}};
    if (value) v["value"] = wire::bin(*value);
    if (share) v["share"] = wire::bin(*share);
    return codec::encode(v);
  }

  static FnRespMsg decode(const Bytes& b) {
    Value v = codec::decode(b);
    FnRespMsg m;
    m.tid = Tid{v.at("tid").get<std::uint64_t>()};
    m.caller_path = wire::path_from_json(v.at("to"));
    m.callee_path = wire::path_from_json(v.at("from"));
    m.abort = v.at("abort").get<bool>();
    m.abort_msg = v.at("abort_msg").get<std::string>();
    m.terminated = v.at("terminated").get<bool>();
    m.entries = wire::entries_from_json(v.at("entries"));
    m.replay = v.at("replay").get<bool>();
    m.generation = v.at("gen").get<std::uint64_t>();
    if (v.contains("value")) m.value = wire::unbin(v.at("value"));
    if (v.contains("share")) m.share = wire::unbin(v.at("share"));
    return m;
  }
};

// Discovery: terminal share back to the root tracker.
// Replay: per-invocation completion ack (no share arithmetic).
struct AckMsg {
  Tid tid{0};
  std::optional<Bytes> share;
  std::vector<InvocationEntry> entries;
  CallPath from_path;
  bool abort = false;
  std::string abort_msg;
  bool mismatch = false;  // replay only
  bool replay = false;
  std::uint64_t generation = 0;

  Bytes encode() const {
    Value v{{"tid", tid.value},
            {"entries", wire::entries_to_json(entries)},
            {"from", wire::path_to_json(from_path)},
            {"abort", abort},
            {"abort_msg", abort_msg},
            {"mismatch", mismatch},
            {"replay", replay},
            {"gen", generation}};
    if (share) v["share"] = wire::bin(*share);
    return codec::encode(v);
  }

  static AckMsg decode(const Bytes& b) {
    Value v = codec::decode(b);
    AckMsg m;
    m.tid = Tid{v.at("tid").get<std::uint64_t>()};
    m.entries = wire::entries_from_json(v.at("entries"));
    m.from_path = wire::path_from_json(v.at("from"));
    m.abort = v.at("abort").get<bool>();
    m.abort_msg = v.at("abort_msg").get<std::string>();
    m.mismatch = v.at("mismatch").get<bool>();
    m.replay = v.at("replay").get<bool>();
    m.generation = v.at("gen").get<std::uint64_t>();
    if (v.contains("share")) m.share = wire::unbin(v.at("share"));
    return m;
  }
};

// Control-plane payloads (coordinator barriers, membership, recovery).
struct CtrlMsg {
  enum class Kind : std::uint8_t {
    Register = 0,
    Registered = 1,
    Heartbeat = 2,
    EpochStart = 3,
    DiscoveryDone = 4,
    ConflictsGlobal = 5,
    P3Done = 6,
    P4Start = 7,
    P4Decision = 8,
    P4Done = 9,
    SnapshotDone = 10,
    Recover = 11,
    Recovered = 12,
    DiscoveryGlobal = 13,  // aborted-txn union, broadcast before conflict eval
    ConflictLocal = 14,
  };

  Kind kind = Kind::Heartbeat;
  WorkerId worker = 0;
  EpochNo epoch = 0;
  std::uint64_t generation = 0;
  std::uint64_t lc = 0;
  std::uint64_t max_lc = 0;
  std::optional<std::uint64_t> snapshot_id;
  std::optional<std::uint64_t> compact_through;
  std::vector<std::uint64_t> conflicts;
  std::vector<std::uint64_t> committed;
  std::vector<std::uint64_t> rescheduled;
  std::vector<std::uint64_t> aborted;
  std::uint64_t pending_reschedules = 0;
  Tid decision_tid{0};
  std::uint8_t decision = 0;  // 0 commit, 1 reschedule, 2 abort
  std::string decision_msg;
  Bytes decision_value;
  SequencerId sid = 1;

  Bytes encode() const {
    Value v{{"kind", int(kind)},      {"worker", worker},
            {"epoch", epoch},         {"gen", generation},
            {"lc", lc},               {"max_lc", max_lc},
            {"conflicts", conflicts}, {"committed", committed},
            {"rescheduled", rescheduled}, {"aborted", aborted},
            {"pending", pending_reschedules},
            {"dtid", decision_tid.value}, {"dec", int(decision)},
            {"dmsg", decision_msg},   {"dval", wire::bin(decision_value)},
            {"sid", sid}};
    if (snapshot_id) v["snapshot_id"] = *snapshot_id;
    if (compact_through) v["compact_through"] = *compact_through;
    return codec::encode(v);
  }

  static CtrlMsg decode(const Bytes& b) {
    Value v = codec::decode(b);
    CtrlMsg m;
    m.kind = Kind(v.at("kind").get<int>());
    m.worker = v.at("worker").get<WorkerId>();
    m.epoch = v.at("epoch").get<EpochNo>();
    m.generation = v.at("gen").get<std::uint64_t>();
    m.lc = v.at("lc").get<std::uint64_t>();
    m.max_lc = v.at("max_lc").get<std::uint64_t>();
    m.conflicts = v.at("conflicts").get<std::vector<std::uint64_t>>();
    m.committed = v.at("committed").get<std::vector<std::uint64_t>>();
    m.rescheduled = v.at("rescheduled").get<std::vector<std::uint64_t>>();
    m.aborted = v.at("aborted").get<std::vector<std::uint64_t>>();
    m.pending_reschedules = v.at("pending").get<std::uint64_t>();
    m.decision_tid = Tid{v.at("dtid").get<std::uint64_t>()};
    m.decision = std::uint8_t(v.at("dec").get<int>());
    m.decision_msg = v.at("dmsg").get<std::string>();
    m.decision_value = wire::unbin(v.at("dval"));
    m.sid = v.at("sid").get<SequencerId>();
    if (v.contains("snapshot_id"))
      m.snapshot_id = v.at("snapshot_id").get<std::uint64_t>();
    if (v.contains("compact_through"))
      m.compact_through = v.at("compact_through").get<std::uint64_t>();
    return m;
  }
};

}  // namespace styx
