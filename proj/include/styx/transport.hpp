#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "styx/common.hpp"
#include "styx/crc32.hpp"
#include "styx/types.hpp"

namespace styx {

// ---------------------------------------------------------------------------
// Wire envelope
// ---------------------------------------------------------------------------

enum class MsgType : std::uint8_t {
  ClientReq = 0,
  FnCall = 1,
  FnResp = 2,
  AckShare = 3,
  Ctrl = 4,
  Output = 5,
};

struct Envelope {
  MsgType msg_type = MsgType::Ctrl;
  EpochNo epoch = 0;
  Tid txn{0};
  Bytes payload;
  std::uint32_t crc = 0;

  static Envelope make(MsgType t, EpochNo epoch, Tid txn, Bytes payload) {
    Envelope e;
    e.msg_type = t;
    e.epoch = epoch;
    e.txn = txn;
    e.crc = crc32(payload);
    e.payload = std::move(payload);
    return e;
  }

  bool crc_ok() const { return crc == crc32(payload); }

  // Little-endian fields in declared order; payload length-prefixed.
  Bytes encode() const {
    Bytes out;
    out.push_back(char(msg_type));
    le::put_u64(out, epoch);
    le::put_u64(out, txn.value);
    le::put_u32(out, std::uint32_t(payload.size()));
    out += payload;
    le::put_u32(out, crc);
    return out;
  }

  static Envelope decode(std::string_view data) {
    le::Reader r(data);
    Envelope e;
    e.msg_type = MsgType(r.bytes(1)[0]);
    e.epoch = r.u64();
    e.txn = Tid{r.u64()};
    auto len = r.u32();
    e.payload = r.bytes(len);
    e.crc = r.u32();
    if (!r.exhausted()) throw StorageIoError("envelope: trailing bytes");
    if (!e.crc_ok()) throw StorageIoError("envelope: payload crc mismatch");
    return e;
  }
};

// ---------------------------------------------------------------------------
// Replayable partitioned log (broker stand-in)
// ---------------------------------------------------------------------------

class ReplayableLog {
 public:
  virtual ~ReplayableLog() = default;

  virtual std::size_t partition_count() const = 0;
  virtual Offset append(std::size_t partition, const Bytes& record) = 0;
  virtual Offset tail(std::size_t partition) const = 0;
  virtual const Bytes& read(std::size_t partition, Offset offset) const = 0;

  // Repeatable read of everything at or past `offset`.
  std::vector<std::pair<Offset, Bytes>> read_from(std::size_t partition,
                                                  Offset offset) const {
    Offset end = tail(partition);
    if (offset > end) throw OffsetRangeError("read_from: offset past tail");
    std::vector<std::pair<Offset, Bytes>> out;
    out.reserve(end - offset);
    for (Offset o = offset; o < end; ++o) out.emplace_back(o, read(partition, o));
    return out;
  }

 protected:
  void check_partition(std::size_t p) const {
    if (p >= partition_count())
      throw OffsetRangeError("no such partition: " + std::to_string(p));
  }
};

class MemLog final : public ReplayableLog {
 public:
  explicit MemLog(std::size_t partitions) : parts_(partitions) {}

  std::size_t partition_count() const override { return parts_.size(); }

  Offset append(std::size_t partition, const Bytes& record) override {
    check_partition(partition);
    parts_[partition].push_back(record);
    return parts_[partition].size() - 1;
  }

  Offset tail(std::size_t partition) const override {
    check_partition(partition);
    return parts_[partition].size();
  }

  const Bytes& read(std::size_t partition, Offset offset) const override {
    check_partition(partition);
    if (offset >= parts_[partition].size())
      throw OffsetRangeError("read past tail");
    return parts_[partition][offset];
  }

 private:
  std::vector<std::vector<Bytes>> parts_;
};

// File-backed variant. Record framing: len u32, crc32 u32, bytes. A torn
// final record (crash mid-append) is truncated away on open.
class FileLog final : public ReplayableLog {
 public:
  FileLog(std::filesystem::path dir, std::size_t partitions)
      : dir_(std::move(dir)), parts_(partitions) {
    std::filesystem::create_directories(dir_);
    for (std::size_t p = 0; p < partitions; ++p) load(p);
  }

  std::size_t partition_count() const override { return parts_.size(); }

  Offset append(std::size_t partition, const Bytes& record) override {
    check_partition(partition);
    Bytes frame;
    le::put_u32(frame, std::uint32_t(record.size()));
    le::put_u32(frame, crc32(record));
    frame += record;
    std::FILE* f = std::fopen(path(partition).c_str(), "ab");
    if (!f) throw StorageIoError("cannot open log partition for append");
    std::fwrite(frame.data(), 1, frame.size(), f);
    std::fflush(f);
    std::fclose(f);
    parts_[partition].push_back(record);
    return parts_[partition].size() - 1;
  }

  Offset tail(std::size_t partition) const override {
    check_partition(partition);
    return parts_[partition].size();
  }

  const Bytes& read(std::size_t partition, Offset offset) const override {
    check_partition(partition);
    if (offset >= parts_[partition].size())
      throw OffsetRangeError("read past tail");
    return parts_[partition][offset];
  }

 private:
  std::string path(std::size_t p) const {
    return (dir_ / ("part_" + std::to_string(p) + ".log")).string();
  }

  void load(std::size_t p) {
    std::FILE* f = std::fopen(path(p).c_str(), "rb");
    if (!f) return;
    Bytes data;
    char buf[1 << 16];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, n);
    std::fclose(f);

    std::size_t pos = 0;
    std::size_t good_end = 0;
    while (pos + 8 <= data.size()) {
      le::Reader r(std::string_view(data).substr(pos));
      std::uint32_t len = r.u32();
      std::uint32_t crc = r.u32();
      if (pos + 8 + len > data.size()) break;  // torn tail
      Bytes rec = r.bytes(len);
      if (crc32(rec) != crc) break;  // corrupt tail
      parts_[p].push_back(std::move(rec));
      pos += 8 + len;
      good_end = pos;
    }
    if (good_end != data.size()) {
      std::filesystem::resize_file(path(p), good_end);
    }
  }

  std::filesystem::path dir_;
  std::vector<std::vector<Bytes>> parts_;
};

// ---------------------------------------------------------------------------
// Deterministic in-process network: discrete-event scheduler with seeded
// latency jitter, per-channel FIFO, timers and fault hooks.
// ---------------------------------------------------------------------------

using SimTime = std::uint64_t;  // logical milliseconds
using NodeId = std::uint32_t;

class SimNode {
 public:
  virtual ~SimNode() = default;
  virtual void on_message(NodeId src, const Envelope& env) = 0;
  virtual void on_timer(std::uint64_t timer_id) = 0;
};

struct FaultEntry {
  enum class Action { CrashWorker, RestartWorker, DropChannel };
  std::uint64_t step = 0;
  Action action = Action::CrashWorker;
  std::uint32_t worker = 0;   // crash/restart target
  std::uint32_t src = 0;      // drop_channel endpoints
  std::uint32_t dst = 0;
};

using FaultSchedule = std::vector<FaultEntry>;

class SimNet {
 public:
  explicit SimNet(std::uint64_t seed, SimTime base_latency = 1,
                  SimTime jitter = 2)
      : rng_(seed ^ 0x9e3779b97f4a7c15ull),
        base_latency_(base_latency),
        jitter_(jitter) {}

  void register_node(NodeId id, SimNode* node) {
    if (nodes_.size() <= id) nodes_.resize(id + 1);
    nodes_[id].node = node;
    nodes_[id].incarnation++;
    nodes_[id].alive = true;
  }

  void kill_node(NodeId id) {
    nodes_.at(id).alive = false;
    nodes_.at(id).incarnation++;  // strands in-flight deliveries and timers
  }

  bool alive(NodeId id) const { return id < nodes_.size() && nodes_[id].alive; }

  SimTime now() const { return now_; }
  std::uint64_t steps() const { return steps_; }
  std::mt19937_64& rng() { return rng_; }

  void send(NodeId src, NodeId dst, Envelope env) {
    if (!alive(src)) return;  // a dead node sends nothing
    SimTime latency = base_latency_ + (jitter_ ? rng_() % jitter_ : 0);
    SimTime at = now_ + latency;
    auto& last = channel_last_[{src, dst}];
    if (at < last) at = last;  // per-channel FIFO
    last = at;
    Event ev;
    ev.kind = Event::Kind::Deliver;
    ev.src = src;
    ev.dst = dst;
    ev.dst_incarnation = incarnation(dst);
    // Round-trip through the wire encoding: what arrives is what was encoded.
    ev.frame = env.encode();
    push(at, std::move(ev));
  }

  void set_timer(NodeId node, SimTime delay, std::uint64_t timer_id) {
    Event ev;
    ev.kind = Event::Kind::Timer;
    ev.dst = node;
    ev.dst_incarnation = incarnation(node);
    ev.timer_id = timer_id;
    push(now_ + delay, std::move(ev));
  }

  // Internal async job (snapshot persistence, restarts); cancel via the
  // returned token if its owner dies first.
  std::uint64_t schedule(SimTime delay, std::function<void()> fn) {
    Event ev;
    ev.kind = Event::Kind::Action;
    ev.action = std::move(fn);
    ev.action_token = ++action_token_seq_;
    std::uint64_t token = ev.action_token;
    push(now_ + delay, std::move(ev));
    return token;
  }

  // Like schedule(), but the action dies silently with its owning node
  // (crash or re-registration strands it).
  std::uint64_t schedule_for(NodeId owner, SimTime delay,
                             std::function<void()> fn) {
    Event ev;
    ev.kind = Event::Kind::Action;
    ev.action = std::move(fn);
    ev.action_token = ++action_token_seq_;
    ev.owner_bound = true;
    ev.dst = owner;
    ev.dst_incarnation = incarnation(owner);
    std::uint64_t token = ev.action_token;
    push(now_ + delay, std::move(ev));
    return token;
  }

  void cancel_action(std::uint64_t token) { cancelled_actions_.insert(token); }

  void set_fault_schedule(FaultSchedule schedule,
                          std::function<void(const FaultEntry&)> handler) {
    for (auto& f : schedule) faults_.emplace(f.step, f);
    fault_handler_ = std::move(handler);
  }

  // Drop every in-flight message on src -> dst.
  void drop_channel(NodeId src, NodeId dst) {
    for (auto it = queue_.begin(); it != queue_.end();) {
      if (it->second.kind == Event::Kind::Deliver && it->second.src == src &&
          it->second.dst == dst)
        it = queue_.erase(it);
      else
        ++it;
    }
  }

  bool pending() const { return !queue_.empty(); }
  std::size_t pending_events() const { return queue_.size(); }

  // Dispatch one event. Returns false when the queue is empty.
  bool step() {
    apply_due_faults();
    if (queue_.empty()) return false;
    auto it = queue_.begin();
    SimTime at = it->first.first;
    Event ev = std::move(it->second);
    queue_.erase(it);
    now_ = std::max(now_, at);
    ++steps_;

    switch (ev.kind) {
      case Event::Kind::Deliver: {
        if (!valid_target(ev)) break;
        Envelope env = Envelope::decode(ev.frame);
        nodes_[ev.dst].node->on_message(ev.src, env);
        break;
      }
      case Event::Kind::Timer:
        if (!valid_target(ev)) break;
        nodes_[ev.dst].node->on_timer(ev.timer_id);
        break;
      case Event::Kind::Action:
        if (cancelled_actions_.count(ev.action_token)) {
          cancelled_actions_.erase(ev.action_token);
          break;
        }
        if (ev.owner_bound && !valid_target(ev)) break;
        ev.action();
        break;
    }
    return true;
  }

 private:
  struct Event {
    enum class Kind { Deliver, Timer, Action } kind = Kind::Action;
    NodeId src = 0;
    NodeId dst = 0;
    std::uint64_t dst_incarnation = 0;
    Bytes frame;
    std::uint64_t timer_id = 0;
    std::function<void()> action;
    std::uint64_t action_token = 0;
    bool owner_bound = false;
  };

  struct NodeSlot {
    SimNode* node = nullptr;
    bool alive = false;
    std::uint64_t incarnation = 0;
  };

  std::uint64_t incarnation(NodeId id) const {
    return id < nodes_.size() ? nodes_[id].incarnation : 0;
  }

  bool valid_target(const Event& ev) const {
    return ev.dst < nodes_.size() && nodes_[ev.dst].alive &&
           nodes_[ev.dst].node != nullptr &&
           nodes_[ev.dst].incarnation == ev.dst_incarnation;
  }

  void push(SimTime at, Event ev) {
    queue_.emplace(std::make_pair(at, ++seq_), std::move(ev));
  }

  void apply_due_faults() {
    while (!faults_.empty() && faults_.begin()->first <= steps_) {
      FaultEntry f = faults_.begin()->second;
      faults_.erase(faults_.begin());
      if (f.action == FaultEntry::Action::DropChannel) {
        drop_channel(f.src, f.dst);
      }
      if (fault_handler_) fault_handler_(f);
    }
  }

  std::map<std::pair<SimTime, std::uint64_t>, Event> queue_;
  std::vector<NodeSlot> nodes_;
  std::map<std::pair<NodeId, NodeId>, SimTime> channel_last_;
  std::multimap<std::uint64_t, FaultEntry> faults_;
  std::function<void(const FaultEntry&)> fault_handler_;
  std::set<std::uint64_t> cancelled_actions_;
  std::mt19937_64 rng_;
  SimTime base_latency_;
  SimTime jitter_;
  SimTime now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t steps_ = 0;
  std::uint64_t action_token_seq_ = 0;
};

}  // namespace styx
