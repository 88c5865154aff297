#pragma once

#include <algorithm>
#include <cassert>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "styx/messages.hpp"
#include "styx/snapshot.hpp"
#include "styx/trace.hpp"
#include "styx/transport.hpp"
#include "styx/types.hpp"

namespace styx {

// Single non-replicated control process: membership and sid assignment,
// epoch barriers, conflict/max-lc aggregation, heartbeat failure detection
// and recovery orchestration. Volatile; everything it needs after a restart
// is reconstructible from registrations plus the snapshot store.
class Coordinator final : public SimNode {
 public:
  static constexpr std::uint64_t kHbCheckTimer = 1;

  enum class State { Forming, Running, Recovering };

  Coordinator(const ClusterConfig& cfg, SimNet* net, SnapshotStore* snaps,
              Trace* trace, NodeId self)
      : cfg_(cfg), net_(net), snaps_(snaps), trace_(trace), self_(self) {
    workers_.resize(cfg.n_workers);
  }

  State state() const { return state_; }
  EpochNo epoch() const { return epoch_; }
  std::uint64_t generation() const { return generation_; }
  std::size_t outstanding_persists() const { return outstanding_persists_.size(); }
  std::uint64_t last_pending_reschedules() const { return last_pending_; }

  void start() {
    net_->set_timer(self_, cfg_.heartbeat_interval_ms, kHbCheckTimer);
  }

  void on_timer(std::uint64_t timer_id) override {
    if (timer_id != kHbCheckTimer) return;
    if (state_ != State::Forming) {
      for (WorkerId w = 0; w < cfg_.n_workers; ++w) {
        auto& info = workers_[w];
        if (info.registered && info.alive &&
            net_->now() - info.last_heartbeat > cfg_.heartbeat_timeout_ms)
          on_worker_failure(w);
      }
    }
    net_->set_timer(self_, cfg_.heartbeat_interval_ms, kHbCheckTimer);
  }

  void on_message(NodeId src, const Envelope& env) override {
    (void)src;
    if (env.msg_type != MsgType::Ctrl) return;
    CtrlMsg m = CtrlMsg::decode(env.payload);
    switch (m.kind) {
      case CtrlMsg::Kind::Register:
        handle_register(m.worker);
        break;
      case CtrlMsg::Kind::Heartbeat:
        if (m.worker < workers_.size())
          workers_[m.worker].last_heartbeat = net_->now();
        break;
      case CtrlMsg::Kind::DiscoveryDone:
        if (stale(m)) return;
        disc_done_[m.worker] = m;
        if (disc_done_.size() == cfg_.n_workers) {
          std::set<std::uint64_t> aborted;
          for (auto& [w, msg] : disc_done_)
            aborted.insert(msg.conflicts.begin(), msg.conflicts.end());
          disc_done_.clear();
          broadcast([&](CtrlMsg& c) {
            c.kind = CtrlMsg::Kind::DiscoveryGlobal;
            c.epoch = epoch_;
            c.conflicts.assign(aborted.begin(), aborted.end());
          });
        }
        break;
      case CtrlMsg::Kind::ConflictLocal:
        if (stale(m)) return;
        conflict_local_[m.worker] = m;
        if (conflict_local_.size() == cfg_.n_workers) {
          std::set<std::uint64_t> conflicts;
          for (auto& [w, msg] : conflict_local_)
            conflicts.insert(msg.conflicts.begin(), msg.conflicts.end());
          conflict_local_.clear();
          trace_->note_event(net_->steps(), net_->now(), "conflicts_global",
                             cfg_.n_workers, epoch_, conflicts.size());
          if (!conflicts.empty()) trace_->conflict_sets[epoch_] = conflicts;
          broadcast([&](CtrlMsg& c) {
            c.kind = CtrlMsg::Kind::ConflictsGlobal;
            c.epoch = epoch_;
            c.conflicts.assign(conflicts.begin(), conflicts.end());
          });
        }
        break;
      case CtrlMsg::Kind::P3Done:
        if (stale(m)) return;
        p3_done_[m.worker] = m;
        if (p3_done_.size() == cfg_.n_workers) {
          p3_done_.clear();
          trace_->note_event(net_->steps(), net_->now(), "p3_barrier",
                             cfg_.n_workers, epoch_);
          broadcast([&](CtrlMsg& c) {
            c.kind = CtrlMsg::Kind::P4Start;
            c.epoch = epoch_;
          });
        }
        break;
      case CtrlMsg::Kind::P4Done:
        if (stale(m)) return;
        p4_done_[m.worker] = m;
        if (p4_done_.size() == cfg_.n_workers) complete_epoch();
        break;
      case CtrlMsg::Kind::SnapshotDone:
        if (m.generation != generation_ || !m.snapshot_id) return;
        outstanding_persists_.erase({m.worker, *m.snapshot_id});
        latest_complete_[m.worker] = *m.snapshot_id;
        break;
      case CtrlMsg::Kind::Recovered:
        if (m.generation != generation_ || state_ != State::Recovering) return;
        recovered_[m.worker] = m;
        if (recovered_.size() == cfg_.n_workers) finish_recovery();
        break;
      default:
        break;
    }
  }

 private:
  struct WorkerInfo {
    bool registered = false;
    bool alive = false;
    SimTime last_heartbeat = 0;
    SequencerId sid = 0;
  };

  bool stale(const CtrlMsg& m) const {
    return state_ != State::Running || m.generation != generation_ ||
           m.epoch != epoch_;
  }

  void handle_register(WorkerId w) {
    if (w >= cfg_.n_workers)
      throw ClusterFullError("cluster holds " + std::to_string(cfg_.n_workers) +
                             " workers; rejecting worker " + std::to_string(w));
    auto& info = workers_[w];
    if (state_ == State::Forming) {
      info.registered = true;
      info.alive = true;
      info.last_heartbeat = net_->now();
      info.sid = w + 1;  // deterministic: registration order
      reply_registered(w);
      bool all = true;
      for (const auto& i : workers_) all = all && i.registered;
      if (all) {
        state_ = State::Running;
        snapshot_due_ = net_->now() + cfg_.snapshot_interval_ms;
        start_epoch(1, 0, std::nullopt, std::nullopt);
      }
      return;
    }
    // A known worker re-registering has lost its volatile state: global
    // rollback, whether or not the heartbeat timeout fired first.
    begin_recovery();
    info.alive = true;
    info.last_heartbeat = net_->now();
    reply_registered(w);
    maybe_broadcast_recover();
  }

  void reply_registered(WorkerId w) {
    CtrlMsg c;
    c.kind = CtrlMsg::Kind::Registered;
    c.worker = w;
    c.sid = workers_[w].sid;
    c.generation = generation_;
    send(w, c);
  }

  void on_worker_failure(WorkerId w) {
    workers_[w].alive = false;
    trace_->note_event(net_->steps(), net_->now(), "failure_detected", w, epoch_);
    begin_recovery();
    maybe_broadcast_recover();
  }

  void begin_recovery() {
    if (state_ == State::Recovering) {
      ++generation_;  // a second event while recovering restarts the round
      recovered_.clear();
      return;
    }
    state_ = State::Recovering;
    ++generation_;
    ++trace_->recoveries;
    recovered_.clear();
    disc_done_.clear();
    conflict_local_.clear();
    p3_done_.clear();
    p4_done_.clear();
    outstanding_persists_.clear();
    latest_complete_.clear();
    snapshot_wanted_ = false;
    trace_->note_event(net_->steps(), net_->now(), "recovery_started",
                       cfg_.n_workers, epoch_, generation_);
  }

  void maybe_broadcast_recover() {
    if (state_ != State::Recovering) return;
    for (const auto& i : workers_)
      if (!i.registered || !i.alive) return;
    // Roll everyone back to the newest snapshot all workers completed.
    std::optional<std::uint64_t> common;
    bool any_missing = false;
    for (WorkerId w = 0; w < cfg_.n_workers; ++w) {
      auto latest = snaps_->latest_complete(w);
      if (!latest) {
        any_missing = true;
        break;
      }
      common = common ? std::min(*common, *latest) : *latest;
    }
    if (any_missing) common.reset();
    next_snapshot_id_ = common ? *common + 1 : 0;
    trace_->note_event(net_->steps(), net_->now(), "recover_broadcast",
                       cfg_.n_workers, common ? *common + 1 : 0, generation_);
    broadcast([&](CtrlMsg& c) {
      c.kind = CtrlMsg::Kind::Recover;
      c.snapshot_id = common;
    });
  }

  void finish_recovery() {
    EpochNo base = recovered_.begin()->second.epoch;
    std::uint64_t max_lc = 0;
    for (auto& [w, m] : recovered_) {
      assert(m.epoch == base);
      max_lc = std::max(max_lc, m.lc);
    }
    recovered_.clear();
    state_ = State::Running;
    snapshot_due_ = std::max(snapshot_due_, net_->now());
    start_epoch(base + 1, max_lc, std::nullopt, std::nullopt);
  }

  void complete_epoch() {
    std::uint64_t max_lc = 0;
    std::uint64_t pending = 0;
    for (auto& [w, m] : p4_done_) {
      max_lc = std::max(max_lc, m.lc);
      pending += m.pending_reschedules;
    }
    p4_done_.clear();
    last_pending_ = pending;

    if (net_->now() >= snapshot_due_) snapshot_wanted_ = true;
    std::optional<std::uint64_t> snap;
    if (snapshot_wanted_ && pending == 0) {
      // The manifest format has no room for in-flight reschedules, so the
      // cut waits for a reschedule-free boundary.
      snap = next_snapshot_id_++;
      snapshot_wanted_ = false;
      snapshot_due_ = net_->now() + cfg_.snapshot_interval_ms;
      for (WorkerId w = 0; w < cfg_.n_workers; ++w)
        outstanding_persists_.insert({w, *snap});
    }

    std::optional<std::uint64_t> compact_through;
    if (latest_complete_.size() == cfg_.n_workers) {
      std::uint64_t m = std::uint64_t(-1);
      for (auto& [w, id] : latest_complete_) m = std::min(m, id);
      compact_through = m;
    }
    start_epoch(epoch_ + 1, max_lc, snap, compact_through);
  }

  void start_epoch(EpochNo e, std::uint64_t max_lc,
                   std::optional<std::uint64_t> snap,
                   std::optional<std::uint64_t> compact_through) {
    epoch_ = e;
    trace_->note_event(net_->steps(), net_->now(), "epoch_start", cfg_.n_workers,
                       e, snap ? *snap + 1 : 0);
    broadcast([&](CtrlMsg& c) {
      c.kind = CtrlMsg::Kind::EpochStart;
      c.epoch = e;
      c.max_lc = max_lc;
      c.snapshot_id = snap;
      c.compact_through = compact_through;
    });
  }

  template <typename F>
  void broadcast(F&& fill) {
    for (WorkerId w = 0; w < cfg_.n_workers; ++w) {
      CtrlMsg c;
      c.generation = generation_;
      fill(c);
      send(w, c);
    }
  }

  void send(WorkerId w, const CtrlMsg& m) {
    net_->send(self_, w, Envelope::make(MsgType::Ctrl, m.epoch, Tid{0}, m.encode()));
  }

  ClusterConfig cfg_;
  SimNet* net_;
  SnapshotStore* snaps_;
  Trace* trace_;
  NodeId self_;

  State state_ = State::Forming;
  std::vector<WorkerInfo> workers_;
  EpochNo epoch_ = 0;
  std::uint64_t generation_ = 1;

  std::map<WorkerId, CtrlMsg> disc_done_;
  std::map<WorkerId, CtrlMsg> conflict_local_;
  std::map<WorkerId, CtrlMsg> p3_done_;
  std::map<WorkerId, CtrlMsg> p4_done_;
  std::map<WorkerId, CtrlMsg> recovered_;

  SimTime snapshot_due_ = 0;
  bool snapshot_wanted_ = false;
  std::uint64_t next_snapshot_id_ = 0;
  std::set<std::pair<WorkerId, std::uint64_t>> outstanding_persists_;
  std::map<WorkerId, std::uint64_t> latest_complete_;
  std::uint64_t last_pending_ = 0;
};

}  // namespace styx
