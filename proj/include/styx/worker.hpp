#pragma once

#include <cassert>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "styx/commit.hpp"
#include "styx/messages.hpp"
#include "styx/runtime.hpp"
#include "styx/sequencer.hpp"
#include "styx/snapshot.hpp"
#include "styx/state_store.hpp"
#include "styx/trace.hpp"
#include "styx/transport.hpp"
#include "styx/types.hpp"

namespace styx {

// Worker phases for one epoch. Message handlers stay live across phases;
// the enum drives trace attribution and barrier bookkeeping.
enum class WorkerPhase : int {
  Idle = 0,
  Discovery = 2,
  AwaitDiscoveryGlobal = 3,
  AwaitConflicts = 4,
  LockFreeCommit = 5,
  AwaitP4Start = 6,
  LockBasedCommit = 7,
  Recovering = 9,
};

class Worker final : public SimNode {
 public:
  static constexpr std::uint64_t kHeartbeatTimer = 1;

  Worker(WorkerId id, const ClusterConfig& cfg, SimNet* net,
         OperatorRegistry* registry, ReplayableLog* input, ReplayableLog* output,
         SnapshotStore* snaps, Trace* trace, NodeId coordinator_node)
      : id_(id),
        cfg_(cfg),
        net_(net),
        reg_(registry),
        input_(input),
        output_(output),
        snaps_(snaps),
        trace_(trace),
        coord_(coordinator_node),
        seq_(id + 1, cfg.n_seq(), snaps->durable(), SnapshotStore::epoch_log_name(id)) {}

  WorkerId id() const { return id_; }
  const WorkerState& state() const { return state_; }
  const Sequencer& sequencer() const { return seq_; }
  WorkerPhase phase() const { return phase_; }
  std::uint64_t generation() const { return generation_; }
  const std::set<std::uint64_t>& duplicate_suppress_set() const {
    return dup_suppress_;
  }

  void start() {
    ctrl_to_coord([&](CtrlMsg& m) { m.kind = CtrlMsg::Kind::Register; });
    net_->set_timer(id_, cfg_.heartbeat_interval_ms, kHeartbeatTimer);
  }

  // -------------------------------------------------------------------------
  // SimNode
  // -------------------------------------------------------------------------

  void on_timer(std::uint64_t timer_id) override {
    if (timer_id == kHeartbeatTimer) {
      ctrl_to_coord([&](CtrlMsg& m) { m.kind = CtrlMsg::Kind::Heartbeat; });
      net_->set_timer(id_, cfg_.heartbeat_interval_ms, kHeartbeatTimer);
    }
  }

  void on_message(NodeId src, const Envelope& env) override {
    switch (env.msg_type) {
      case MsgType::Ctrl:
        handle_ctrl(CtrlMsg::decode(env.payload));
        break;
      case MsgType::FnCall: {
        auto m = FnCallMsg::decode(env.payload);
        if (m.generation != generation_) return;
        handle_fn_call(m);
        break;
      }
      case MsgType::FnResp: {
        auto m = FnRespMsg::decode(env.payload);
        if (m.generation != generation_) return;
        handle_fn_resp(m);
        break;
      }
      case MsgType::AckShare: {
        auto m = AckMsg::decode(env.payload);
        if (m.generation != generation_) return;
        if (m.replay)
          handle_p4_ack(m);
        else
          handle_discovery_ack(m);
        break;
      }
      default:
        break;
    }
    (void)src;
  }

 private:
  // -------------------------------------------------------------------------
  // Execution bookkeeping
  // -------------------------------------------------------------------------

  struct Invocation {
    CachedInvocation* record = nullptr;
    std::vector<InvocationEntry> chain;  // ancestors, root first
    CallContext ctx;
    Params decoded_params;
    FnTask task;
    bool mismatch = false;
    bool chain_released = false;
  };

  struct TxnExec {
    ClientRequest request;
    Tid tid{0};
    TxnStatus status = TxnStatus::Pending;

    // discovery attempt
    std::optional<CallTreeTracker> tracker;
    std::map<CallPath, WorkerId> known;
    bool abort_seen = false;
    std::string abort_msg;
    Value root_result;
    bool resolved = false;

    // lock-based attempt
    bool in_p4 = false;
    std::size_t p4_expected = 0;
    std::size_t p4_acks = 0;
    bool p4_mismatch = false;
    bool p4_abort = false;
    std::string p4_abort_msg;
    Value p4_root_result;

    void reset_attempt() {
      tracker.reset();
      known.clear();
      abort_seen = false;
      abort_msg.clear();
      root_result = Value();
      resolved = false;
      in_p4 = false;
      p4_expected = p4_acks = 0;
      p4_mismatch = p4_abort = false;
      p4_abort_msg.clear();
      p4_root_result = Value();
    }
  };

  using InvKey = std::pair<std::uint64_t, CallPath>;

  // -------------------------------------------------------------------------
  // Control plane
  // -------------------------------------------------------------------------

  void handle_ctrl(const CtrlMsg& m) {
    switch (m.kind) {
      case CtrlMsg::Kind::Registered:
        assert(m.sid == seq_.state().sid);
        generation_ = m.generation;
        break;
      case CtrlMsg::Kind::EpochStart: {
        if (m.generation != generation_) return;
        if (m.snapshot_id) begin_snapshot(*m.snapshot_id);
        if (m.compact_through) maybe_compact(*m.compact_through);
        seq_.rebalance(m.max_lc);
        gc_resolved();
        sequence_epoch(m.epoch);
        break;
      }
      case CtrlMsg::Kind::DiscoveryGlobal: {
        if (m.generation != generation_ || m.epoch != epoch_) return;
        global_aborted_.clear();
        for (auto t : m.conflicts) global_aborted_.insert(t);
        for (auto t : global_aborted_) index_.remove_txn(Tid{t}, txn_keys_[t]);
        for (const auto& [key, entry] : index_.entries()) {
          auto& log = trace_->rw_index_log[{epoch_, key.render()}];
          for (auto t : entry.readers) log.insert(t);
          for (auto t : entry.writers) log.insert(t);
        }
        auto local = index_.local_conflicts();
        phase_ = WorkerPhase::AwaitConflicts;
        ctrl_to_coord([&](CtrlMsg& c) {
          c.kind = CtrlMsg::Kind::ConflictLocal;
          c.epoch = epoch_;
          c.conflicts.assign(local.begin(), local.end());
        });
        break;
      }
      case CtrlMsg::Kind::ConflictsGlobal: {
        if (m.generation != generation_ || m.epoch != epoch_) return;
        global_conflicts_.clear();
        for (auto t : m.conflicts) global_conflicts_.insert(t);
        lock_free_commit();
        break;
      }
      case CtrlMsg::Kind::P4Start: {
        if (m.generation != generation_ || m.epoch != epoch_) return;
        begin_lock_based_commit();
        break;
      }
      case CtrlMsg::Kind::P4Decision: {
        if (m.generation != generation_ || m.epoch != epoch_) return;
        apply_p4_decision(m);
        break;
      }
      case CtrlMsg::Kind::Recover:
        recover(m);
        break;
      default:
        break;
    }
  }

  void sequence_epoch(EpochNo e) {
    epoch_ = e;
    reset_epoch_machinery();

    // Rescheduled transactions re-enter discovery first, by TID; they hold
    // lower TIDs than anything newly sequenced.
    for (auto& [t, exec] : txns_) {
      if (exec.status == TxnStatus::Rescheduled) {
        exec.reset_attempt();
        exec.status = TxnStatus::Pending;
        epoch_txns_.push_back(t);
      }
    }

    std::uint32_t n = 0;
    if (replay_idx_ < replay_sizes_.size()) {
      const auto& rec = replay_sizes_[replay_idx_];
      assert(rec.epoch == e);
      Offset avail = input_->tail(id_) - input_cursor_;
      if (avail < rec.size)
        throw LogGapError("replay of epoch " + std::to_string(e) + " needs " +
                          std::to_string(rec.size) + " requests, input has " +
                          std::to_string(avail));
      n = rec.size;
      ++replay_idx_;
      seq_.note_epoch(e);
    } else {
      Offset avail = input_->tail(id_) - input_cursor_;
      n = std::uint32_t(std::min<Offset>(avail, cfg_.epoch_max_txns));
      seq_.log_epoch_size(e, n);
    }
    trace_->epoch_sizes[{id_, e}] = n;

    for (std::uint32_t i = 0; i < n; ++i) {
      const Bytes& raw = input_->read(id_, input_cursor_);
      ClientRequest req = ClientRequest::decode(raw);
      ++input_cursor_;
      Tid tid = seq_.assign_tid();
      TxnExec exec;
      exec.request = req;
      exec.tid = tid;
      txns_[tid.value] = std::move(exec);
      trace_->tid_to_request[tid.value] = req.request_id;
      trace_->tid_request_bytes[tid.value] = raw;
      epoch_txns_.push_back(tid.value);
    }

    phase_ = WorkerPhase::Discovery;
    for (auto t : epoch_txns_) start_root(t);
    maybe_discovery_done();
  }

  void reset_epoch_machinery() {
    index_.clear();
    txn_keys_.clear();
    disc_buffers_.clear();
    p4_buffers_.clear();
    cache_.clear();
    running_.clear();
    sync_waits_.clear();
    early_responses_.clear();
    replay_chains_.clear();
    same_key_seq_.clear();
    global_aborted_.clear();
    global_conflicts_.clear();
    p4_decided_.clear();
    locks_.clear();
    epoch_txns_.clear();
    discovery_done_sent_ = false;
    p4_started_ = false;
    p4_done_sent_ = false;
  }

  void gc_resolved() {
    for (auto it = txns_.begin(); it != txns_.end();) {
      if (it->second.status == TxnStatus::Committed ||
          it->second.status == TxnStatus::AbortedLogic)
        it = txns_.erase(it);
      else
        ++it;
    }
  }

  // -------------------------------------------------------------------------
  // Discovery
  // -------------------------------------------------------------------------

  void start_root(std::uint64_t t) {
    auto& exec = txns_.at(t);
    exec.tracker.emplace(Tid{t});
    exec.known[{}] = id_;

    const auto& target = exec.request.target;
    if (reg_->worker_of(target, cfg_.n_workers) != id_)
      throw WrongPartitionError("request routed to wrong worker: " +
                                target.render());

    CachedInvocation rec;
    rec.tid = Tid{t};
    rec.target = target;
    rec.function_name = exec.request.function_name;
    rec.params = exec.request.params;
    rec.mode = CallMode::Async;
    rec.root_worker = id_;
    rec.caller_worker = id_;
    rec.is_root = true;
    rec.start_seq = same_key_seq_[{t, target}]++;
    auto* stored = &(cache_[{t, CallPath{}}] = std::move(rec));

    launch(stored, AckShare::whole(), {}, {}, false);
  }

  void handle_fn_call(const FnCallMsg& m) {
    if (reg_->worker_of(m.target, cfg_.n_workers) != id_)
      throw WrongPartitionError("invocation for key not owned here: " +
                                m.target.render());

    CachedInvocation rec;
    rec.tid = m.tid;
    rec.path = m.path;
    rec.target = m.target;
    rec.function_name = m.function_name;
    rec.params = m.params;
    rec.mode = m.mode;
    rec.caller_worker = m.caller_worker;
    if (!m.chain.empty()) rec.caller_path = m.chain.back().path;
    rec.root_worker = m.root_worker;
    rec.start_seq = same_key_seq_[{m.tid.value, m.target}]++;
    auto* stored = &(cache_[{m.tid.value, m.path}] = std::move(rec));

    AckShare share = m.share ? AckShare::parse(*m.share) : AckShare::whole();
    std::vector<InvocationEntry> extra = m.extra_entries;
    launch(stored, share, m.chain, extra, m.replay);
  }

  void launch(CachedInvocation* rec, AckShare share,
              std::vector<InvocationEntry> chain,
              std::vector<InvocationEntry> absorbed, bool replay) {
    auto inv = std::make_unique<Invocation>();
    Invocation* ip = inv.get();
    ip->record = rec;
    ip->chain = std::move(chain);

    CallContext& ctx = ip->ctx;
    ctx.txn = rec->tid;
    ctx.self_key = rec->target;
    ctx.path = rec->path;
    ctx.invoked_mode = rec->mode;
    ctx.is_root = rec->is_root;
    ctx.replay = replay;
    ctx.pending_share = std::move(share);
    ctx.absorbed_entries = std::move(absorbed);

    ctx.hook_get = [this, ip]() { return read_state(ip); };
    ctx.hook_put = [this, ip](std::optional<Bytes> v) {
      write_state(ip, std::move(v));
    };
    ctx.hook_validate_operator = [this](const std::string& op) { reg_->get(op); };
    ctx.hook_on_call = [this, ip](std::uint32_t ordinal, std::uint64_t fp,
                                  CallMode mode) {
      return on_call(ip, ordinal, fp, mode);
    };
    ctx.hook_sync_call = [this, ip](FunctionInvocation fi, std::uint32_t ordinal) {
      return begin_sync_call(ip, std::move(fi), ordinal);
    };

    for (const auto& p : rec->params)
      ip->decoded_params.push_back(codec::decode(p));

    InvKey key{rec->tid.value, rec->path};
    running_[key] = std::move(inv);

    try {
      const FnHandler& handler =
          reg_->function(rec->target.op, rec->function_name);
      ip->task = handler(ip->ctx, ip->decoded_params);
    } catch (const Error& e) {
      // unknown function or operator at dispatch: aborts the transaction
      settle_failed_dispatch(ip, e.what());
      running_.erase(key);
      return;
    }
    drive(ip);
  }

  void drive(Invocation* ip) {
    ip->task.resume();
    if (ip->task.done()) {
      settle(ip);
      running_.erase({ip->record->tid.value, ip->record->path});
    }
  }

  void resume_from_slot(Tid tid, const CallPath& caller_path) {
    auto it = running_.find({tid.value, caller_path});
    if (it == running_.end()) return;
    drive(it->second.get());
  }

  // --- state access hooks ---------------------------------------------------

  std::optional<Bytes> read_state(Invocation* ip) {
    const auto& key = ip->record->target;
    ip->ctx.read_self = true;
    auto& buffers = ip->ctx.replay ? p4_buffers_ : disc_buffers_;
    if (!ip->ctx.replay) {
      index_.add_read(key, ip->record->tid);
      txn_keys_[ip->record->tid.value].insert(key);
    }
    auto bt = buffers.find(ip->record->tid.value);
    if (bt != buffers.end()) {
      auto vt = bt->second.find(key);
      if (vt != bt->second.end()) return vt->second;  // read-your-writes
    }
    return state_.get(key);
  }

  void write_state(Invocation* ip, std::optional<Bytes> value) {
    const auto& key = ip->record->target;
    ip->ctx.wrote_self = true;
    if (!ip->ctx.replay) {
      index_.add_write(key, ip->record->tid);
      txn_keys_[ip->record->tid.value].insert(key);
    }
    auto& buffers = ip->ctx.replay ? p4_buffers_ : disc_buffers_;
    buffers[ip->record->tid.value][key] = std::move(value);
  }

  bool on_call(Invocation* ip, std::uint32_t ordinal, std::uint64_t fp,
               CallMode mode) {
    if (!ip->ctx.replay) {
      ip->record->children.push_back({fp, mode});
      return true;
    }
    const auto& ch = ip->record->children;
    if (ordinal >= ch.size() || ch[ordinal].fingerprint != fp ||
        ch[ordinal].mode != mode) {
      ip->mismatch = true;
      return false;
    }
    return true;
  }

  SyncWaitSlot* begin_sync_call(Invocation* ip, FunctionInvocation fi,
                                std::uint32_t ordinal) {
    Tid tid = ip->record->tid;
    CallPath child_path = ip->record->path;
    child_path.push_back(ordinal);

    SyncWaitSlot& slot = sync_waits_[{tid.value, child_path}];
    slot = SyncWaitSlot{};

    if (ip->ctx.replay) {
      auto it = early_responses_.find({tid.value, child_path});
      if (it != early_responses_.end()) {
        fill_slot(slot, it->second);
        early_responses_.erase(it);
      }
    } else {
      auto halves = ip->ctx.pending_share.split(2);
      ip->ctx.pending_share = halves[0];

      FnCallMsg call;
      call.tid = tid;
      call.path = child_path;
      call.chain = ip->chain;
      call.chain.push_back({ip->record->path, id_});
      call.target = fi.target;
      call.function_name = fi.function_name;
      call.params = fi.params;
      call.mode = CallMode::Sync;
      call.share = halves[1].encode();
      call.root_worker = ip->record->root_worker;
      call.caller_worker = id_;
      call.replay = false;
      call.generation = generation_;
      send_fn_call(reg_->worker_of(fi.target, cfg_.n_workers), call);
    }
    release_chain(ip);
    return &slot;
  }

  void fill_slot(SyncWaitSlot& slot, const FnRespMsg& m) {
    slot.ready = true;
    slot.abort = m.abort;
    slot.abort_msg = m.abort_msg;
    slot.terminated = m.terminated;
    if (m.value) slot.value = codec::decode(*m.value);
    if (m.share) slot.returned_share = AckShare::parse(*m.share);
    slot.entries = m.entries;
  }

  // --- settlement -------------------------------------------------------------

  void settle(Invocation* ip) {
    auto* rec = ip->record;
    if (!ip->ctx.replay) {
      rec->read_self = ip->ctx.read_self;
      rec->wrote_self = ip->ctx.wrote_self;
    }

    std::exception_ptr err = ip->task.promise().error;
    bool cut = false;
    bool aborted = false;
    std::string abort_msg;
    if (err) {
      try {
        std::rethrow_exception(err);
      } catch (const ReplayCut&) {
        cut = true;
      } catch (const std::exception& e) {
        aborted = true;
        abort_msg = e.what();
      } catch (...) {
        aborted = true;
        abort_msg = "unknown error";
      }
    }
    if (!cut && ip->ctx.abort_poisoned) {
      aborted = true;
      abort_msg = ip->ctx.poison_msg;
    }

    if (ip->ctx.replay)
      settle_replay(ip, cut, aborted, abort_msg);
    else
      settle_discovery(ip, aborted, abort_msg);
  }

  void settle_discovery(Invocation* ip, bool aborted, const std::string& msg) {
    auto* rec = ip->record;
    CallContext& ctx = ip->ctx;
    InvocationEntry self_entry{rec->path, id_};

    if (rec->is_root && ip->task.valid())
      txns_.at(rec->tid.value).root_result = ip->task.promise().result;

    if (!aborted && !ctx.outgoing.empty()) {
      auto shares = ctx.pending_share.split(ctx.outgoing.size());
      for (std::size_t i = 0; i < ctx.outgoing.size(); ++i) {
        const auto& pc = ctx.outgoing[i];
        FnCallMsg call;
        call.tid = rec->tid;
        call.path = rec->path;
        call.path.push_back(pc.ordinal);
        call.chain = ip->chain;
        call.chain.push_back(self_entry);
        call.extra_entries = ctx.absorbed_entries;
        call.target = pc.invocation.target;
        call.function_name = pc.invocation.function_name;
        call.params = pc.invocation.params;
        call.mode = CallMode::Async;
        call.share = shares[i].encode();
        call.root_worker = rec->root_worker;
        call.caller_worker = id_;
        call.generation = generation_;
        send_fn_call(reg_->worker_of(call.target, cfg_.n_workers), call);
      }
      if (rec->mode == CallMode::Sync && !rec->is_root) {
        FnRespMsg resp = base_resp(ip);
        resp.value = codec::encode(ip->task.promise().result);
        resp.entries = ctx.absorbed_entries;
        resp.entries.push_back(self_entry);
        send_fn_resp(rec->caller_worker, resp);
      }
      return;
    }

    // Terminal (or aborted): the held share settles somewhere.
    std::vector<InvocationEntry> entries = ctx.absorbed_entries;
    entries.push_back(self_entry);

    if (rec->is_root) {
      AckMsg ack;
      ack.tid = rec->tid;
      ack.share = ctx.pending_share.encode();
      ack.entries = entries;
      ack.from_path = rec->path;
      ack.abort = aborted;
      ack.abort_msg = msg;
      ack.generation = generation_;
      send_ack(id_, ack);
    } else if (rec->mode == CallMode::Sync) {
      FnRespMsg resp = base_resp(ip);
      resp.share = ctx.pending_share.encode();
      resp.abort = aborted;
      resp.abort_msg = msg;
      if (!aborted) resp.value = codec::encode(ip->task.promise().result);
      resp.entries = entries;
      send_fn_resp(rec->caller_worker, resp);
    } else {
      AckMsg ack;
      ack.tid = rec->tid;
      ack.share = ctx.pending_share.encode();
      ack.entries = entries;
      for (const auto& e : ip->chain) ack.entries.push_back(e);
      ack.from_path = rec->path;
      ack.abort = aborted;
      ack.abort_msg = msg;
      ack.generation = generation_;
      send_ack(rec->root_worker, ack);
    }
  }

  void settle_failed_dispatch(Invocation* ip, const std::string& msg) {
    if (ip->ctx.replay)
      settle_replay(ip, false, true, msg);
    else
      settle_discovery(ip, true, msg);
  }

  FnRespMsg base_resp(Invocation* ip) {
    FnRespMsg resp;
    resp.tid = ip->record->tid;
    resp.caller_path = ip->record->caller_path;
    resp.callee_path = ip->record->path;
    resp.replay = ip->ctx.replay;
    resp.generation = generation_;
    return resp;
  }

  void settle_replay(Invocation* ip, bool cut, bool aborted,
                     const std::string& msg) {
    auto* rec = ip->record;
    CallContext& ctx = ip->ctx;

    // A diverging footprint — different calls or a different read/write set —
    // invalidates the cached plan even when the re-execution aborted; the
    // abort only stands when the recorded shape reproduced exactly. A cut
    // invocation is incomplete by construction; the divergence origin has
    // already flagged itself.
    bool mismatch = ip->mismatch;
    if (!cut) {
      if (ctx.produced.size() != rec->children.size()) mismatch = true;
      if (ctx.read_self != rec->read_self || ctx.wrote_self != rec->wrote_self)
        mismatch = true;
    }

    if (rec->is_root && !aborted && !cut && ip->task.valid())
      txns_.at(rec->tid.value).p4_root_result = ip->task.promise().result;

    if (rec->mode == CallMode::Sync && !rec->is_root) {
      FnRespMsg resp = base_resp(ip);
      resp.abort = aborted;
      resp.abort_msg = msg;
      resp.terminated = cut || (mismatch && !aborted);
      if (!aborted && !resp.terminated)
        resp.value = codec::encode(ip->task.promise().result);
      send_fn_resp(rec->caller_worker, resp);
    }

    AckMsg ack;
    ack.tid = rec->tid;
    ack.from_path = rec->path;
    ack.abort = aborted;
    ack.abort_msg = msg;
    ack.mismatch = mismatch;
    ack.replay = true;
    ack.generation = generation_;
    send_ack(rec->root_worker, ack);

    release_chain(ip);
  }

  // --- discovery message handlers -------------------------------------------

  void handle_fn_resp(const FnRespMsg& m) {
    auto key = InvKey{m.tid.value, m.callee_path};
    auto it = sync_waits_.find(key);
    if (it == sync_waits_.end()) {
      early_responses_[key] = m;  // replay: callee finished before the await
      return;
    }
    fill_slot(it->second, m);
    if (it->second.continuation) resume_from_slot(m.tid, m.caller_path);
  }

  void handle_discovery_ack(const AckMsg& m) {
    auto it = txns_.find(m.tid.value);
    if (it == txns_.end() || !it->second.tracker || !m.share) return;
    auto& exec = it->second;
    if (m.abort && !exec.abort_seen) {
      exec.abort_seen = true;
      exec.abort_msg = m.abort_msg;
    }
    for (const auto& e : m.entries) exec.known[e.path] = e.host;
    auto outcome = exec.tracker->collect(AckShare::parse(*m.share));
    if (outcome == CollectOutcome::Complete) {
      exec.resolved = true;
      maybe_discovery_done();
    }
  }

  void maybe_discovery_done() {
    if (phase_ != WorkerPhase::Discovery || discovery_done_sent_) return;
    for (auto t : epoch_txns_)
      if (!txns_.at(t).resolved) return;
    discovery_done_sent_ = true;
    phase_ = WorkerPhase::AwaitDiscoveryGlobal;
    std::vector<std::uint64_t> aborted;
    for (auto t : epoch_txns_)
      if (txns_.at(t).abort_seen) aborted.push_back(t);
    ctrl_to_coord([&](CtrlMsg& c) {
      c.kind = CtrlMsg::Kind::DiscoveryDone;
      c.epoch = epoch_;
      c.conflicts = aborted;  // local logic-aborted TIDs ride the barrier
    });
  }

  // -------------------------------------------------------------------------
  // Phase 3: lock-free commit
  // -------------------------------------------------------------------------

  void lock_free_commit() {
    phase_ = WorkerPhase::LockFreeCommit;

    std::set<NamespacedKey> written;  // no key is written twice in phase 3
    for (const auto& [t, buffer] : disc_buffers_) {
      if (global_conflicts_.count(t) || global_aborted_.count(t)) continue;
      for (const auto& [k, v] : buffer) {
        assert(!written.count(k));
        written.insert(k);
      }
      state_.apply_write_buffer(buffer);
    }

    for (auto t : epoch_txns_) {
      auto& exec = txns_.at(t);
      if (exec.abort_seen) {
        exec.status = TxnStatus::AbortedLogic;
        emit_reply(exec, TxnStatus::AbortedLogic, Bytes(exec.abort_msg),
                   ResolutionPhase::DiscoveryAbort);
      } else if (!global_conflicts_.count(t)) {
        exec.status = TxnStatus::Committed;
        emit_reply(exec, TxnStatus::Committed, codec::encode(exec.root_result),
                   ResolutionPhase::LockFree);
      } else {
        exec.in_p4 = true;
        exec.p4_expected = exec.known.size();
      }
    }

    phase_ = WorkerPhase::AwaitP4Start;
    ctrl_to_coord([&](CtrlMsg& c) {
      c.kind = CtrlMsg::Kind::P3Done;
      c.epoch = epoch_;
    });
  }

  // -------------------------------------------------------------------------
  // Phase 4: lock-based commit with cached re-invocation
  // -------------------------------------------------------------------------

  void begin_lock_based_commit() {
    phase_ = WorkerPhase::LockBasedCommit;
    p4_started_ = true;

    for (auto t : global_conflicts_) {
      auto keys_it = txn_keys_.find(t);
      bool has_records = has_local_records(t);
      if (keys_it != txn_keys_.end() && !keys_it->second.empty())
        locks_.register_txn(Tid{t}, keys_it->second);
      else if (has_records)
        launch_replay_txn(t);  // stateless parts need no locks
    }
    process_grants();
    maybe_p4_done();
  }

  bool has_local_records(std::uint64_t t) const {
    auto it = cache_.lower_bound({t, CallPath{}});
    return it != cache_.end() && it->first.first == t;
  }

  void process_grants() {
    while (true) {
      auto grants = locks_.grantable();
      if (grants.empty()) break;
      for (Tid t : grants) {
        locks_.grant(t);
        launch_replay_txn(t.value);
      }
    }
  }

  // Launch every local cached invocation of the txn; same-key records run in
  // recorded discovery start order, released at the predecessor's first
  // suspension or settlement.
  void launch_replay_txn(std::uint64_t t) {
    std::map<NamespacedKey, std::vector<CachedInvocation*>> groups;
    for (auto it = cache_.lower_bound({t, CallPath{}});
         it != cache_.end() && it->first.first == t; ++it)
      groups[it->second.target].push_back(&it->second);

    for (auto& [key, recs] : groups) {
      std::sort(recs.begin(), recs.end(),
                [](auto* a, auto* b) { return a->start_seq < b->start_seq; });
      auto& chain = replay_chains_[{t, key}];
      for (std::size_t i = 1; i < recs.size(); ++i) chain.push_back(recs[i]);
      launch(recs[0], AckShare::whole(), {}, {}, true);
    }
  }

  void release_chain(Invocation* ip) {
    if (ip->chain_released || !ip->ctx.replay) return;
    ip->chain_released = true;
    auto it = replay_chains_.find({ip->record->tid.value, ip->record->target});
    if (it == replay_chains_.end() || it->second.empty()) return;
    CachedInvocation* next = it->second.front();
    it->second.pop_front();
    launch(next, AckShare::whole(), {}, {}, true);
  }

  void handle_p4_ack(const AckMsg& m) {
    auto it = txns_.find(m.tid.value);
    if (it == txns_.end() || !it->second.in_p4) return;
    auto& exec = it->second;
    exec.p4_acks++;
    if (m.mismatch) exec.p4_mismatch = true;
    if (m.abort && !exec.p4_abort) {
      exec.p4_abort = true;
      exec.p4_abort_msg = m.abort_msg;
    }
    if (exec.p4_acks == exec.p4_expected) {
      std::uint8_t decision = exec.p4_mismatch ? 1 : (exec.p4_abort ? 2 : 0);
      for (WorkerId w = 0; w < cfg_.n_workers; ++w) {
        CtrlMsg c;
        c.kind = CtrlMsg::Kind::P4Decision;
        c.worker = id_;
        c.epoch = epoch_;
        c.generation = generation_;
        c.decision_tid = m.tid;
        c.decision = decision;
        c.decision_msg = exec.p4_abort_msg;
        send_ctrl(w, c);
      }
    }
  }

  void apply_p4_decision(const CtrlMsg& m) {
    std::uint64_t t = m.decision_tid.value;
    if (p4_decided_.count(t)) return;
    p4_decided_.insert(t);

    auto buf = p4_buffers_.find(t);
    auto exec_it = txns_.find(t);
    bool rooted = exec_it != txns_.end() && exec_it->second.in_p4;

    if (m.decision == 0) {
      if (buf != p4_buffers_.end()) state_.apply_write_buffer(buf->second);
      if (rooted) {
        exec_it->second.status = TxnStatus::Committed;
        emit_reply(exec_it->second, TxnStatus::Committed,
                   codec::encode(exec_it->second.p4_root_result),
                   ResolutionPhase::LockBased);
      }
    } else if (m.decision == 2) {
      if (rooted) {
        exec_it->second.status = TxnStatus::AbortedLogic;
        emit_reply(exec_it->second, TxnStatus::AbortedLogic,
                   Bytes(m.decision_msg), ResolutionPhase::LockBased);
      }
    } else {
      if (rooted) {
        exec_it->second.status = TxnStatus::Rescheduled;
        trace_->reschedule_events++;
      }
    }
    p4_buffers_.erase(t);
    locks_.release(m.decision_tid);
    process_grants();
    maybe_p4_done();
  }

  void maybe_p4_done() {
    if (!p4_started_ || p4_done_sent_) return;
    if (p4_decided_.size() != global_conflicts_.size()) return;
    p4_done_sent_ = true;
    std::uint64_t pending = 0;
    std::vector<std::uint64_t> committed, rescheduled, aborted;
    for (auto& [t, exec] : txns_) {
      if (exec.status == TxnStatus::Rescheduled) {
        ++pending;
        rescheduled.push_back(t);
      }
      if (!exec.in_p4) continue;
      if (exec.status == TxnStatus::Committed) committed.push_back(t);
      if (exec.status == TxnStatus::AbortedLogic) aborted.push_back(t);
    }
    ctrl_to_coord([&](CtrlMsg& c) {
      c.kind = CtrlMsg::Kind::P4Done;
      c.epoch = epoch_;
      c.lc = seq_.state().lc;
      c.pending_reschedules = pending;
      c.committed = committed;
      c.rescheduled = rescheduled;
      c.aborted = aborted;
    });
    phase_ = WorkerPhase::Idle;
  }

  // -------------------------------------------------------------------------
  // Replies & dedup
  // -------------------------------------------------------------------------

  void emit_reply(TxnExec& exec, TxnStatus status, Bytes payload,
                  ResolutionPhase phase) {
    Trace::Resolution r;
    r.tid = exec.tid.value;
    r.verdict = status;
    r.epoch = epoch_;
    r.phase = phase;
    r.request_id = exec.request.request_id;
    r.at = net_->now();
    if (dup_suppress_.erase(exec.tid.value) > 0) {
      r.suppressed_duplicate = true;
    } else {
      OutputRecord rec{exec.request.request_id, exec.tid, status,
                       std::move(payload), epoch_};
      Offset off = output_->append(id_, rec.encode());
      trace_->note_event(net_->steps(), net_->now(), "output_append", id_,
                         exec.tid.value, off);
    }
    trace_->resolutions.push_back(std::move(r));
  }

  // -------------------------------------------------------------------------
  // Snapshotting & compaction
  // -------------------------------------------------------------------------

  void begin_snapshot(std::uint64_t snap_id) {
    SnapshotManifest manifest;
    manifest.meta.snapshot_id = snap_id;
    manifest.meta.worker_id = id_;
    manifest.meta.input_offsets[id_] = input_cursor_;
    manifest.meta.output_offsets[id_] = output_->tail(id_);
    manifest.meta.epoch_count = seq_.state().epoch_counter;
    manifest.meta.sid = seq_.state().sid;
    manifest.meta.lc = seq_.state().lc;
    auto [delta_id, delta] = state_.seal_delta();
    (void)delta_id;
    manifest.payload = std::move(delta);

    trace_->note_event(net_->steps(), net_->now(), "snapshot_start", id_,
                       snap_id, manifest.payload.size());
    SimTime delay = 2 + SimTime(manifest.payload.size()) / 8;
    persist_tokens_.push_back(net_->schedule_for(
        id_, delay, [this, snap_id, manifest = std::move(manifest)]() {
          snaps_->persist(id_, manifest);
          trace_->note_event(net_->steps(), net_->now(), "manifest_complete",
                             id_, snap_id,
                             manifest.meta.output_offsets.at(id_));
          ctrl_to_coord([&](CtrlMsg& c) {
            c.kind = CtrlMsg::Kind::SnapshotDone;
            c.snapshot_id = snap_id;
          });
        }));
  }

  void maybe_compact(std::uint64_t through) {
    auto ids = snaps_->uncompacted_ids(id_);
    std::vector<std::uint64_t> eligible;
    for (auto i : ids)
      if (i <= through) eligible.push_back(i);
    if (eligible.size() < 4) return;

    persist_tokens_.push_back(net_->schedule_for(id_, 4, [this, eligible]() {
      std::map<NamespacedKey, Bytes> full;
      auto base = snaps_->compacted_base(id_);
      SnapshotMeta meta;
      if (base) {
        auto m = snaps_->load_compacted(id_, *base);
        full = compact({}, {{*base, m.payload}});
      }
      std::vector<std::pair<std::uint64_t, DeltaMap>> deltas;
      for (auto i : eligible) {
        auto m = snaps_->load_delta(id_, i);
        deltas.emplace_back(i, m.payload);
        meta = m.meta;
      }
      full = compact(std::move(full), deltas);
      SnapshotManifest out;
      out.meta = meta;
      for (auto& [k, v] : full) out.payload[k] = v;
      snaps_->persist_compacted(id_, out);
      trace_->note_event(net_->steps(), net_->now(), "compacted", id_,
                         eligible.back(), eligible.size());
    }));
  }

  // -------------------------------------------------------------------------
  // Recovery
  // -------------------------------------------------------------------------

  void recover(const CtrlMsg& m) {
    generation_ = m.generation;
    phase_ = WorkerPhase::Recovering;
    reset_epoch_machinery();
    txns_.clear();
    for (auto tok : persist_tokens_) net_->cancel_action(tok);
    persist_tokens_.clear();
    dup_suppress_.clear();

    EpochNo epoch_count = 0;
    if (m.snapshot_id) {
      auto rec = snaps_->recover(id_, *m.snapshot_id);
      if (!rec)
        throw StorageIoError("agreed snapshot missing on worker " +
                             std::to_string(id_));
      state_.restore(rec->state, rec->next_snapshot_id);
      input_cursor_ = rec->meta.input_offsets.at(id_);
      SequencerState s;
      s.sid = rec->meta.sid;
      s.lc = rec->meta.lc;
      s.epoch_counter = rec->meta.epoch_count;
      seq_.restore(s);
      epoch_count = rec->meta.epoch_count;
      snaps_->truncate_above(id_, *m.snapshot_id);
      scan_duplicates(rec->meta.output_offsets.at(id_));
    } else {
      state_.restore({}, 0);
      input_cursor_ = 0;
      SequencerState s;
      s.sid = id_ + 1;
      seq_.restore(s);
      snaps_->truncate_all(id_);
      scan_duplicates(0);
    }

    replay_sizes_ = seq_.replay_sizes(epoch_count);
    replay_idx_ = 0;
    trace_->note_event(net_->steps(), net_->now(), "worker_recovered", id_,
                       m.snapshot_id ? *m.snapshot_id + 1 : 0,
                       replay_sizes_.size());

    ctrl_to_coord([&](CtrlMsg& c) {
      c.kind = CtrlMsg::Kind::Recovered;
      c.lc = seq_.state().lc;
      c.epoch = epoch_count;
    });
  }

  // Possible duplicates: output records appended at or past the snapshotted
  // offset already reached the log; their TIDs must not be re-emitted.
  void scan_duplicates(Offset from) {
    dup_suppress_.clear();
    for (const auto& [off, rec] : output_->read_from(id_, from)) {
      (void)off;
      dup_suppress_.insert(OutputRecord::decode(rec).tid.value);
    }
  }

  // -------------------------------------------------------------------------
  // Send helpers (trace-attributed)
  // -------------------------------------------------------------------------

  void send_fn_call(WorkerId dst, const FnCallMsg& m) {
    trace_->messages.push_back({epoch_, int(phase_), MsgType::FnCall, m.replay,
                                id_, dst, m.tid.value});
    net_->send(id_, dst, Envelope::make(MsgType::FnCall, epoch_, m.tid, m.encode()));
  }

  void send_fn_resp(WorkerId dst, const FnRespMsg& m) {
    trace_->messages.push_back({epoch_, int(phase_), MsgType::FnResp, m.replay,
                                id_, dst, m.tid.value});
    net_->send(id_, dst, Envelope::make(MsgType::FnResp, epoch_, m.tid, m.encode()));
  }

  void send_ack(WorkerId dst, const AckMsg& m) {
    trace_->messages.push_back({epoch_, int(phase_), MsgType::AckShare, m.replay,
                                id_, dst, m.tid.value});
    net_->send(id_, dst,
               Envelope::make(MsgType::AckShare, epoch_, m.tid, m.encode()));
  }

  void send_ctrl(WorkerId dst, const CtrlMsg& m) {
    net_->send(id_, dst, Envelope::make(MsgType::Ctrl, m.epoch, Tid{0}, m.encode()));
  }

  template <typename F>
  void ctrl_to_coord(F&& fill) {
    CtrlMsg m;
    m.worker = id_;
    m.generation = generation_;
    fill(m);
    net_->send(id_, coord_,
               Envelope::make(MsgType::Ctrl, m.epoch, Tid{0}, m.encode()));
  }

  // -------------------------------------------------------------------------

  WorkerId id_;
  ClusterConfig cfg_;
  SimNet* net_;
  OperatorRegistry* reg_;
  ReplayableLog* input_;
  ReplayableLog* output_;
  SnapshotStore* snaps_;
  Trace* trace_;
  NodeId coord_;
  std::uint64_t generation_ = 0;

  WorkerState state_;
  Sequencer seq_;
  Offset input_cursor_ = 0;
  std::set<std::uint64_t> dup_suppress_;

  EpochNo epoch_ = 0;
  WorkerPhase phase_ = WorkerPhase::Idle;
  std::map<std::uint64_t, TxnExec> txns_;
  std::vector<std::uint64_t> epoch_txns_;
  RwSetIndex index_;
  std::map<std::uint64_t, std::set<NamespacedKey>> txn_keys_;
  std::map<std::uint64_t, std::map<NamespacedKey, std::optional<Bytes>>> disc_buffers_;
  std::map<std::uint64_t, std::map<NamespacedKey, std::optional<Bytes>>> p4_buffers_;
  std::map<InvKey, std::unique_ptr<Invocation>> running_;
  std::map<InvKey, CachedInvocation> cache_;
  std::map<InvKey, SyncWaitSlot> sync_waits_;
  std::map<InvKey, FnRespMsg> early_responses_;
  std::map<std::pair<std::uint64_t, NamespacedKey>, std::deque<CachedInvocation*>>
      replay_chains_;
  std::map<std::pair<std::uint64_t, NamespacedKey>, std::uint64_t> same_key_seq_;
  std::set<std::uint64_t> global_aborted_;
  std::set<std::uint64_t> global_conflicts_;
  std::set<std::uint64_t> p4_decided_;
  LockTable locks_;
  bool discovery_done_sent_ = false;
  bool p4_started_ = false;
  bool p4_done_sent_ = false;

  std::vector<EpochSizeRecord> replay_sizes_;
  std::size_t replay_idx_ = 0;
  std::vector<std::uint64_t> persist_tokens_;

  friend class Cluster;
};

}  // namespace styx
