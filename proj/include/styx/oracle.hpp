#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "styx/messages.hpp"
#include "styx/runtime.hpp"
#include "styx/trace.hpp"

namespace styx {

struct OracleVerdict {
  bool ok = true;
  std::string detail;

  static OracleVerdict fail(std::string why) { return {false, std::move(why)}; }
};

// ---------------------------------------------------------------------------
// Reference interpreter: single-threaded transaction execution over a flat
// map. Shares nothing with the cluster pipeline beyond the user functions —
// no epochs, shares, conflicts or caches.
// ---------------------------------------------------------------------------

class ReferenceInterpreter {
 public:
  explicit ReferenceInterpreter(const OperatorRegistry* reg) : reg_(reg) {}

  struct Outcome {
    TxnStatus status = TxnStatus::Committed;
    Value result;
    std::string abort_msg;
  };

  Outcome execute(const ClientRequest& req,
                  std::map<NamespacedKey, Bytes>& state) {
    buffer_.clear();
    pending_.clear();
    slots_.clear();
    poisoned_ = false;
    poison_msg_.clear();

    Outcome out;
    try {
      out.result = run_invocation(req.target, req.function_name, req.params, state);
      while (!pending_.empty()) {
        auto inv = pending_.front();
        pending_.pop_front();
        run_invocation(inv.target, inv.function_name, inv.params, state);
      }
      if (poisoned_) throw LogicAbort(poison_msg_);
    } catch (const std::exception& e) {
      out.status = TxnStatus::AbortedLogic;
      out.abort_msg = poisoned_ ? poison_msg_ : e.what();
      return out;
    }

    for (const auto& [k, v] : buffer_) {
      if (v.has_value())
        state[k] = *v;
      else
        state.erase(k);
    }
    out.status = TxnStatus::Committed;
    return out;
  }

 private:
  Value run_invocation(const NamespacedKey& target, const std::string& fn,
                       const std::vector<Bytes>& params,
                       std::map<NamespacedKey, Bytes>& state) {
    auto ctx = std::make_unique<CallContext>();
    CallContext* cp = ctx.get();
    cp->self_key = target;
    cp->pending_share = AckShare::whole();

    cp->hook_get = [this, cp, &state]() -> std::optional<Bytes> {
      auto it = buffer_.find(cp->self_key);
      if (it != buffer_.end()) return it->second;
      auto st = state.find(cp->self_key);
      if (st == state.end()) return std::nullopt;
      return st->second;
    };
    cp->hook_put = [this, cp](std::optional<Bytes> v) {
      buffer_[cp->self_key] = std::move(v);
    };
    cp->hook_validate_operator = [this](const std::string& op) { reg_->get(op); };
    cp->hook_on_call = [](std::uint32_t, std::uint64_t, CallMode) { return true; };
    cp->hook_sync_call = [this, &state](FunctionInvocation fi,
                                        std::uint32_t) -> SyncWaitSlot* {
      slots_.push_back(std::make_unique<SyncWaitSlot>());
      SyncWaitSlot* slot = slots_.back().get();
      slot->ready = true;
      try {
        slot->value = run_invocation(fi.target, fi.function_name, fi.params, state);
      } catch (const std::exception& e) {
        slot->abort = true;
        slot->abort_msg = e.what();
        if (!poisoned_) {
          poisoned_ = true;
          poison_msg_ = e.what();
        }
      }
      return slot;
    };

    const FnHandler& handler = reg_->function(target.op, fn);
    Params decoded;
    for (const auto& p : params) decoded.push_back(codec::decode(p));

    FnTask task = handler(*cp, decoded);
    task.resume();
    if (!task.done())
      throw TraceCorruptError("reference interpreter: function suspended");
    if (task.promise().error) std::rethrow_exception(task.promise().error);
    if (cp->abort_poisoned && !poisoned_) {
      poisoned_ = true;
      poison_msg_ = cp->poison_msg;
    }

    for (const auto& pc : cp->outgoing) pending_.push_back(pc.invocation);
    return task.promise().result;
  }

  const OperatorRegistry* reg_;
  std::map<NamespacedKey, std::optional<Bytes>> buffer_;
  std::deque<FunctionInvocation> pending_;
  std::vector<std::unique_ptr<SyncWaitSlot>> slots_;
  bool poisoned_ = false;
  std::string poison_msg_;
};

// ---------------------------------------------------------------------------
// Serializability oracle: replay resolved transactions serially in commit
// order — discovery aborts, then lock-free commits, then lock-based
// resolutions, by TID within each group — and demand the identical final
// state and identical verdicts.
// ---------------------------------------------------------------------------

inline OracleVerdict verify_serializable(
    const Trace& trace, const OperatorRegistry& reg,
    const std::map<NamespacedKey, Bytes>& final_state) {
  std::map<std::uint64_t, Trace::Resolution> by_tid;
  for (const auto& r : trace.resolutions)
    if (!by_tid.count(r.tid)) by_tid[r.tid] = r;

  std::vector<const Trace::Resolution*> order;
  order.reserve(by_tid.size());
  for (const auto& [t, r] : by_tid) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->epoch != b->epoch) return a->epoch < b->epoch;
    if (a->phase != b->phase) return int(a->phase) < int(b->phase);
    return a->tid < b->tid;
  });

  ReferenceInterpreter ref(&reg);
  std::map<NamespacedKey, Bytes> state;
  for (const auto* r : order) {
    auto req_it = trace.tid_request_bytes.find(r->tid);
    if (req_it == trace.tid_request_bytes.end())
      return OracleVerdict::fail("trace missing request for tid " +
                                 std::to_string(r->tid));
    auto outcome = ref.execute(ClientRequest::decode(req_it->second), state);
    if (outcome.status != r->verdict)
      return OracleVerdict::fail(
          "verdict mismatch at tid " + std::to_string(r->tid) + ": cluster " +
          to_string(r->verdict) + ", serial replay " + to_string(outcome.status));
  }

  if (state != final_state) {
    std::ostringstream why;
    why << "final state differs: serial replay holds " << state.size()
        << " keys, cluster holds " << final_state.size();
    for (const auto& [k, v] : state) {
      auto it = final_state.find(k);
      if (it == final_state.end()) {
        why << "; missing " << k.render();
        break;
      }
      if (it->second != v) {
        why << "; first divergence at " << k.render();
        break;
      }
    }
    return OracleVerdict::fail(why.str());
  }
  return {};
}

// ---------------------------------------------------------------------------
// Exactly-once oracle over the deduplicated output stream.
// ---------------------------------------------------------------------------

inline OracleVerdict verify_exactly_once(const std::vector<OutputRecord>& deduped,
                                         const std::vector<Bytes>& submitted_ids) {
  std::map<Bytes, int> replies;
  std::set<std::uint64_t> tids;
  for (const auto& r : deduped) {
    replies[r.request_id]++;
    if (!tids.insert(r.tid.value).second)
      return OracleVerdict::fail("tid " + std::to_string(r.tid.value) +
                                 " appears twice after dedup");
  }
  for (const auto& id : submitted_ids) {
    auto it = replies.find(id);
    if (it == replies.end())
      return OracleVerdict::fail("no reply for request " + std::string(id));
    if (it->second != 1)
      return OracleVerdict::fail("request " + std::string(id) + " replied " +
                                 std::to_string(it->second) + " times");
  }
  if (replies.size() != submitted_ids.size())
    return OracleVerdict::fail("output contains replies for unknown requests");
  return {};
}

}  // namespace styx
