#pragma once

#include <coroutine>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "styx/ack_share.hpp"
#include "styx/codec.hpp"
#include "styx/common.hpp"
#include "styx/messages.hpp"
#include "styx/types.hpp"

namespace styx {

using Params = std::vector<Value>;

// Thrown into a caller when a sync callee aborted; uncaught it takes the
// whole transaction down, which is the intended propagation.
class CalleeAborted : public LogicAbort {
 public:
  using LogicAbort::LogicAbort;
};

// Internal: stops a cached re-execution at the point where it diverged from
// the recorded call graph. Never user-visible.
class ReplayCut : public std::exception {
 public:
  const char* what() const noexcept override { return "replay cut"; }
};

// ---------------------------------------------------------------------------
// Coroutine task for user functions
// ---------------------------------------------------------------------------

class FnTask {
 public:
  struct promise_type {
    Value result;
    std::exception_ptr error;

    FnTask get_return_object() {
      return FnTask(std::coroutine_handle<promise_type>::from_promise(*this));
    }
    std::suspend_always initial_suspend() noexcept { return {}; }
    std::suspend_always final_suspend() noexcept { return {}; }
    void return_value(Value v) { result = std::move(v); }
    void unhandled_exception() { error = std::current_exception(); }
  };

  FnTask() = default;
  explicit FnTask(std::coroutine_handle<promise_type> h) : handle_(h) {}
  FnTask(FnTask&& o) noexcept : handle_(std::exchange(o.handle_, nullptr)) {}
  FnTask& operator=(FnTask&& o) noexcept {
    if (this != &o) {
      destroy();
      handle_ = std::exchange(o.handle_, nullptr);
    }
    return *this;
  }
  FnTask(const FnTask&) = delete;
  FnTask& operator=(const FnTask&) = delete;
  ~FnTask() { destroy(); }

  bool valid() const { return handle_ != nullptr; }
  bool done() const { return handle_.done(); }
  void resume() { handle_.resume(); }
  promise_type& promise() { return handle_.promise(); }

 private:
  void destroy() {
    if (handle_) {
      handle_.destroy();
      handle_ = nullptr;
    }
  }
  std::coroutine_handle<promise_type> handle_ = nullptr;
};

class CallContext;
using FnHandler = std::function<FnTask(CallContext&, const Params&)>;

// ---------------------------------------------------------------------------
// Operators & partitioning
// ---------------------------------------------------------------------------

struct OperatorDef {
  std::string name;
  std::uint32_t n_partitions = 1;
  std::map<std::string, FnHandler> functions;

  OperatorDef& fn(const std::string& fname, FnHandler handler) {
    functions[fname] = std::move(handler);
    return *this;
  }
};

class OperatorRegistry {
 public:
  void register_operator(OperatorDef def) {
    if (def.name.empty() || def.n_partitions == 0)
      throw ConfigError("operator needs a name and >= 1 partition");
    if (ops_.count(def.name))
      throw DuplicateOperatorError("operator already registered: " + def.name);
    ops_.emplace(def.name, std::move(def));
  }

  const OperatorDef& get(const std::string& name) const {
    auto it = ops_.find(name);
    if (it == ops_.end()) throw UnknownOperatorError("unknown operator: " + name);
    return it->second;
  }

  const FnHandler& function(const std::string& op, const std::string& fn) const {
    const auto& def = get(op);
    auto it = def.functions.find(fn);
    if (it == def.functions.end())
      throw UnknownFunctionError("unknown function " + fn + " on operator " + op);
    return it->second;
  }

  std::uint32_t partition_of(const NamespacedKey& key) const {
    const auto& def = get(key.op);
    return std::uint32_t(fnv1a64(key.render()) % def.n_partitions);
  }

  // Partition p of any operator lands on worker p mod n_workers.
  WorkerId worker_of(const NamespacedKey& key, std::uint32_t n_workers) const {
    return partition_of(key) % n_workers;
  }

  const std::map<std::string, OperatorDef>& all() const { return ops_; }

 private:
  std::map<std::string, OperatorDef> ops_;
};

inline std::uint64_t invocation_fingerprint(const NamespacedKey& target,
                                            const std::string& fn,
                                            const std::vector<Bytes>& params) {
  std::uint64_t h = fnv1a64(target.render());
  h = fnv1a64(fn, h ^ 0x7f);
  for (const auto& p : params) {
    std::uint64_t len = p.size();
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&len), 8), h);
    h = fnv1a64(p, h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Invocation cache (call-graph caching input)
// ---------------------------------------------------------------------------

struct CachedChild {
  std::uint64_t fingerprint = 0;
  CallMode mode = CallMode::Async;
};

// One record per invocation, kept on its host worker during discovery and
// replayed locally in the lock-based phase.
struct CachedInvocation {
  Tid tid{0};
  CallPath path;
  NamespacedKey target;
  std::string function_name;
  std::vector<Bytes> params;
  CallMode mode = CallMode::Async;
  WorkerId caller_worker = 0;
  CallPath caller_path;
  WorkerId root_worker = 0;
  bool is_root = false;
  bool read_self = false;
  bool wrote_self = false;
  std::vector<CachedChild> children;
  std::uint64_t start_seq = 0;  // discovery start order among same-key records
};

// ---------------------------------------------------------------------------
// Call context
// ---------------------------------------------------------------------------

// Result slot for one in-flight sync call; owned by the worker, polled by
// the awaitable.
struct SyncWaitSlot {
  bool ready = false;
  bool abort = false;
  bool terminated = false;
  std::string abort_msg;
  std::optional<Value> value;
  std::optional<AckShare> returned_share;
  std::vector<InvocationEntry> entries;
  std::coroutine_handle<> continuation;
};

struct PendingAsyncCall {
  std::uint32_t ordinal = 0;
  FunctionInvocation invocation;
};

struct ProducedCall {
  std::uint32_t ordinal = 0;
  std::uint64_t fingerprint = 0;
  CallMode mode = CallMode::Async;
};

// Execution context of one function invocation. Exposes only the entity's
// own state plus call_async / call_sync; everything else is engine state
// maintained by the hosting worker.
class CallContext {
 public:
  // hooks installed by the worker
  std::function<std::optional<Bytes>()> hook_get;
  std::function<void(std::optional<Bytes>)> hook_put;
  std::function<SyncWaitSlot*(FunctionInvocation, std::uint32_t ordinal)> hook_sync_call;
  std::function<void(const std::string&)> hook_validate_operator;
  // Discovery: records the call in the invocation cache. Replay: validates
  // against it; false stops this re-execution at the divergence point.
  std::function<bool(std::uint32_t ordinal, std::uint64_t fingerprint, CallMode)>
      hook_on_call;

  Tid txn{0};
  NamespacedKey self_key;
  CallPath path;
  CallMode invoked_mode = CallMode::Async;
  bool is_root = false;
  bool replay = false;

  AckShare pending_share;
  std::vector<InvocationEntry> absorbed_entries;
  std::vector<PendingAsyncCall> outgoing;
  std::vector<ProducedCall> produced;
  std::uint32_t next_ordinal = 0;
  bool read_self = false;
  bool wrote_self = false;
  // A sync callee's abort takes the transaction down even if the caller
  // catches the exception.
  bool abort_poisoned = false;
  std::string poison_msg;

  // --- user API -----------------------------------------------------------

  Tid tid() const { return txn; }
  const NamespacedKey& self() const { return self_key; }
  const std::string& key() const { return self_key.key; }

  std::optional<Value> get() {
    auto raw = hook_get();
    if (!raw) return std::nullopt;
    return codec::decode(*raw);
  }

  void put(const Value& v) { hook_put(codec::encode(v)); }

  void del() { hook_put(std::nullopt); }

  void call_async(const std::string& op, const std::string& fn,
                  const std::string& entity_key, Params params = {}) {
    hook_validate_operator(op);
    FunctionInvocation inv = build(op, fn, entity_key, params, CallMode::Async);
    std::uint32_t ordinal = next_ordinal++;
    record_produced(ordinal, inv);
    outgoing.push_back({ordinal, std::move(inv)});
  }

  // Awaitable sync call: suspends until the callee's response arrives.
  auto call_sync(const std::string& op, const std::string& fn,
                 const std::string& entity_key, Params params = {}) {
    hook_validate_operator(op);
    FunctionInvocation inv = build(op, fn, entity_key, params, CallMode::Sync);
    std::uint32_t ordinal = next_ordinal++;
    record_produced(ordinal, inv);

    struct Awaitable {
      CallContext* ctx;
      FunctionInvocation inv;
      std::uint32_t ordinal;
      SyncWaitSlot* slot = nullptr;

      bool await_ready() {
        slot = ctx->hook_sync_call(std::move(inv), ordinal);
        return slot->ready;
      }
      void await_suspend(std::coroutine_handle<> h) { slot->continuation = h; }
      Value await_resume() {
        if (slot->returned_share)
          ctx->pending_share = ctx->pending_share.plus(*slot->returned_share);
        for (auto& e : slot->entries) ctx->absorbed_entries.push_back(e);
        if (slot->terminated) throw ReplayCut{};
        if (slot->abort) {
          if (!ctx->abort_poisoned) {
            ctx->abort_poisoned = true;
            ctx->poison_msg = slot->abort_msg;
          }
          throw CalleeAborted(slot->abort_msg);
        }
        return std::move(*slot->value);
      }
    };
    return Awaitable{this, std::move(inv), ordinal};
  }

 private:
  FunctionInvocation build(const std::string& op, const std::string& fn,
                           const std::string& entity_key, const Params& params,
                           CallMode mode) {
    FunctionInvocation inv;
    inv.target = NamespacedKey{op, entity_key};
    inv.function_name = fn;
    inv.params.reserve(params.size());
    for (const auto& p : params) inv.params.push_back(codec::encode(p));
    inv.mode = mode;
    return inv;
  }

  void record_produced(std::uint32_t ordinal, const FunctionInvocation& inv) {
    std::uint64_t fp =
        invocation_fingerprint(inv.target, inv.function_name, inv.params);
    produced.push_back({ordinal, fp, inv.mode});
    if (!hook_on_call(ordinal, fp, inv.mode)) throw ReplayCut{};
  }
};

}  // namespace styx
