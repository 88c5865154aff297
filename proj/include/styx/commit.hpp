#pragma once

#include <map>
#include <set>
#include <vector>

#include "styx/common.hpp"
#include "styx/types.hpp"

namespace styx {

// Per-worker map key -> TIDs that read/wrote it in the current epoch.
class RwSetIndex {
 public:
  struct Entry {
    std::set<std::uint64_t> readers;
    std::set<std::uint64_t> writers;
  };

  void add_read(const NamespacedKey& key, Tid tid) {
    entries_[key].readers.insert(tid.value);
  }

  void add_write(const NamespacedKey& key, Tid tid) {
    entries_[key].writers.insert(tid.value);
  }

  // Logic-aborted transactions contribute no conflicts.
  void remove_txn(Tid tid, const std::set<NamespacedKey>& keys) {
    for (const auto& k : keys) {
      auto it = entries_.find(k);
      if (it == entries_.end()) continue;
      it->second.readers.erase(tid.value);
      it->second.writers.erase(tid.value);
      if (it->second.readers.empty() && it->second.writers.empty())
        entries_.erase(it);
    }
  }

  void clear() { entries_.clear(); }

  const std::map<NamespacedKey, Entry>& entries() const { return entries_; }

  // Directional conflict rule: T is conflicted iff some T' with a lower TID
  // writes a key T reads or writes. Read-read overlap never conflicts, and
  // the lowest writer of a key is only deferred by writers below it.
  std::set<std::uint64_t> local_conflicts() const {
    std::set<std::uint64_t> out;
    for (const auto& [key, entry] : entries_) {
      if (entry.writers.empty()) continue;
      std::uint64_t lowest_writer = *entry.writers.begin();
      for (auto t : entry.readers)
        if (t > lowest_writer) out.insert(t);
      for (auto t : entry.writers)
        if (t > lowest_writer) out.insert(t);
    }
    return out;
  }

 private:
  std::map<NamespacedKey, Entry> entries_;
};

// Phase-4 lock table: per-key TID-ordered waiter queues, block-granted.
// All waiters are registered up front, so grants follow global TID order
// per key and the wait-for relation stays acyclic.
class LockTable {
 public:
  void register_txn(Tid tid, const std::set<NamespacedKey>& keys) {
    if (keys.empty()) return;
    wanted_[tid.value] = keys;
    for (const auto& k : keys) waiters_[k].insert(tid.value);
  }

  // Grant rule: every key unheld and this TID is its lowest waiter.
  std::vector<Tid> grantable() const {
    std::vector<Tid> out;
    for (const auto& [t, keys] : wanted_) {
      if (granted_.count(t)) continue;
      bool ok = true;
      for (const auto& k : keys) {
        if (held_.count(k) || *waiters_.at(k).begin() != t) {
          ok = false;
          break;
        }
      }
      if (ok) out.push_back(Tid{t});
    }
    return out;
  }

  void grant(Tid tid) {
    granted_.insert(tid.value);
    for (const auto& k : wanted_.at(tid.value)) held_[k] = tid.value;
  }

  void release(Tid tid) {
    auto it = wanted_.find(tid.value);
    if (it == wanted_.end()) return;
    for (const auto& k : it->second) {
      held_.erase(k);
      auto w = waiters_.find(k);
      if (w != waiters_.end()) {
        w->second.erase(tid.value);
        if (w->second.empty()) waiters_.erase(w);
      }
    }
    granted_.erase(tid.value);
    wanted_.erase(it);
  }

  bool idle() const { return wanted_.empty(); }

  void clear() {
    wanted_.clear();
    waiters_.clear();
    held_.clear();
    granted_.clear();
  }

 private:
  std::map<std::uint64_t, std::set<NamespacedKey>> wanted_;
  std::map<NamespacedKey, std::set<std::uint64_t>> waiters_;
  std::map<NamespacedKey, std::uint64_t> held_;
  std::set<std::uint64_t> granted_;
};

}  // namespace styx
