#pragma once

#include <map>
#include <optional>
#include <utility>

#include "styx/common.hpp"
#include "styx/types.hpp"

namespace styx {

// Key -> latest value within one snapshot interval; nullopt is a tombstone
// so compaction can drop deleted keys.
using DeltaMap = std::map<NamespacedKey, std::optional<Bytes>>;

// Per-worker committed entity state plus the live delta.
class WorkerState {
 public:
  std::optional<Bytes> get(const NamespacedKey& key) const {
    auto it = committed_.find(key);
    if (it == committed_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const NamespacedKey& key) const {
    return committed_.count(key) > 0;
  }

  void apply_write_buffer(const std::map<NamespacedKey, std::optional<Bytes>>& buffer) {
    for (const auto& [key, value] : buffer) {
      if (value.has_value())
        committed_[key] = *value;
      else
        committed_.erase(key);
      current_delta_[key] = value;
    }
  }

  // Swap the live delta out for the background snapshotter; only this brief
  // exchange runs on the processing path.
  std::pair<std::uint64_t, DeltaMap> seal_delta() {
    DeltaMap sealed;
    sealed.swap(current_delta_);
    return {next_delta_id_++, std::move(sealed)};
  }

  void restore(std::map<NamespacedKey, Bytes> committed, std::uint64_t next_delta_id) {
    committed_ = std::move(committed);
    current_delta_.clear();
    next_delta_id_ = next_delta_id;
  }

  const std::map<NamespacedKey, Bytes>& committed() const { return committed_; }
  const DeltaMap& current_delta() const { return current_delta_; }
  std::uint64_t next_delta_id() const { return next_delta_id_; }

 private:
  std::map<NamespacedKey, Bytes> committed_;
  DeltaMap current_delta_;
  std::uint64_t next_delta_id_ = 0;
};

}  // namespace styx
