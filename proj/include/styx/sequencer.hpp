#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "styx/common.hpp"
#include "styx/crc32.hpp"
#include "styx/store.hpp"
#include "styx/types.hpp"

namespace styx {

struct SequencerState {
  SequencerId sid = 1;
  std::uint64_t lc = 0;
  std::uint64_t epoch_counter = 0;
};

struct EpochSizeRecord {
  EpochNo epoch = 0;
  std::uint32_t size = 0;
};

// Append-only epoch-size log. Record: epoch u64 | size u32, little-endian,
// followed by CRC32 of those 12 bytes. Torn or corrupt tails are dropped.
namespace epoch_size_log {

inline Bytes encode_record(const EpochSizeRecord& r) {
  Bytes rec;
  le::put_u64(rec, r.epoch);
  le::put_u32(rec, r.size);
  Bytes out = rec;
  le::put_u32(out, crc32(rec));
  return out;
}

inline std::vector<EpochSizeRecord> decode(const Bytes& data) {
  std::vector<EpochSizeRecord> out;
  std::size_t pos = 0;
  while (pos + 16 <= data.size()) {
    le::Reader r(std::string_view(data).substr(pos, 16));
    EpochSizeRecord rec;
    rec.epoch = r.u64();
    rec.size = r.u32();
    std::uint32_t crc = r.u32();
    if (crc32(std::string_view(data).substr(pos, 12)) != crc) break;
    out.push_back(rec);
    pos += 16;
  }
  return out;
}

}  // namespace epoch_size_log

// Per-worker coordination-free TID assignment. Epoch formation itself lives
// in the worker loop; this owns the counters and the durable size log.
class Sequencer {
 public:
  Sequencer(SequencerId sid, std::uint64_t n_seq, DurableStore* store,
            std::string log_name)
      : n_seq_(n_seq), store_(store), log_name_(std::move(log_name)) {
    state_.sid = sid;
  }

  const SequencerState& state() const { return state_; }

  void restore(const SequencerState& s) { state_ = s; }

  Tid assign_tid() {
    Tid t = make_tid(state_.sid, state_.lc, n_seq_);
    state_.lc += 1;
    return t;
  }

  // Durable before the epoch executes.
  void log_epoch_size(EpochNo epoch, std::uint32_t size) {
    store_->append(log_name_, epoch_size_log::encode_record({epoch, size}));
    state_.epoch_counter = epoch;
  }

  // Replayed epochs are already in the log; just advance the counter.
  void note_epoch(EpochNo epoch) { state_.epoch_counter = epoch; }

  // A busy sequencer never moves backwards; already-issued TIDs keep.
  void rebalance(std::uint64_t max_lc) {
    state_.lc = std::max(state_.lc, max_lc);
  }

  // Sizes of every epoch logged after `after_epoch`, in order. Raises on a
  // gap: the log must be contiguous from the snapshot point forward.
  std::vector<EpochSizeRecord> replay_sizes(EpochNo after_epoch) const {
    auto data = store_->get(log_name_);
    std::vector<EpochSizeRecord> out;
    if (!data) return out;
    EpochNo expect = after_epoch + 1;
    for (const auto& rec : epoch_size_log::decode(*data)) {
      if (rec.epoch <= after_epoch) continue;
      if (rec.epoch != expect)
        throw LogGapError("epoch size log gap: expected epoch " +
                          std::to_string(expect) + ", found " +
                          std::to_string(rec.epoch));
      out.push_back(rec);
      expect += 1;
    }
    return out;
  }

 private:
  SequencerState state_;
  std::uint64_t n_seq_;
  DurableStore* store_;
  std::string log_name_;
};

}  // namespace styx
