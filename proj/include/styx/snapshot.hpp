#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "styx/common.hpp"
#include "styx/crc32.hpp"
#include "styx/state_store.hpp"
#include "styx/store.hpp"
#include "styx/types.hpp"

namespace styx {

struct SnapshotMeta {
  std::uint64_t snapshot_id = 0;
  std::uint64_t worker_id = 0;
  std::map<std::uint64_t, Offset> input_offsets;
  std::map<std::uint64_t, Offset> output_offsets;
  std::uint64_t epoch_count = 0;
  SequencerId sid = 1;
  std::uint64_t lc = 0;
};

struct SnapshotManifest {
  SnapshotMeta meta;
  DeltaMap payload;  // delta for incremental files, full state for compacted
};

// Binary snapshot payload:
//   magic "STYXSNAP" | version u16 | worker_id u64 | snapshot_id u64
//   | n_in u64 | (partition u64, offset u64)* | n_out u64 | (...)*
//   | epoch_count u64 | sid u64 | lc u64
//   | entry_count u64 | (key_len u32, key, flag u8 [0=value,1=tombstone],
//                        val_len u32, val)*
//   | crc32 u32 over all preceding bytes
namespace snapshot_codec {

inline constexpr std::string_view kMagic = "STYXSNAP";
inline constexpr std::uint16_t kVersion = 1;

inline Bytes encode(const SnapshotManifest& m) {
  Bytes out;
  out += kMagic;
  le::put_u16(out, kVersion);
  le::put_u64(out, m.meta.worker_id);
  le::put_u64(out, m.meta.snapshot_id);
  le::put_u64(out, m.meta.input_offsets.size());
  for (const auto& [p, o] : m.meta.input_offsets) {
    le::put_u64(out, p);
    le::put_u64(out, o);
  }
  le::put_u64(out, m.meta.output_offsets.size());
  for (const auto& [p, o] : m.meta.output_offsets) {
    le::put_u64(out, p);
    le::put_u64(out, o);
  }
  le::put_u64(out, m.meta.epoch_count);
  le::put_u64(out, m.meta.sid);
  le::put_u64(out, m.meta.lc);
  le::put_u64(out, m.payload.size());
  for (const auto& [key, value] : m.payload) {
    std::string k = key.render();
    le::put_u32(out, std::uint32_t(k.size()));
    out += k;
    out.push_back(value.has_value() ? char(0) : char(1));
    le::put_u32(out, std::uint32_t(value ? value->size() : 0));
    if (value) out += *value;
  }
  le::put_u32(out, crc32(out));
  return out;
}

inline SnapshotManifest decode(const Bytes& data) {
  if (data.size() < kMagic.size() + 4)
    throw StorageIoError("snapshot: truncated");
  {
    le::Reader tail(std::string_view(data).substr(data.size() - 4));
    if (tail.u32() != crc32(std::string_view(data).substr(0, data.size() - 4)))
      throw StorageIoError("snapshot: crc mismatch");
  }
  le::Reader r(std::string_view(data).substr(0, data.size() - 4));
  if (r.bytes(kMagic.size()) != kMagic)
    throw StorageIoError("snapshot: bad magic");
  if (r.u16() != kVersion) throw StorageIoError("snapshot: unknown version");
  SnapshotManifest m;
  m.meta.worker_id = r.u64();
  m.meta.snapshot_id = r.u64();
  for (std::uint64_t n = r.u64(); n > 0; --n) {
    auto p = r.u64();
    m.meta.input_offsets[p] = r.u64();
  }
  for (std::uint64_t n = r.u64(); n > 0; --n) {
    auto p = r.u64();
    m.meta.output_offsets[p] = r.u64();
  }
  m.meta.epoch_count = r.u64();
  m.meta.sid = r.u64();
  m.meta.lc = r.u64();
  for (std::uint64_t n = r.u64(); n > 0; --n) {
    auto klen = r.u32();
    NamespacedKey key = parse_namespaced_key(r.bytes(klen));
    char flag = r.bytes(1)[0];
    auto vlen = r.u32();
    Bytes value = r.bytes(vlen);
    if (flag == 0)
      m.payload[key] = value;
    else
      m.payload[key] = std::nullopt;
  }
  if (!r.exhausted()) throw StorageIoError("snapshot: trailing bytes");
  return m;
}

}  // namespace snapshot_codec

// Left-fold map-merge: later delta wins per key, tombstones erase.
inline std::map<NamespacedKey, Bytes> compact(
    std::map<NamespacedKey, Bytes> base,
    const std::vector<std::pair<std::uint64_t, DeltaMap>>& deltas) {
  for (std::size_t i = 1; i < deltas.size(); ++i)
    if (deltas[i].first != deltas[i - 1].first + 1)
      throw DeltaGapError("non-contiguous delta ids: " +
                          std::to_string(deltas[i - 1].first) + " -> " +
                          std::to_string(deltas[i].first));
  for (const auto& [id, delta] : deltas) {
    for (const auto& [key, value] : delta) {
      if (value.has_value())
        base[key] = *value;
      else
        base.erase(key);
    }
  }
  return base;
}

struct RecoveredState {
  SnapshotMeta meta;
  std::map<NamespacedKey, Bytes> state;
  std::uint64_t next_snapshot_id = 0;
};

// Layout under the durable store:
//   worker_<w>/snap_<id>.bin      incremental delta payloads
//   worker_<w>/compact_<id>.bin   full state folded through <id>
//   worker_<w>/MANIFEST           completed ids ("snap N" / "compact N" lines)
//   worker_<w>/epoch_sizes.log
class SnapshotStore {
 public:
  explicit SnapshotStore(DurableStore* store) : store_(store) {}

  DurableStore* durable() { return store_; }

  static std::string worker_dir(WorkerId w) {
    return "worker_" + std::to_string(w);
  }

  static std::string epoch_log_name(WorkerId w) {
    return worker_dir(w) + "/epoch_sizes.log";
  }

  // Payload first, then the MANIFEST entry: a snapshot is visible only once
  // fully durable.
  void persist(WorkerId w, const SnapshotManifest& m) {
    store_->put(snap_name(w, m.meta.snapshot_id), snapshot_codec::encode(m));
    auto mf = read_manifest(w);
    mf.snaps.insert(m.meta.snapshot_id);
    write_manifest(w, mf);
  }

  void persist_compacted(WorkerId w, const SnapshotManifest& full) {
    store_->put(compact_name(w, full.meta.snapshot_id),
                snapshot_codec::encode(full));
    auto mf = read_manifest(w);
    mf.compacts.insert(full.meta.snapshot_id);
    // Delta files at or below the compacted base are subsumed.
    for (auto it = mf.snaps.begin(); it != mf.snaps.end();) {
      if (*it <= full.meta.snapshot_id) {
        store_->remove(snap_name(w, *it));
        it = mf.snaps.erase(it);
      } else {
        ++it;
      }
    }
    for (auto it = mf.compacts.begin(); it != mf.compacts.end();) {
      if (*it < full.meta.snapshot_id) {
        store_->remove(compact_name(w, *it));
        it = mf.compacts.erase(it);
      } else {
        ++it;
      }
    }
    write_manifest(w, mf);
  }

  std::optional<std::uint64_t> latest_complete(WorkerId w) const {
    auto mf = read_manifest(w);
    std::optional<std::uint64_t> best;
    if (!mf.snaps.empty()) best = *mf.snaps.rbegin();
    if (!mf.compacts.empty())
      best = best ? std::max(*best, *mf.compacts.rbegin()) : *mf.compacts.rbegin();
    return best;
  }

  // Divergent-timeline snapshots above the agreed id must not survive a
  // recovery; drop them.
  void truncate_above(WorkerId w, std::uint64_t id) {
    auto mf = read_manifest(w);
    for (auto it = mf.snaps.upper_bound(id); it != mf.snaps.end();) {
      store_->remove(snap_name(w, *it));
      it = mf.snaps.erase(it);
    }
    for (auto it = mf.compacts.upper_bound(id); it != mf.compacts.end();) {
      store_->remove(compact_name(w, *it));
      it = mf.compacts.erase(it);
    }
    write_manifest(w, mf);
  }

  // Cold recovery: every stored snapshot is from a timeline being abandoned.
  void truncate_all(WorkerId w) {
    auto mf = read_manifest(w);
    for (auto id : mf.snaps) store_->remove(snap_name(w, id));
    for (auto id : mf.compacts) store_->remove(compact_name(w, id));
    write_manifest(w, {});
  }

  // Rebuild worker state as of snapshot `target` per the recovery procedure:
  // newest compacted base at or below target, then the remaining deltas.
  std::optional<RecoveredState> recover(WorkerId w, std::uint64_t target) const {
    auto mf = read_manifest(w);
    if (!mf.snaps.count(target) && !mf.compacts.count(target)) return std::nullopt;

    RecoveredState out;
    std::map<NamespacedKey, Bytes> state;
    std::optional<std::uint64_t> base;
    for (auto it = mf.compacts.begin(); it != mf.compacts.end(); ++it)
      if (*it <= target) base = *it;

    std::optional<SnapshotMeta> meta;
    if (base) {
      auto m = load(compact_name(w, *base));
      state = compact({}, {{*base, m.payload}});
      meta = m.meta;
    }
    std::vector<std::pair<std::uint64_t, DeltaMap>> deltas;
    for (auto id : mf.snaps) {
      if (base && id <= *base) continue;
      if (id > target) break;
      auto m = load(snap_name(w, id));
      deltas.emplace_back(id, m.payload);
      meta = m.meta;
    }
    out.state = compact(std::move(state), deltas);
    if (!meta) return std::nullopt;
    out.meta = *meta;
    out.next_snapshot_id = target + 1;
    return out;
  }

  bool has_any(WorkerId w) const {
    auto mf = read_manifest(w);
    return !mf.snaps.empty() || !mf.compacts.empty();
  }

  // Completed incremental ids above the compacted base (compaction input).
  std::vector<std::uint64_t> uncompacted_ids(WorkerId w) const {
    auto mf = read_manifest(w);
    return std::vector<std::uint64_t>(mf.snaps.begin(), mf.snaps.end());
  }

  std::optional<std::uint64_t> compacted_base(WorkerId w) const {
    auto mf = read_manifest(w);
    if (mf.compacts.empty()) return std::nullopt;
    return *mf.compacts.rbegin();
  }

  SnapshotManifest load_delta(WorkerId w, std::uint64_t id) const {
    return load(snap_name(w, id));
  }

  SnapshotManifest load_compacted(WorkerId w, std::uint64_t id) const {
    return load(compact_name(w, id));
  }

 private:
  struct ManifestFile {
    std::set<std::uint64_t> snaps;
    std::set<std::uint64_t> compacts;
  };

  static std::string snap_name(WorkerId w, std::uint64_t id) {
    return worker_dir(w) + "/snap_" + std::to_string(id) + ".bin";
  }

  static std::string compact_name(WorkerId w, std::uint64_t id) {
    return worker_dir(w) + "/compact_" + std::to_string(id) + ".bin";
  }

  static std::string manifest_name(WorkerId w) {
    return worker_dir(w) + "/MANIFEST";
  }

  ManifestFile read_manifest(WorkerId w) const {
    ManifestFile mf;
    auto data = store_->get(manifest_name(w));
    if (!data) return mf;
    std::istringstream in(*data);
    std::string kind;
    std::uint64_t id;
    while (in >> kind >> id) {
      if (kind == "snap") mf.snaps.insert(id);
      if (kind == "compact") mf.compacts.insert(id);
    }
    return mf;
  }

  void write_manifest(WorkerId w, const ManifestFile& mf) {
    std::ostringstream out;
    for (auto id : mf.compacts) out << "compact " << id << "\n";
    for (auto id : mf.snaps) out << "snap " << id << "\n";
    store_->put(manifest_name(w), out.str());
  }

  SnapshotManifest load(const std::string& name) const {
    auto data = store_->get(name);
    if (!data) throw StorageIoError("missing snapshot object: " + name);
    return snapshot_codec::decode(*data);
  }

  DurableStore* store_;
};

}  // namespace styx
