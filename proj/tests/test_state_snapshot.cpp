#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "styx/snapshot.hpp"
#include "styx/state_store.hpp"
#include "styx/store.hpp"

using namespace styx;

namespace {
NamespacedKey nk(const std::string& k) { return NamespacedKey{"Op", k}; }
}  // namespace

TEST_CASE("worker state applies buffers to committed and delta") {
  WorkerState st;
  st.apply_write_buffer({{nk("k"), Bytes("7")}});
  CHECK(st.get(nk("k")) == Bytes("7"));
  CHECK(st.current_delta().at(nk("k")) == Bytes("7"));
  CHECK(!st.get(nk("unwritten")).has_value());

  // overwrite keeps only the last value in the delta
  st.apply_write_buffer({{nk("k"), Bytes("9")}});
  CHECK(st.current_delta().at(nk("k")) == Bytes("9"));

  // empty buffer is a no-op
  auto before = st.committed();
  st.apply_write_buffer({});
  CHECK(st.committed() == before);

  // deletion becomes a tombstone in the delta
  st.apply_write_buffer({{nk("k"), std::nullopt}});
  CHECK(!st.get(nk("k")).has_value());
  CHECK(!st.current_delta().at(nk("k")).has_value());
}

TEST_CASE("sealing swaps out the delta") {
  WorkerState st;
  st.apply_write_buffer({{nk("k"), Bytes("7")}});
  auto [id0, sealed] = st.seal_delta();
  CHECK(id0 == 0);
  CHECK(sealed.at(nk("k")) == Bytes("7"));
  CHECK(st.current_delta().empty());

  auto [id1, empty_seal] = st.seal_delta();
  CHECK(id1 == 1);
  CHECK(empty_seal.empty());

  // writes after a seal land in the new delta only
  st.apply_write_buffer({{nk("x"), Bytes("1")}});
  CHECK(sealed.count(nk("x")) == 0);
  CHECK(st.current_delta().count(nk("x")) == 1);
}

TEST_CASE("committed state reconstructs from base plus deltas") {
  std::mt19937_64 rng(123);
  WorkerState st;
  std::vector<std::pair<std::uint64_t, DeltaMap>> sealed;
  std::map<NamespacedKey, Bytes> base;

  for (int round = 0; round < 30; ++round) {
    std::map<NamespacedKey, std::optional<Bytes>> buffer;
    for (int i = 0; i < 10; ++i) {
      auto key = nk("k" + std::to_string(rng() % 40));
      if (rng() % 5 == 0)
        buffer[key] = std::nullopt;
      else
        buffer[key] = Bytes(std::to_string(rng() % 1000));
    }
    st.apply_write_buffer(buffer);
    if (rng() % 3 == 0) sealed.push_back(st.seal_delta());
  }
  auto current = st.current_delta();
  sealed.emplace_back(sealed.size(), current);
  CHECK(compact(base, sealed) == st.committed());
}

TEST_CASE("compaction folds deltas left to right with tombstones") {
  std::map<NamespacedKey, Bytes> base{{nk("a"), Bytes("1")}};
  auto out = compact(base, {{0, {{nk("a"), Bytes("2")}}},
                            {1, {{nk("b"), Bytes("3")}}}});
  CHECK(out == std::map<NamespacedKey, Bytes>{{nk("a"), Bytes("2")},
                                              {nk("b"), Bytes("3")}});

  CHECK(compact(base, {}) == base);

  auto tomb = compact(base, {{0, {{nk("a"), std::nullopt}}}});
  CHECK(tomb.empty());

  CHECK_THROWS_AS(compact(base, {{0, {}}, {2, {}}}), DeltaGapError);
}

TEST_CASE("random delta sequences match the fold-merge oracle") {
  std::mt19937_64 rng(321);
  for (int round = 0; round < 40; ++round) {
    std::map<NamespacedKey, Bytes> base;
    for (int i = 0; i < int(rng() % 50); ++i)
      base[nk("k" + std::to_string(rng() % 200))] = Bytes(std::to_string(rng()));

    std::vector<std::pair<std::uint64_t, DeltaMap>> deltas;
    std::size_t n = rng() % 20;
    for (std::size_t d = 0; d < n; ++d) {
      DeltaMap dm;
      for (int i = 0; i < int(rng() % 30); ++i) {
        auto key = nk("k" + std::to_string(rng() % 200));
        if (rng() % 4 == 0)
          dm[key] = std::nullopt;
        else
          dm[key] = Bytes(std::to_string(rng()));
      }
      deltas.emplace_back(d, std::move(dm));
    }

    // independent oracle: sequential per-delta application
    auto expected = base;
    for (const auto& [id, dm] : deltas)
      for (const auto& [k, v] : dm) {
        if (v)
          expected[k] = *v;
        else
          expected.erase(k);
      }
    CHECK(compact(base, deltas) == expected);
  }
}

TEST_CASE("snapshot payload round-trips bit-exactly") {
  SnapshotManifest m;
  m.meta.snapshot_id = 9;
  m.meta.worker_id = 2;
  m.meta.input_offsets = {{0, 42}, {1, 17}};
  m.meta.output_offsets = {{0, 7}};
  m.meta.epoch_count = 12;
  m.meta.sid = 3;
  m.meta.lc = 55;
  m.payload[nk("k")] = Bytes("7");
  m.payload[nk("gone")] = std::nullopt;

  Bytes b1 = snapshot_codec::encode(m);
  auto decoded = snapshot_codec::decode(b1);
  CHECK(decoded.meta.snapshot_id == 9);
  CHECK(decoded.meta.input_offsets == m.meta.input_offsets);
  CHECK(decoded.payload == m.payload);
  CHECK(snapshot_codec::encode(decoded) == b1);

  CHECK(Bytes(b1.substr(0, 8)) == "STYXSNAP");

  Bytes corrupt = b1;
  corrupt[10] ^= 1;
  CHECK_THROWS_AS(snapshot_codec::decode(corrupt), StorageIoError);
  CHECK_THROWS_AS(snapshot_codec::decode(Bytes("short")), StorageIoError);
}

TEST_CASE("random snapshots round-trip through the binary format") {
  std::mt19937_64 rng(555);
  for (int round = 0; round < 50; ++round) {
    SnapshotManifest m;
    m.meta.snapshot_id = rng();
    m.meta.worker_id = rng() % 8;
    m.meta.epoch_count = rng();
    m.meta.sid = 1 + rng() % 8;
    m.meta.lc = rng();
    for (int i = 0; i < int(rng() % 6); ++i) m.meta.input_offsets[i] = rng();
    for (int i = 0; i < int(rng() % 6); ++i) m.meta.output_offsets[i] = rng();
    for (int i = 0; i < int(rng() % 100); ++i) {
      auto key = nk("k" + std::to_string(rng() % 1000));
      if (rng() % 6 == 0)
        m.payload[key] = std::nullopt;
      else
        m.payload[key] = Bytes(std::to_string(rng()));
    }
    Bytes b = snapshot_codec::encode(m);
    auto d = snapshot_codec::decode(b);
    CHECK(d.payload == m.payload);
    CHECK(snapshot_codec::encode(d) == b);
  }
}

TEST_CASE("snapshot store persists, recovers, compacts and truncates") {
  MemStore durable;
  SnapshotStore store(&durable);

  auto manifest = [&](std::uint64_t id, const std::string& key,
                      std::optional<Bytes> val) {
    SnapshotManifest m;
    m.meta.snapshot_id = id;
    m.meta.worker_id = 0;
    m.meta.input_offsets[0] = id * 10;
    m.meta.output_offsets[0] = id * 5;
    m.meta.epoch_count = id * 2;
    m.meta.sid = 1;
    m.meta.lc = id * 7;
    m.payload[nk(key)] = std::move(val);
    return m;
  };

  CHECK(!store.latest_complete(0).has_value());
  CHECK(!store.recover(0, 0).has_value());

  store.persist(0, manifest(0, "a", Bytes("1")));
  store.persist(0, manifest(1, "a", Bytes("2")));
  store.persist(0, manifest(2, "b", Bytes("3")));
  CHECK(store.latest_complete(0) == 2);

  auto rec = store.recover(0, 2);
  REQUIRE(rec.has_value());
  CHECK(rec->state == std::map<NamespacedKey, Bytes>{{nk("a"), Bytes("2")},
                                                     {nk("b"), Bytes("3")}});
  CHECK(rec->meta.lc == 14);
  CHECK(rec->meta.input_offsets.at(0) == 20);

  // rollback to an older id sees only the prefix
  auto rec1 = store.recover(0, 1);
  REQUIRE(rec1.has_value());
  CHECK(rec1->state == std::map<NamespacedKey, Bytes>{{nk("a"), Bytes("2")}});

  // compaction through id 1 subsumes the early deltas
  SnapshotManifest full;
  full.meta = manifest(1, "a", Bytes("2")).meta;
  full.payload[nk("a")] = Bytes("2");
  store.persist_compacted(0, full);
  CHECK(store.uncompacted_ids(0) == std::vector<std::uint64_t>{2});
  auto rec2 = store.recover(0, 2);
  REQUIRE(rec2.has_value());
  CHECK(rec2->state == std::map<NamespacedKey, Bytes>{{nk("a"), Bytes("2")},
                                                      {nk("b"), Bytes("3")}});

  store.truncate_above(0, 1);
  CHECK(store.latest_complete(0) == 1);
  CHECK(!store.recover(0, 2).has_value());

  store.truncate_all(0);
  CHECK(!store.latest_complete(0).has_value());
}

TEST_CASE("file store puts are atomically visible and appends accumulate") {
  auto dir = std::filesystem::temp_directory_path() / "styx_test_store";
  std::filesystem::remove_all(dir);
  {
    FileStore fs(dir);
    CHECK(!fs.get("x").has_value());
    fs.put("a/b", Bytes("hello"));
    CHECK(fs.get("a/b") == Bytes("hello"));
    fs.put("a/b", Bytes("world"));
    CHECK(fs.get("a/b") == Bytes("world"));
    fs.append("log", Bytes("12"));
    fs.append("log", Bytes("34"));
    CHECK(fs.get("log") == Bytes("1234"));
    CHECK(fs.list("a/") == std::vector<std::string>{"a/b"});
  }
  {
    FileStore fs(dir);  // reopen: contents survive
    CHECK(fs.get("a/b") == Bytes("world"));
    CHECK(fs.get("log") == Bytes("1234"));
    fs.remove("a/b");
    CHECK(!fs.get("a/b").has_value());
  }
  std::filesystem::remove_all(dir);
}
