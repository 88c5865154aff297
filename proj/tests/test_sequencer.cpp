#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "styx/sequencer.hpp"

using namespace styx;

TEST_CASE("tid assignment follows the per-sequencer progression") {
  MemStore store;
  Sequencer s1(1, 3, &store, "w0/log");
  CHECK(s1.assign_tid().value == 1);
  CHECK(s1.assign_tid().value == 4);
  CHECK(s1.assign_tid().value == 7);

  Sequencer s2(2, 3, &store, "w1/log");
  s2.assign_tid();
  CHECK(s2.assign_tid().value == 5);

  Sequencer serial(1, 1, &store, "w/log");
  for (int i = 0; i < 4; ++i) serial.assign_tid();
  CHECK(serial.assign_tid().value == 5);
}

TEST_CASE("parallel sequencers never collide") {
  MemStore store;
  std::mt19937_64 rng(77);
  for (int round = 0; round < 10; ++round) {
    std::uint64_t n = 1 + rng() % 16;
    std::vector<std::unique_ptr<Sequencer>> seqs;
    for (std::uint64_t i = 0; i < n; ++i)
      seqs.push_back(std::make_unique<Sequencer>(i + 1, n, &store,
                                                 "w" + std::to_string(i)));
    std::set<std::uint64_t> tids;
    for (int i = 0; i < 2000; ++i) {
      auto& s = *seqs[rng() % n];
      CHECK(tids.insert(s.assign_tid().value).second);
    }
  }
}

TEST_CASE("rebalance never moves a sequencer backwards") {
  MemStore store;
  Sequencer s(1, 3, &store, "w0/log");
  for (int i = 0; i < 3; ++i) s.assign_tid();
  REQUIRE(s.state().lc == 3);

  s.rebalance(10);
  CHECK(s.state().lc == 10);
  s.rebalance(10);
  CHECK(s.state().lc == 10);  // idempotent at the fixpoint
  s.rebalance(4);
  CHECK(s.state().lc == 10);  // max(), not assignment

  // three workers with lc {5, 2, 9} all meet at 9
  std::vector<std::uint64_t> lcs = {5, 2, 9};
  std::uint64_t max_lc = *std::max_element(lcs.begin(), lcs.end());
  for (auto lc : lcs) CHECK(std::max(lc, max_lc) == 9);
}

TEST_CASE("epoch size records are bit-exact with a crc") {
  EpochSizeRecord rec{0x0102030405060708ull, 0xAABBCCDDu};
  Bytes encoded = epoch_size_log::encode_record(rec);
  REQUIRE(encoded.size() == 16);
  // little-endian epoch, little-endian size, crc of the first 12 bytes
  CHECK(Bytes(encoded.substr(0, 8)) == Bytes("\x08\x07\x06\x05\x04\x03\x02\x01", 8));
  CHECK(Bytes(encoded.substr(8, 4)) == Bytes("\xDD\xCC\xBB\xAA", 4));
  CHECK(crc32(encoded.substr(0, 12)) ==
        le::Reader(std::string_view(encoded).substr(12)).u32());

  auto decoded = epoch_size_log::decode(encoded);
  REQUIRE(decoded.size() == 1);
  CHECK(decoded[0].epoch == rec.epoch);
  CHECK(decoded[0].size == rec.size);
}

TEST_CASE("epoch size log drops torn and corrupt tails") {
  Bytes log;
  log += epoch_size_log::encode_record({1, 10});
  log += epoch_size_log::encode_record({2, 20});
  Bytes torn = log + epoch_size_log::encode_record({3, 30}).substr(0, 7);
  CHECK(epoch_size_log::decode(torn).size() == 2);

  Bytes corrupt = log;
  corrupt += epoch_size_log::encode_record({3, 30});
  corrupt[corrupt.size() - 1] ^= 0x5A;  // break the crc
  CHECK(epoch_size_log::decode(corrupt).size() == 2);
}

TEST_CASE("replay sizes are contiguous from the snapshot point") {
  MemStore store;
  Sequencer s(1, 2, &store, "w0/epochs");
  s.log_epoch_size(1, 3);
  s.log_epoch_size(2, 2);
  s.log_epoch_size(3, 5);

  auto all = s.replay_sizes(0);
  REQUIRE(all.size() == 3);
  CHECK(all[0].size == 3);

  auto suffix = s.replay_sizes(2);
  REQUIRE(suffix.size() == 1);
  CHECK(suffix[0].epoch == 3);

  CHECK(s.replay_sizes(3).empty());

  // a gap in the log is a hard error
  Sequencer gap(1, 2, &store, "w1/epochs");
  gap.log_epoch_size(1, 3);
  gap.log_epoch_size(3, 2);
  CHECK_THROWS_AS(gap.replay_sizes(0), LogGapError);
}
