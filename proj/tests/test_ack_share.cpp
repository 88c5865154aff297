#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <random>
#include <vector>

#include "styx/ack_share.hpp"

using namespace styx;

namespace {

struct TreeNode {
  std::vector<TreeNode> children;
};

TreeNode random_tree(std::mt19937_64& rng, int max_depth, int max_fanout,
                     int depth = 0) {
  TreeNode n;
  if (depth >= max_depth) return n;
  int fanout = int(rng() % (max_fanout + 1));
  for (int i = 0; i < fanout; ++i)
    n.children.push_back(random_tree(rng, max_depth, max_fanout, depth + 1));
  return n;
}

// Implementation path: shares flow down via split(); terminals return theirs.
void flow_shares(const TreeNode& n, const AckShare& held,
                 std::vector<AckShare>& terminals) {
  if (n.children.empty()) {
    terminals.push_back(held);
    return;
  }
  auto parts = held.split(n.children.size());
  for (std::size_t i = 0; i < n.children.size(); ++i)
    flow_shares(n.children[i], parts[i], terminals);
}

// Independent oracle: each leaf weighs the product of 1/fanout along its
// path, accumulated with raw bigints.
void leaf_weights(const TreeNode& n, BigInt num, BigInt den,
                  std::vector<std::pair<BigInt, BigInt>>& out) {
  if (n.children.empty()) {
    BigInt g = boost::multiprecision::gcd(num, den);
    out.emplace_back(num / g, den / g);
    return;
  }
  for (const auto& c : n.children)
    leaf_weights(c, num, den * BigInt(n.children.size()), out);
}

}  // namespace

TEST_CASE("splitting produces equal exact parts that sum back") {
  auto thirds = AckShare::whole().split(3);
  REQUIRE(thirds.size() == 3);
  for (const auto& s : thirds) CHECK(s == AckShare(1, 3));

  auto sixths = AckShare(1, 3).split(2);
  REQUIRE(sixths.size() == 2);
  for (const auto& s : sixths) CHECK(s == AckShare(1, 6));

  auto identity = AckShare::whole().split(1);
  REQUIRE(identity.size() == 1);
  CHECK(identity[0].is_one());
}

TEST_CASE("shares are normalized and bounded") {
  CHECK(AckShare(2, 6) == AckShare(1, 3));
  CHECK(AckShare(5, 5).is_one());
  CHECK_THROWS_AS(AckShare(4, 3), ShareOverflowError);
  CHECK_THROWS_AS(AckShare(1, 0), Error);
  CHECK(AckShare(3, 9).str() == "1/3");
}

TEST_CASE("share text encoding round-trips") {
  auto s = AckShare(7, 36);
  CHECK(AckShare::parse(s.encode()) == s);
  CHECK_THROWS_AS(AckShare::parse("nonsense"), Error);
}

TEST_CASE("tracker completes on the worked three-way example") {
  // Root splits three ways; leftmost passes its 1/3 whole to one child;
  // middle returns 1/3 directly; rightmost splits 1/3 into 2 x 1/6.
  CallTreeTracker tracker(Tid{1});
  CHECK(tracker.collect(AckShare(1, 3)) == CollectOutcome::Incomplete);
  CHECK(tracker.collect(AckShare(1, 3)) == CollectOutcome::Incomplete);
  CHECK(!tracker.complete());
  CHECK(tracker.collected()->str() == "2/3");
  CHECK(tracker.collect(AckShare(1, 6)) == CollectOutcome::Incomplete);
  CHECK(tracker.collect(AckShare(1, 6)) == CollectOutcome::Complete);
  CHECK(tracker.complete());
  REQUIRE(tracker.terminal_shares().size() == 4);
}

TEST_CASE("tracker rejects collecting past 1") {
  CallTreeTracker tracker(Tid{9});
  tracker.collect(AckShare(1, 2));
  tracker.collect(AckShare(1, 2));
  CHECK_THROWS_AS(tracker.collect(AckShare(1, 100)), ShareOverflowError);
}

TEST_CASE("random call trees settle to exactly 1") {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 400; ++i) {
    TreeNode tree = random_tree(rng, 6, 5);

    std::vector<AckShare> terminals;
    flow_shares(tree, AckShare::whole(), terminals);

    std::vector<std::pair<BigInt, BigInt>> expected;
    leaf_weights(tree, 1, 1, expected);

    REQUIRE(terminals.size() == expected.size());

    // Multisets of exact fractions must agree.
    std::map<std::pair<std::string, std::string>, int> lhs, rhs;
    for (const auto& s : terminals)
      lhs[{s.numerator().str(), s.denominator().str()}]++;
    for (const auto& [n, d] : expected) rhs[{n.str(), d.str()}]++;
    CHECK(lhs == rhs);

    CallTreeTracker tracker(Tid{1});
    CollectOutcome last = CollectOutcome::Incomplete;
    for (const auto& s : terminals) last = tracker.collect(s);
    CHECK(last == CollectOutcome::Complete);
    CHECK(tracker.complete());
  }
}
