#include <catch2/catch_amalgamated.hpp>

#include <thread>

#include "styx/cluster.hpp"
#include "styx/fault_file.hpp"
#include "styx/socket_transport.hpp"
#include "styx/trace_io.hpp"

using namespace styx;

TEST_CASE("operator registration enforces uniqueness and partitioning") {
  OperatorRegistry reg;
  OperatorDef hotel;
  hotel.name = "Hotel";
  hotel.n_partitions = 4;
  hotel.fn("noop", [](CallContext&, const Params&) -> FnTask { co_return Value(); });
  reg.register_operator(hotel);

  CHECK_THROWS_AS(reg.register_operator(hotel), DuplicateOperatorError);
  CHECK_THROWS_AS(reg.get("Motel"), UnknownOperatorError);
  CHECK_THROWS_AS(reg.function("Hotel", "nope"), UnknownFunctionError);

  // partition p of any operator lands on worker p mod n_workers: with four
  // partitions on two workers, partitions {0,2} -> first, {1,3} -> second
  for (int i = 0; i < 200; ++i) {
    NamespacedKey key{"Hotel", "h" + std::to_string(i)};
    auto p = reg.partition_of(key);
    CHECK(p < 4);
    CHECK(reg.worker_of(key, 2) == p % 2);
  }

  OperatorDef single;
  single.name = "Single";
  single.n_partitions = 1;
  single.fn("noop", [](CallContext&, const Params&) -> FnTask { co_return Value(); });
  reg.register_operator(single);
  for (int i = 0; i < 50; ++i)
    CHECK(reg.worker_of(NamespacedKey{"Single", "k" + std::to_string(i)}, 4) == 0);
}

TEST_CASE("context isolation: functions see only their own entity") {
  ClusterOptions opt;
  opt.config.n_workers = 2;
  opt.config.rng_seed = 77;
  Cluster cluster(std::move(opt));

  OperatorDef probe;
  probe.name = "Probe";
  probe.n_partitions = 4;
  probe.fn("seed", [](CallContext& ctx, const Params& p) -> FnTask {
    ctx.put(p.at(0));
    co_return Value();
  });
  // reads its own state only; there is no way to name another key
  probe.fn("peek", [](CallContext& ctx, const Params&) -> FnTask {
    auto v = ctx.get();
    co_return v ? *v : Value(nullptr);
  });
  cluster.register_operator(probe);
  cluster.start();

  auto req = [](std::string rid, std::string fn, std::string key, Params p = {}) {
    ClientRequest r;
    r.request_id = std::move(rid);
    r.target = NamespacedKey{"Probe", std::move(key)};
    r.function_name = std::move(fn);
    for (const auto& v : p) r.params.push_back(codec::encode(v));
    return r;
  };
  cluster.submit(req("s", "seed", "a", {Value("hidden")}));
  REQUIRE(cluster.run());
  cluster.submit(req("p", "peek", "b"));
  REQUIRE(cluster.run());

  for (const auto& rec : cluster.deduped_output())
    if (rec.request_id == "p") CHECK(codec::decode(rec.payload) == Value(nullptr));
}

TEST_CASE("socket channel round-trips envelopes over loopback") {
  SocketListener listener;
  std::thread server([&] {
    auto chan = listener.accept_one();
    while (auto env = chan.recv()) chan.send(*env);  // echo until EOF
  });

  {
    auto client = SocketChannel::connect_to("127.0.0.1", listener.port());
    auto sent = Envelope::make(MsgType::FnCall, 7, Tid{42}, "sync over tcp");
    client.send(sent);
    auto got = client.recv();
    REQUIRE(got.has_value());
    CHECK(got->msg_type == MsgType::FnCall);
    CHECK(got->epoch == 7);
    CHECK(got->txn.value == 42);
    CHECK(got->payload == "sync over tcp");

    client.send(Envelope::make(MsgType::Output, 8, Tid{1}, Bytes(4096, 'x')));
    auto big = client.recv();
    REQUIRE(big.has_value());
    CHECK(big->payload.size() == 4096);
  }
  server.join();
}

TEST_CASE("fault schedule files parse the toml subset") {
  auto sched = parse_fault_schedule(R"(
# take worker 1 down mid-run and bring it back
[[fault]]
step = 5000
action = "crash"
worker = 1

[[fault]]
step = 7000
action = "restart_worker"
worker = 1

[[fault]]
step = 100
action = "drop"
src = 0
dst = 2
)");
  REQUIRE(sched.size() == 3);
  CHECK(sched[0].step == 5000);
  CHECK(sched[0].action == FaultEntry::Action::CrashWorker);
  CHECK(sched[0].worker == 1);
  CHECK(sched[1].action == FaultEntry::Action::RestartWorker);
  CHECK(sched[2].action == FaultEntry::Action::DropChannel);
  CHECK(sched[2].src == 0);
  CHECK(sched[2].dst == 2);

  CHECK(parse_fault_schedule("").empty());
  CHECK_THROWS_AS(parse_fault_schedule("step = 5"), ConfigError);
  CHECK_THROWS_AS(parse_fault_schedule("[[fault]]\naction = \"melt\""),
                  ConfigError);
}

TEST_CASE("trace files round-trip and drive the offline oracles") {
  trace_io::TraceFile t;
  t.workload_kind = "ycsbt";
  Trace::Resolution r;
  r.tid = 3;
  r.verdict = TxnStatus::Committed;
  r.epoch = 2;
  r.phase = ResolutionPhase::LockFree;
  r.request_id = Bytes("\x00\x01req", 5);
  t.trace.resolutions.push_back(r);
  t.trace.tid_request_bytes[3] = Bytes("\xde\xad", 2);
  t.final_state[NamespacedKey{"Account", "a"}] = Bytes("\x01\x02", 2);
  t.deduped_output.push_back({r.request_id, Tid{3}, TxnStatus::Committed, "", 2});
  t.submitted_ids.push_back(r.request_id);

  auto round = trace_io::load(trace_io::dump(t));
  CHECK(round.workload_kind == "ycsbt");
  REQUIRE(round.trace.resolutions.size() == 1);
  CHECK(round.trace.resolutions[0].request_id == r.request_id);
  CHECK(round.trace.tid_request_bytes.at(3) == Bytes("\xde\xad", 2));
  CHECK(round.final_state == t.final_state);
  REQUIRE(round.deduped_output.size() == 1);
  CHECK(round.submitted_ids == t.submitted_ids);

  Value bad = trace_io::dump(t);
  bad["format"] = "other";
  CHECK_THROWS_AS(trace_io::load(bad), TraceCorruptError);
  CHECK_THROWS_AS(trace_io::from_hex("xyz"), TraceCorruptError);
}
