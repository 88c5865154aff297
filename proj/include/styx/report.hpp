#pragma once

#include <algorithm>
#include <chrono>
#include <sstream>
#include <string>
#include <vector>

#include "styx/cluster.hpp"
#include "styx/oracle.hpp"
#include "styx/workload.hpp"

namespace styx {

struct RunReport {
  std::uint64_t submitted = 0;
  std::uint64_t committed = 0;
  std::uint64_t aborted_logic = 0;
  std::uint64_t reschedule_events = 0;
  std::uint64_t recoveries = 0;
  SimTime sim_duration_ms = 0;
  double latency_p50_ms = 0;
  double latency_p99_ms = 0;
  double throughput_per_ms = 0;
  double wall_ms = 0;
  int serializable = -1;  // -1 unchecked, 0 fail, 1 ok
  int exactly_once = -1;
  std::string oracle_detail;

  bool counts_consistent() const { return committed + aborted_logic == submitted; }

  std::string to_text() const {
    std::ostringstream o;
    o << "submitted " << submitted << ", committed " << committed
      << ", aborted_logic " << aborted_logic << ", reschedule_events "
      << reschedule_events << ", recoveries " << recoveries << "\n"
      << "sim_duration_ms " << sim_duration_ms << ", latency p50 "
      << latency_p50_ms << " ms, p99 " << latency_p99_ms << " ms, throughput "
      << throughput_per_ms << " txns/ms, wall " << wall_ms << " ms\n";
    auto verdict = [](int v) {
      return v < 0 ? "unchecked" : (v == 0 ? "FAIL" : "ok");
    };
    o << "oracles: serializable " << verdict(serializable) << ", exactly_once "
      << verdict(exactly_once);
    if (!oracle_detail.empty()) o << " (" << oracle_detail << ")";
    o << "\n";
    return o.str();
  }

  static std::string csv_header() {
    return "submitted,committed,aborted_logic,reschedule_events,recoveries,"
           "sim_duration_ms,latency_p50_ms,latency_p99_ms,throughput_per_ms,"
           "wall_ms,serializable,exactly_once";
  }

  std::string to_csv_row() const {
    std::ostringstream o;
    o << submitted << ',' << committed << ',' << aborted_logic << ','
      << reschedule_events << ',' << recoveries << ',' << sim_duration_ms << ','
      << latency_p50_ms << ',' << latency_p99_ms << ',' << throughput_per_ms
      << ',' << wall_ms << ',' << serializable << ',' << exactly_once;
    return o.str();
  }
};

// Drives one seeded workload run end to end: install operators, seed state,
// submit, pump to quiescence, compute metrics, optionally run both oracles.
class Harness {
 public:
  Harness(WorkloadSpec spec, ClusterOptions opt)
      : spec_(std::move(spec)), cluster_(std::move(opt)) {
    install_workload_operators(cluster_, spec_.kind);
  }

  Cluster& cluster() { return cluster_; }
  const WorkloadSpec& spec() const { return spec_; }

  void set_faults(FaultSchedule faults) {
    cluster_.set_fault_schedule(std::move(faults));
  }

  RunReport run(bool verify = true, std::uint64_t max_steps = 20'000'000) {
    auto wall_start = std::chrono::steady_clock::now();
    cluster_.start();

    // Load phase completes before the workload starts, as a real data load
    // would; transfers must observe the seeded balances.
    auto init = generate_init_requests(spec_);
    for (const auto& r : init) cluster_.submit(r);
    bool done = cluster_.run(max_steps);

    auto body = generate_requests(spec_);
    submit_all(cluster_, body, spec_.input_rate);
    done = done && cluster_.run(max_steps);
    auto wall_end = std::chrono::steady_clock::now();

    RunReport rep;
    rep.wall_ms =
        std::chrono::duration<double, std::milli>(wall_end - wall_start).count();
    if (!done) {
      rep.oracle_detail = "run did not quiesce within step budget";
      rep.serializable = rep.exactly_once = 0;
      return rep;
    }

    std::set<Bytes> workload_ids;
    for (const auto& r : body) workload_ids.insert(r.request_id);
    rep.submitted = body.size();

    std::vector<double> latencies;
    const auto& trace = cluster_.trace();
    for (const auto& rec : cluster_.deduped_output()) {
      if (!workload_ids.count(rec.request_id)) continue;
      if (rec.status == TxnStatus::Committed)
        ++rep.committed;
      else
        ++rep.aborted_logic;
    }
    std::map<Bytes, SimTime> first_reply;
    for (const auto& r : trace.resolutions)
      if (!first_reply.count(r.request_id)) first_reply[r.request_id] = r.at;
    for (const auto& [rid, at] : first_reply) {
      if (!workload_ids.count(rid)) continue;
      auto sub = trace.submit_times.find(rid);
      if (sub != trace.submit_times.end())
        latencies.push_back(double(at - sub->second));
    }
    std::sort(latencies.begin(), latencies.end());
    if (!latencies.empty()) {
      rep.latency_p50_ms = latencies[latencies.size() / 2];
      rep.latency_p99_ms = latencies[std::min(latencies.size() - 1,
                                              latencies.size() * 99 / 100)];
    }
    rep.reschedule_events = trace.reschedule_events;
    rep.recoveries = trace.recoveries;
    rep.sim_duration_ms = cluster_.net().now();
    if (rep.sim_duration_ms > 0)
      rep.throughput_per_ms = double(rep.submitted) / double(rep.sim_duration_ms);

    if (verify) {
      auto ser = verify_serializable(trace, cluster_.registry(),
                                     cluster_.final_state());
      rep.serializable = ser.ok ? 1 : 0;
      auto once =
          verify_exactly_once(cluster_.deduped_output(), cluster_.submitted_ids());
      rep.exactly_once = once.ok ? 1 : 0;
      if (!ser.ok) rep.oracle_detail += ser.detail;
      if (!once.ok) rep.oracle_detail += (rep.oracle_detail.empty() ? "" : "; ") +
                                         once.detail;
    }
    return rep;
  }

 private:
  WorkloadSpec spec_;
  Cluster cluster_;
};

// Conservation check for transfer workloads: balances are zero-sum.
inline std::int64_t sum_account_balances(
    const std::map<NamespacedKey, Bytes>& state) {
  std::int64_t sum = 0;
  for (const auto& [k, v] : state)
    if (k.op == "Account") sum += codec::decode(v).get<std::int64_t>();
  return sum;
}

}  // namespace styx
