// styx-mini: run seeded transactional workloads against the in-process
// cluster, inject faults, collect metrics and run the correctness oracles.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "styx/styx.hpp"

namespace {

using namespace styx;

struct RunArgs {
  std::string workload = "ycsbt";
  std::size_t keys = 10000;
  std::size_t txns = 10000;
  std::string dist = "uniform";
  std::uint64_t rate = 0;
  std::uint32_t workers = 4;
  std::uint64_t seed = 7;
  std::uint32_t epoch_max = 1000;
  std::uint32_t epoch_interval_ms = 1;
  std::uint32_t snapshot_interval_ms = 10000;
  std::uint32_t heartbeat_timeout_ms = 1000;
  std::int64_t balance = 1'000'000;
  std::int64_t capacity = 100;
  std::string faults_path;
  std::string report_path;
  std::string trace_path;
  std::string data_dir;
  bool file_backed = false;
  bool verify = false;
};

double parse_dist(const std::string& dist) {
  if (dist == "uniform") return 0.0;
  if (dist.rfind("zipf:", 0) == 0) return std::stod(dist.substr(5));
  throw ConfigError("unknown distribution (use uniform or zipf:THETA): " + dist);
}

int cmd_run(const RunArgs& a) {
  WorkloadSpec spec;
  if (a.workload == "ycsbt")
    spec.kind = WorkloadSpec::Kind::Ycsbt;
  else if (a.workload == "travel")
    spec.kind = WorkloadSpec::Kind::Travel;
  else
    throw ConfigError("unknown workload (use ycsbt or travel): " + a.workload);
  spec.n_keys = a.keys;
  spec.n_txns = a.txns;
  spec.zipf_theta = parse_dist(a.dist);
  spec.input_rate = a.rate;
  spec.seed = a.seed;
  spec.initial_balance = a.balance;
  spec.initial_capacity = a.capacity;

  ClusterOptions opt;
  opt.config.n_workers = a.workers;
  opt.config.rng_seed = a.seed;
  opt.config.epoch_max_txns = a.epoch_max;
  opt.config.epoch_interval_ms = a.epoch_interval_ms;
  opt.config.snapshot_interval_ms = a.snapshot_interval_ms;
  opt.config.heartbeat_timeout_ms = a.heartbeat_timeout_ms;
  opt.config.validate();
  if (a.file_backed || !a.data_dir.empty()) {
    opt.file_backed = true;
    if (!a.data_dir.empty()) opt.data_dir = a.data_dir;
  }

  Harness harness(spec, opt);
  if (!a.faults_path.empty())
    harness.set_faults(load_fault_schedule(a.faults_path));

  auto report = harness.run(a.verify);
  std::cout << report.to_text();

  if (!a.report_path.empty()) {
    std::ofstream out(a.report_path);
    if (!out) throw StorageIoError("cannot write report: " + a.report_path);
    out << RunReport::csv_header() << "\n" << report.to_csv_row() << "\n";
    std::cout << "report written to " << a.report_path << "\n";
  }
  if (!a.trace_path.empty()) {
    trace_io::TraceFile t;
    t.workload_kind = a.workload;
    t.trace.resolutions = harness.cluster().trace().resolutions;
    t.trace.tid_request_bytes = harness.cluster().trace().tid_request_bytes;
    t.final_state = harness.cluster().final_state();
    t.deduped_output = harness.cluster().deduped_output();
    t.submitted_ids = harness.cluster().submitted_ids();
    trace_io::write_file(a.trace_path, t);
    std::cout << "trace written to " << a.trace_path << "\n";
  }

  bool counts = report.counts_consistent();
  if (!counts) std::cout << "LOST TRANSACTIONS: counts inconsistent\n";
  bool oracle_fail = report.serializable == 0 || report.exactly_once == 0;
  return (counts && !oracle_fail) ? 0 : 1;
}

int cmd_verify(const std::string& trace_path) {
  auto t = trace_io::read_file(trace_path);

  OperatorRegistry reg;
  if (t.workload_kind == "ycsbt") {
    reg.register_operator(ycsbt_account_operator());
  } else if (t.workload_kind == "travel") {
    reg.register_operator(travel_reservation_operator());
    reg.register_operator(travel_hotel_operator());
    reg.register_operator(travel_flight_operator());
  } else {
    throw TraceCorruptError("trace for unknown workload: " + t.workload_kind);
  }

  auto ser = verify_serializable(t.trace, reg, t.final_state);
  auto once = verify_exactly_once(t.deduped_output, t.submitted_ids);
  std::cout << "serializable: " << (ser.ok ? "ok" : "FAIL " + ser.detail) << "\n";
  std::cout << "exactly_once: " << (once.ok ? "ok" : "FAIL " + once.detail)
            << "\n";
  return (ser.ok && once.ok) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"styx-mini: deterministic transactional dataflow harness"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "run a workload to quiescence");
  run->add_option("--workload", ra.workload, "ycsbt | travel");
  run->add_option("--keys", ra.keys, "number of entity keys");
  run->add_option("--txns", ra.txns, "number of transactions");
  run->add_option("--dist", ra.dist, "uniform | zipf:THETA");
  run->add_option("--rate", ra.rate, "requests per logical ms (0 = preload)");
  run->add_option("--workers", ra.workers, "worker count");
  run->add_option("--seed", ra.seed, "run seed");
  run->add_option("--epoch-max", ra.epoch_max, "max transactions per epoch");
  run->add_option("--epoch-interval-ms", ra.epoch_interval_ms,
                  "epoch timer (logical ms)");
  run->add_option("--snapshot-interval-ms", ra.snapshot_interval_ms,
                  "snapshot cadence (logical ms)");
  run->add_option("--heartbeat-timeout-ms", ra.heartbeat_timeout_ms,
                  "failure detection timeout (logical ms)");
  run->add_option("--balance", ra.balance, "initial account balance (ycsbt)");
  run->add_option("--capacity", ra.capacity, "initial room/seat count (travel)");
  run->add_option("--faults", ra.faults_path, "fault schedule file (toml)");
  run->add_option("--report", ra.report_path, "write CSV report here");
  run->add_option("--trace", ra.trace_path, "write oracle trace (json) here");
  run->add_option("--data-dir", ra.data_dir, "directory for file-backed mode");
  run->add_flag("--file-backed", ra.file_backed,
                "file-backed logs and snapshot store");
  run->add_flag("--verify", ra.verify,
                "run serializability and exactly-once oracles");

  std::string verify_trace;
  auto* verify = app.add_subcommand("verify", "re-run oracles over a trace file");
  verify->add_option("--trace", verify_trace, "trace file from run --trace")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run")) return cmd_run(ra);
    return cmd_verify(verify_trace);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
