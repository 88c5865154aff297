#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "styx/coordinator.hpp"
#include "styx/messages.hpp"
#include "styx/runtime.hpp"
#include "styx/snapshot.hpp"
#include "styx/store.hpp"
#include "styx/trace.hpp"
#include "styx/transport.hpp"
#include "styx/worker.hpp"

namespace styx {

struct ClusterOptions {
  ClusterConfig config;
  bool file_backed = false;                 // logs + snapshot store on disk
  std::filesystem::path data_dir = "styx-data";
  SimTime base_latency = 1;
  SimTime latency_jitter = 2;
};

// In-process deterministic cluster: coordinator + workers over the simulated
// network, file-or-memory logs, one snapshot store. The harness drives it to
// quiescence and exposes the run journal to the oracles.
class Cluster {
 public:
  explicit Cluster(ClusterOptions opt)
      : opt_(std::move(opt)),
        net_(opt_.config.rng_seed, opt_.base_latency, opt_.latency_jitter) {
    opt_.config.validate();
    const auto n = opt_.config.n_workers;
    if (opt_.file_backed) {
      std::filesystem::create_directories(opt_.data_dir);
      input_ = std::make_unique<FileLog>(opt_.data_dir / "input", n);
      output_ = std::make_unique<FileLog>(opt_.data_dir / "output", n);
      durable_ = std::make_unique<FileStore>(opt_.data_dir / "snapshots");
    } else {
      input_ = std::make_unique<MemLog>(n);
      output_ = std::make_unique<MemLog>(n);
      durable_ = std::make_unique<MemStore>();
    }
    snaps_ = std::make_unique<SnapshotStore>(durable_.get());
  }

  OperatorRegistry& registry() { return registry_; }

  void register_operator(OperatorDef def) {
    if (started_) throw ConfigError("operators register before the cluster starts");
    registry_.register_operator(std::move(def));
  }

  void start() {
    if (started_) return;
    started_ = true;
    const auto n = opt_.config.n_workers;
    coordinator_ = std::make_unique<Coordinator>(opt_.config, &net_, snaps_.get(),
                                                 &trace_, n);
    net_.register_node(n, coordinator_.get());
    coordinator_->start();
    workers_.resize(n);
    for (WorkerId w = 0; w < n; ++w) spawn_worker(w);
    net_.set_fault_schedule(fault_schedule_,
                            [this](const FaultEntry& f) { on_fault(f); });
  }

  void set_fault_schedule(FaultSchedule schedule) {
    fault_schedule_ = std::move(schedule);
    if (started_)
      net_.set_fault_schedule(fault_schedule_,
                              [this](const FaultEntry& f) { on_fault(f); });
  }

  // Appends to the owning worker's input partition; durable immediately.
  void submit(const ClientRequest& req) {
    WorkerId w = registry_.worker_of(req.target, opt_.config.n_workers);
    input_->append(w, req.encode());
    submitted_.push_back(req.request_id);
    trace_.submit_times[req.request_id] = net_.now();
  }

  void submit_at(const ClientRequest& req, SimTime at) {
    SimTime delay = at > net_.now() ? at - net_.now() : 0;
    net_.schedule(delay, [this, req]() {
      WorkerId w = registry_.worker_of(req.target, opt_.config.n_workers);
      input_->append(w, req.encode());
      trace_.submit_times[req.request_id] = net_.now();
    });
    submitted_.push_back(req.request_id);
  }

  // Pump the simulation until every submitted request has a resolution and
  // no snapshot persistence is in flight. Returns false on the step budget.
  bool run(std::uint64_t max_steps = 20'000'000) {
    if (!started_) start();
    std::uint64_t budget = net_.steps() + max_steps;
    while (net_.steps() < budget) {
      poll_resolutions();
      if (quiescent()) return true;
      if (!net_.step()) break;
    }
    poll_resolutions();
    return quiescent();
  }

  // All replies out, the covering epoch complete on every worker (the
  // coordinator opened a later one), and no snapshot persist in flight.
  bool quiescent() const {
    return resolved_ids_.size() >= submitted_.size() &&
           coordinator_->state() == Coordinator::State::Running &&
           coordinator_->epoch() > last_resolution_epoch_ &&
           coordinator_->outstanding_persists() == 0;
  }

  // --- inspection ----------------------------------------------------------

  const Trace& trace() const { return trace_; }
  Trace& trace() { return trace_; }
  SimNet& net() { return net_; }
  ReplayableLog& input_log() { return *input_; }
  ReplayableLog& output_log() { return *output_; }
  SnapshotStore& snapshot_store() { return *snaps_; }
  Coordinator& coordinator() { return *coordinator_; }
  Worker& worker(WorkerId w) { return *workers_.at(w); }
  const std::vector<Bytes>& submitted_ids() const { return submitted_; }
  const ClusterConfig& config() const { return opt_.config; }

  std::map<NamespacedKey, Bytes> final_state() const {
    std::map<NamespacedKey, Bytes> out;
    for (const auto& w : workers_) {
      if (!w) continue;
      for (const auto& [k, v] : w->state().committed()) out[k] = v;
    }
    return out;
  }

  std::vector<OutputRecord> raw_output() const {
    std::vector<OutputRecord> out;
    for (std::size_t p = 0; p < output_->partition_count(); ++p)
      for (const auto& [off, rec] : output_->read_from(p, 0))
        out.push_back(OutputRecord::decode(rec));
    return out;
  }

  // First record per TID survives; later ones are recovery duplicates.
  std::vector<OutputRecord> deduped_output() const {
    std::vector<OutputRecord> out;
    std::set<std::uint64_t> seen;
    for (std::size_t p = 0; p < output_->partition_count(); ++p) {
      for (const auto& [off, rec] : output_->read_from(p, 0)) {
        OutputRecord r = OutputRecord::decode(rec);
        if (seen.insert(r.tid.value).second) out.push_back(std::move(r));
      }
    }
    return out;
  }

 private:
  void spawn_worker(WorkerId w) {
    workers_[w] = std::make_unique<Worker>(w, opt_.config, &net_, &registry_,
                                           input_.get(), output_.get(),
                                           snaps_.get(), &trace_,
                                           opt_.config.n_workers);
    net_.register_node(w, workers_[w].get());
    workers_[w]->start();
  }

  void on_fault(const FaultEntry& f) {
    switch (f.action) {
      case FaultEntry::Action::CrashWorker:
        trace_.note_event(net_.steps(), net_.now(), "crash_injected", f.worker);
        net_.kill_node(f.worker);
        break;
      case FaultEntry::Action::RestartWorker:
        trace_.note_event(net_.steps(), net_.now(), "restart_injected", f.worker);
        spawn_worker(f.worker);
        break;
      case FaultEntry::Action::DropChannel:
        trace_.note_event(net_.steps(), net_.now(), "channel_dropped", f.src, f.dst);
        break;
    }
  }

  void poll_resolutions() {
    while (resolution_cursor_ < trace_.resolutions.size()) {
      const auto& r = trace_.resolutions[resolution_cursor_];
      resolved_ids_.insert(r.request_id);
      last_resolution_epoch_ = std::max(last_resolution_epoch_, r.epoch);
      ++resolution_cursor_;
    }
  }

  ClusterOptions opt_;
  SimNet net_;
  OperatorRegistry registry_;
  Trace trace_;
  std::unique_ptr<ReplayableLog> input_;
  std::unique_ptr<ReplayableLog> output_;
  std::unique_ptr<DurableStore> durable_;
  std::unique_ptr<SnapshotStore> snaps_;
  std::unique_ptr<Coordinator> coordinator_;
  std::vector<std::unique_ptr<Worker>> workers_;
  FaultSchedule fault_schedule_;
  std::vector<Bytes> submitted_;
  std::set<Bytes> resolved_ids_;
  std::size_t resolution_cursor_ = 0;
  EpochNo last_resolution_epoch_ = 0;
  bool started_ = false;
};

}  // namespace styx
