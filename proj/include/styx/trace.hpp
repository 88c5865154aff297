#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "styx/common.hpp"
#include "styx/messages.hpp"
#include "styx/transport.hpp"
#include "styx/types.hpp"

namespace styx {

// Phase rank inside an epoch for serial-order reconstruction: transactions
// that logic-aborted during discovery observed the epoch's initial state, so
// they order before the lock-free commits.
enum class ResolutionPhase : std::uint8_t {
  DiscoveryAbort = 0,
  LockFree = 1,
  LockBased = 2,
};

// Deterministic run journal used by the oracles and the harness metrics.
// Appended single-threaded from inside the simulation.
struct Trace {
  struct Resolution {
    std::uint64_t tid = 0;
    TxnStatus verdict = TxnStatus::Committed;
    EpochNo epoch = 0;
    ResolutionPhase phase = ResolutionPhase::LockFree;
    Bytes request_id;
    bool suppressed_duplicate = false;
    SimTime at = 0;
  };

  struct MsgEvent {
    EpochNo epoch = 0;
    int phase = 0;  // worker phase ordinal at send time
    MsgType type = MsgType::Ctrl;
    bool replay = false;
    WorkerId src = 0;
    WorkerId dst = 0;
    std::uint64_t tid = 0;
  };

  struct Event {
    std::uint64_t step = 0;
    SimTime at = 0;
    std::string kind;
    WorkerId worker = 0;
    std::uint64_t a = 0;
    std::uint64_t b = 0;
  };

  std::vector<Resolution> resolutions;
  std::vector<MsgEvent> messages;
  std::vector<Event> events;
  std::map<std::uint64_t, Bytes> tid_to_request;      // tid -> request_id
  std::map<std::uint64_t, Bytes> tid_request_bytes;   // tid -> encoded request
  std::map<std::pair<WorkerId, EpochNo>, std::uint32_t> epoch_sizes;
  std::map<Bytes, SimTime> submit_times;
  // discovery-time read/write index per (epoch, key), after abort purge
  std::map<std::pair<EpochNo, std::string>, std::set<std::uint64_t>> rw_index_log;
  std::map<EpochNo, std::set<std::uint64_t>> conflict_sets;
  std::uint64_t reschedule_events = 0;
  std::uint64_t recoveries = 0;

  void note_event(std::uint64_t step, SimTime at, std::string kind, WorkerId w,
                  std::uint64_t a = 0, std::uint64_t b = 0) {
    events.push_back({step, at, std::move(kind), w, a, b});
  }

  // Final resolution per tid (replayed epochs re-resolve identically; any
  // occurrence carries the same verdict).
  std::map<std::uint64_t, Resolution> resolved_by_tid() const {
    std::map<std::uint64_t, Resolution> out;
    for (const auto& r : resolutions) out[r.tid] = r;
    return out;
  }
};

}  // namespace styx
