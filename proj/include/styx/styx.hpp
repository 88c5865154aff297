#pragma once

// Umbrella header: the embeddable runtime, the deterministic cluster
// harness, and the verification oracles.

#include "styx/ack_share.hpp"
#include "styx/cluster.hpp"
#include "styx/codec.hpp"
#include "styx/commit.hpp"
#include "styx/common.hpp"
#include "styx/coordinator.hpp"
#include "styx/crc32.hpp"
#include "styx/fault_file.hpp"
#include "styx/messages.hpp"
#include "styx/oracle.hpp"
#include "styx/report.hpp"
#include "styx/runtime.hpp"
#include "styx/sequencer.hpp"
#include "styx/snapshot.hpp"
#include "styx/socket_transport.hpp"
#include "styx/state_store.hpp"
#include "styx/store.hpp"
#include "styx/trace.hpp"
#include "styx/trace_io.hpp"
#include "styx/transport.hpp"
#include "styx/types.hpp"
#include "styx/worker.hpp"
#include "styx/workload.hpp"
