#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "styx/cluster.hpp"
#include "styx/messages.hpp"
#include "styx/runtime.hpp"

namespace styx {

// Rejection-free Zipf sampler: explicit CDF over n ranks, binary search per
// draw. theta = 0 degenerates to uniform.
class ZipfGenerator {
 public:
  ZipfGenerator(std::size_t n, double theta) : cdf_(n) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += 1.0 / std::pow(double(i + 1), theta);
      cdf_[i] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }

  std::size_t sample(std::mt19937_64& rng) const {
    double u = double(rng() >> 11) * 0x1.0p-53;
    auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    return it == cdf_.end() ? cdf_.size() - 1 : std::size_t(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

struct WorkloadSpec {
  enum class Kind { Ycsbt, Travel };

  Kind kind = Kind::Ycsbt;
  std::size_t n_keys = 10000;
  std::size_t n_txns = 1000;
  double zipf_theta = 0.0;      // creditor skew; 0 = uniform
  std::uint64_t input_rate = 0; // requests per ms of sim time; 0 = preload all
  std::uint64_t seed = 7;
  std::int64_t initial_balance = 1'000'000;
  std::int64_t transfer_amount = 1;
  std::int64_t initial_capacity = 100;  // travel rooms/seats
};

// ---------------------------------------------------------------------------
// YCSB-T: transfer workload. Two reads and two writes per transaction —
// debtor (read+write, local) and creditor (read+write via async call).
// ---------------------------------------------------------------------------

inline OperatorDef ycsbt_account_operator() {
  OperatorDef def;
  def.name = "Account";
  def.n_partitions = 16;
  def.fn("init", [](CallContext& ctx, const Params& p) -> FnTask {
    ctx.put(p.at(0));
    co_return p.at(0);
  });
  def.fn("credit", [](CallContext& ctx, const Params& p) -> FnTask {
    auto v = ctx.get();
    std::int64_t bal = v ? v->get<std::int64_t>() : 0;
    std::int64_t amount = p.at(0).get<std::int64_t>();
    ctx.put(bal + amount);
    co_return bal + amount;
  });
  def.fn("transfer", [](CallContext& ctx, const Params& p) -> FnTask {
    std::string creditor = p.at(0).get<std::string>();
    std::int64_t amount = p.at(1).get<std::int64_t>();
    auto v = ctx.get();
    std::int64_t bal = v ? v->get<std::int64_t>() : 0;
    if (bal < amount) throw LogicAbort("insufficient funds: " + ctx.key());
    ctx.put(bal - amount);
    ctx.call_async("Account", "credit", creditor, {amount});
    co_return bal - amount;
  });
  return def;
}

// ---------------------------------------------------------------------------
// Travel reservation: a reservation entity issues two async reserve calls
// and stores the booking locally; either callee aborts on zero availability.
// ---------------------------------------------------------------------------

inline OperatorDef travel_reservation_operator() {
  OperatorDef def;
  def.name = "Reservation";
  def.n_partitions = 16;
  def.fn("make_reservation", [](CallContext& ctx, const Params& p) -> FnTask {
    std::string flight_id = p.at(0).get<std::string>();
    std::string hotel_id = p.at(1).get<std::string>();
    std::string user_id = p.at(2).get<std::string>();
    ctx.call_async("Hotel", "reserve_hotel", hotel_id);
    ctx.call_async("Flight", "reserve_flight", flight_id);
    Value reservation = {{"fid", flight_id}, {"hid", hotel_id}, {"uid", user_id}};
    ctx.put(reservation);
    co_return Value("Reservation Successful");
  });
  return def;
}

inline OperatorDef travel_hotel_operator() {
  OperatorDef def;
  def.name = "Hotel";
  def.n_partitions = 16;
  def.fn("init", [](CallContext& ctx, const Params& p) -> FnTask {
    ctx.put(p.at(0));
    co_return p.at(0);
  });
  def.fn("reserve_hotel", [](CallContext& ctx, const Params&) -> FnTask {
    auto v = ctx.get();
    std::int64_t available_rooms = v ? v->get<std::int64_t>() : 0;
    if (available_rooms <= 0)
      throw LogicAbort("No rooms in hotel: " + ctx.key());
    ctx.put(available_rooms - 1);
    co_return available_rooms - 1;
  });
  return def;
}

inline OperatorDef travel_flight_operator() {
  OperatorDef def;
  def.name = "Flight";
  def.n_partitions = 16;
  def.fn("init", [](CallContext& ctx, const Params& p) -> FnTask {
    ctx.put(p.at(0));
    co_return p.at(0);
  });
  def.fn("reserve_flight", [](CallContext& ctx, const Params&) -> FnTask {
    auto v = ctx.get();
    std::int64_t seats = v ? v->get<std::int64_t>() : 0;
    if (seats <= 0) throw LogicAbort("No seats on flight: " + ctx.key());
    ctx.put(seats - 1);
    co_return seats - 1;
  });
  return def;
}

inline void install_workload_operators(Cluster& cluster, WorkloadSpec::Kind kind) {
  if (kind == WorkloadSpec::Kind::Ycsbt) {
    cluster.register_operator(ycsbt_account_operator());
  } else {
    cluster.register_operator(travel_reservation_operator());
    cluster.register_operator(travel_hotel_operator());
    cluster.register_operator(travel_flight_operator());
  }
}

inline std::string account_key(std::size_t i) { return "acct" + std::to_string(i); }

// Initialization requests: seed state through the protocol so that replay
// and recovery reproduce it.
inline std::vector<ClientRequest> generate_init_requests(const WorkloadSpec& spec) {
  std::vector<ClientRequest> out;
  auto add = [&](std::string op, std::string fn, std::string key, Value v) {
    ClientRequest r;
    r.request_id = "init:" + op + ":" + key;
    r.target = NamespacedKey{std::move(op), std::move(key)};
    r.function_name = std::move(fn);
    r.params.push_back(codec::encode(v));
    out.push_back(std::move(r));
  };
  if (spec.kind == WorkloadSpec::Kind::Ycsbt) {
    for (std::size_t i = 0; i < spec.n_keys; ++i)
      add("Account", "init", account_key(i), Value(spec.initial_balance));
  } else {
    for (std::size_t i = 0; i < spec.n_keys; ++i) {
      add("Hotel", "init", "hotel" + std::to_string(i), Value(spec.initial_capacity));
      add("Flight", "init", "flight" + std::to_string(i), Value(spec.initial_capacity));
    }
  }
  return out;
}

// Workload body. Debtor drawn uniformly, creditor from the Zipfian.
inline std::vector<ClientRequest> generate_requests(const WorkloadSpec& spec) {
  std::vector<ClientRequest> out;
  std::mt19937_64 rng(spec.seed);
  ZipfGenerator zipf(spec.n_keys, spec.zipf_theta);

  for (std::size_t i = 0; i < spec.n_txns; ++i) {
    ClientRequest r;
    r.request_id = "txn:" + std::to_string(i);
    if (spec.kind == WorkloadSpec::Kind::Ycsbt) {
      std::size_t debtor = rng() % spec.n_keys;
      std::size_t creditor = zipf.sample(rng);
      while (creditor == debtor && spec.n_keys > 1) creditor = zipf.sample(rng);
      r.target = NamespacedKey{"Account", account_key(debtor)};
      r.function_name = "transfer";
      r.params.push_back(codec::encode(Value(account_key(creditor))));
      r.params.push_back(codec::encode(Value(spec.transfer_amount)));
    } else {
      std::size_t user = rng() % (spec.n_keys * 4 + 1);
      std::size_t hotel = zipf.sample(rng);
      std::size_t flight = zipf.sample(rng);
      r.target = NamespacedKey{"Reservation", "user" + std::to_string(user)};
      r.function_name = "make_reservation";
      r.params.push_back(codec::encode(Value("flight" + std::to_string(flight))));
      r.params.push_back(codec::encode(Value("hotel" + std::to_string(hotel))));
      r.params.push_back(codec::encode(Value("user" + std::to_string(user))));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void submit_all(Cluster& cluster, const std::vector<ClientRequest>& reqs,
                       std::uint64_t rate_per_ms = 0) {
  if (rate_per_ms == 0) {
    for (const auto& r : reqs) cluster.submit(r);
    return;
  }
  SimTime t = 1;
  std::uint64_t in_tick = 0;
  for (const auto& r : reqs) {
    cluster.submit_at(r, t);
    if (++in_tick >= rate_per_ms) {
      in_tick = 0;
      ++t;
    }
  }
}

}  // namespace styx
