#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "styx/codec.hpp"
#include "styx/messages.hpp"
#include "styx/trace.hpp"

namespace styx {

namespace trace_io {

inline std::string to_hex(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (unsigned char c : b) {
    out.push_back(digits[c >> 4]);
    out.push_back(digits[c & 0xF]);
  }
  return out;
}

inline Bytes from_hex(const std::string& s) {
  if (s.size() % 2) throw TraceCorruptError("odd hex length");
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw TraceCorruptError("bad hex digit");
  };
  Bytes out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i < s.size(); i += 2)
    out.push_back(char(nib(s[i]) << 4 | nib(s[i + 1])));
  return out;
}

struct TraceFile {
  std::string workload_kind;  // "ycsbt" | "travel" | "custom"
  Trace trace;                // resolutions + request bytes only
  std::map<NamespacedKey, Bytes> final_state;
  std::vector<OutputRecord> deduped_output;
  std::vector<Bytes> submitted_ids;
};

inline Value dump(const TraceFile& t) {
  Value root;
  root["format"] = "styx-trace";
  root["version"] = 1;
  root["workload"] = t.workload_kind;

  Value res = Value::array();
  for (const auto& r : t.trace.resolutions)
    res.push_back({{"tid", r.tid},
                   {"verdict", int(r.verdict)},
                   {"epoch", r.epoch},
                   {"phase", int(r.phase)},
                   {"rid", to_hex(r.request_id)},
                   {"dup", r.suppressed_duplicate}});
  root["resolutions"] = std::move(res);

  Value reqs = Value::object();
  for (const auto& [tid, bytes] : t.trace.tid_request_bytes)
    reqs[std::to_string(tid)] = to_hex(bytes);
  root["requests"] = std::move(reqs);

  Value state = Value::object();
  for (const auto& [k, v] : t.final_state) state[k.render()] = to_hex(v);
  root["final_state"] = std::move(state);

  Value outs = Value::array();
  for (const auto& o : t.deduped_output)
    outs.push_back({{"rid", to_hex(o.request_id)},
                    {"tid", o.tid.value},
                    {"status", int(o.status)},
                    {"epoch", o.epoch}});
  root["output"] = std::move(outs);

  Value subs = Value::array();
  for (const auto& id : t.submitted_ids) subs.push_back(to_hex(id));
  root["submitted"] = std::move(subs);
  return root;
}

inline TraceFile load(const Value& root) {
  try {
    if (root.at("format") != "styx-trace" || root.at("version") != 1)
      throw TraceCorruptError("not a styx trace file");
    TraceFile t;
    t.workload_kind = root.at("workload").get<std::string>();
    for (const auto& r : root.at("resolutions")) {
      Trace::Resolution res;
      res.tid = r.at("tid").get<std::uint64_t>();
      res.verdict = TxnStatus(r.at("verdict").get<int>());
      res.epoch = r.at("epoch").get<EpochNo>();
      res.phase = ResolutionPhase(r.at("phase").get<int>());
      res.request_id = from_hex(r.at("rid").get<std::string>());
      res.suppressed_duplicate = r.at("dup").get<bool>();
      t.trace.resolutions.push_back(std::move(res));
    }
    for (const auto& [k, v] : root.at("requests").items())
      t.trace.tid_request_bytes[std::stoull(k)] =
          from_hex(v.get<std::string>());
    for (const auto& [k, v] : root.at("final_state").items())
      t.final_state[parse_namespaced_key(k)] = from_hex(v.get<std::string>());
    for (const auto& o : root.at("output")) {
      OutputRecord rec;
      rec.request_id = from_hex(o.at("rid").get<std::string>());
      rec.tid = Tid{o.at("tid").get<std::uint64_t>()};
      rec.status = TxnStatus(o.at("status").get<int>());
      rec.epoch = o.at("epoch").get<EpochNo>();
      t.deduped_output.push_back(std::move(rec));
    }
    for (const auto& s : root.at("submitted"))
      t.submitted_ids.push_back(from_hex(s.get<std::string>()));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw TraceCorruptError(std::string("trace file: ") + e.what());
  }
}

inline void write_file(const std::string& path, const TraceFile& t) {
  std::ofstream out(path);
  if (!out) throw StorageIoError("cannot write " + path);
  out << dump(t).dump(1) << "\n";
}

inline TraceFile read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StorageIoError("cannot read " + path);
  Value root;
  try {
    in >> root;
  } catch (const nlohmann::json::exception& e) {
    throw TraceCorruptError(std::string("trace file: ") + e.what());
  }
  return load(root);
}

}  // namespace trace_io

}  // namespace styx
