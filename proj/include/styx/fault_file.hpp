#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "styx/common.hpp"
#include "styx/transport.hpp"

namespace styx {

// Fault schedule files: a TOML subset of repeated [[fault]] tables.
//
//   [[fault]]
//   step = 5000
//   action = "crash"      # crash | restart | drop
//   worker = 1
//   # drop takes src/dst instead of worker
//
// Comments (#) and blank lines are ignored.
inline FaultSchedule parse_fault_schedule(const std::string& text) {
  FaultSchedule out;
  FaultEntry current;
  bool open = false;

  auto flush = [&] {
    if (open) out.push_back(current);
    current = FaultEntry{};
  };

  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    if (line == "[[fault]]") {
      flush();
      open = true;
      continue;
    }
    auto eq = line.find('=');
    if (!open || eq == std::string::npos)
      throw ConfigError("fault file line " + std::to_string(lineno) +
                        ": expected [[fault]] or key = value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);

    if (key == "step") {
      current.step = std::stoull(value);
    } else if (key == "action") {
      if (value == "crash" || value == "crash_worker")
        current.action = FaultEntry::Action::CrashWorker;
      else if (value == "restart" || value == "restart_worker")
        current.action = FaultEntry::Action::RestartWorker;
      else if (value == "drop" || value == "drop_channel")
        current.action = FaultEntry::Action::DropChannel;
      else
        throw ConfigError("fault file line " + std::to_string(lineno) +
                          ": unknown action " + value);
    } else if (key == "worker") {
      current.worker = std::uint32_t(std::stoul(value));
    } else if (key == "src") {
      current.src = std::uint32_t(std::stoul(value));
    } else if (key == "dst") {
      current.dst = std::uint32_t(std::stoul(value));
    } else {
      throw ConfigError("fault file line " + std::to_string(lineno) +
                        ": unknown key " + key);
    }
  }
  flush();
  return out;
}

inline FaultSchedule load_fault_schedule(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read fault schedule: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_fault_schedule(buf.str());
}

}  // namespace styx
