#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "styx/common.hpp"

namespace styx {

// Durable object store shared by snapshots and the epoch-size logs
// (blob-store stand-in). put() is atomically visible; append() is an
// fsync-per-record log append.
class DurableStore {
 public:
  virtual ~DurableStore() = default;

  virtual void put(const std::string& name, const Bytes& data) = 0;
  virtual std::optional<Bytes> get(const std::string& name) const = 0;
  virtual void remove(const std::string& name) = 0;
  virtual std::vector<std::string> list(const std::string& prefix) const = 0;
  virtual void append(const std::string& name, const Bytes& data) = 0;
};

class MemStore final : public DurableStore {
 public:
  void put(const std::string& name, const Bytes& data) override {
    objects_[name] = data;
  }

  std::optional<Bytes> get(const std::string& name) const override {
    auto it = objects_.find(name);
    if (it == objects_.end()) return std::nullopt;
    return it->second;
  }

  void remove(const std::string& name) override { objects_.erase(name); }

  std::vector<std::string> list(const std::string& prefix) const override {
    std::vector<std::string> out;
    for (auto it = objects_.lower_bound(prefix); it != objects_.end(); ++it) {
      if (it->first.compare(0, prefix.size(), prefix) != 0) break;
      out.push_back(it->first);
    }
    return out;
  }

  void append(const std::string& name, const Bytes& data) override {
    objects_[name] += data;
  }

 private:
  std::map<std::string, Bytes> objects_;
};

class FileStore final : public DurableStore {
 public:
  explicit FileStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_);
  }

  void put(const std::string& name, const Bytes& data) override {
    auto final_path = path_for(name);
    std::filesystem::create_directories(final_path.parent_path());
    auto tmp = final_path;
    tmp += ".tmp";
    write_all(tmp, data);
    std::filesystem::rename(tmp, final_path);  // completion = atomic rename
  }

  std::optional<Bytes> get(const std::string& name) const override {
    auto p = path_for(name);
    std::FILE* f = std::fopen(p.string().c_str(), "rb");
    if (!f) return std::nullopt;
    Bytes data;
    char buf[1 << 16];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, n);
    std::fclose(f);
    return data;
  }

  void remove(const std::string& name) override {
    std::error_code ec;
    std::filesystem::remove(path_for(name), ec);
  }

  std::vector<std::string> list(const std::string& prefix) const override {
    std::vector<std::string> out;
    if (!std::filesystem::exists(root_)) return out;
    for (auto& entry : std::filesystem::recursive_directory_iterator(root_)) {
      if (!entry.is_regular_file()) continue;
      auto rel = std::filesystem::relative(entry.path(), root_).generic_string();
      if (rel.size() >= 4 && rel.substr(rel.size() - 4) == ".tmp") continue;
      if (rel.compare(0, prefix.size(), prefix) == 0) out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void append(const std::string& name, const Bytes& data) override {
    auto p = path_for(name);
    std::filesystem::create_directories(p.parent_path());
    std::FILE* f = std::fopen(p.string().c_str(), "ab");
    if (!f) throw StorageIoError("append: cannot open " + name);
    std::fwrite(data.data(), 1, data.size(), f);
    std::fflush(f);
    std::fclose(f);
  }

 private:
  std::filesystem::path path_for(const std::string& name) const {
    return root_ / name;
  }

  static void write_all(const std::filesystem::path& p, const Bytes& data) {
    std::FILE* f = std::fopen(p.string().c_str(), "wb");
    if (!f) throw StorageIoError("put: cannot open " + p.string());
    std::fwrite(data.data(), 1, data.size(), f);
    std::fflush(f);
    std::fclose(f);
  }

  std::filesystem::path root_;
};

}  // namespace styx
