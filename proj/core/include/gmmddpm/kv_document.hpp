#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace gmmddpm {

// One `key = value` line. Values are JSON when they parse as JSON and plain
// strings otherwise, so `T = [8, 16]` and `placement = simplex` both work.
struct KvEntry {
  std::string key;
  nlohmann::json value;
  std::size_t line = 0;
};

class KvDocument {
 public:
  // Throws ParseError naming the offending line.
  static KvDocument parse(std::string_view text);

  const std::vector<KvEntry>& entries() const noexcept { return entries_; }
  const KvEntry* find(std::string_view key) const;
  bool contains(std::string_view key) const { return find(key) != nullptr; }

  // Replaces an existing value in place or appends a new entry.
  void set(std::string key, nlohmann::json value);

  // One line per entry, values as compact JSON.
  std::string serialize() const;

 private:
  std::vector<KvEntry> entries_;
};

KvDocument read_kv_file(const std::string& path);

}  // namespace gmmddpm
