#include "gmmddpm/kv_document.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"

namespace gmmddpm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

// Drops a trailing comment, ignoring '#' inside double-quoted strings.
std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (c == '\\' && quoted) {
      ++i;
    } else if (c == '"') {
      quoted = !quoted;
    } else if (c == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

}  // namespace

KvDocument KvDocument::parse(std::string_view text) {
  KvDocument doc;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    ++line_no;
    const std::string_view raw = trim(strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    if (raw.empty()) continue;
    const std::size_t eq = raw.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: expected `key = value`", line_no));
    }
    const std::string key(trim(raw.substr(0, eq)));
    const std::string_view value_text = trim(raw.substr(eq + 1));
    if (!valid_key(key)) throw Error(ErrorCode::kParseError, fmt::format("line {}: invalid key `{}`", line_no, key));
    if (doc.contains(key)) {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: duplicate key `{}`", line_no, key));
    }
    if (value_text.empty()) {
      throw Error(ErrorCode::kParseError, fmt::format("line {}: missing value for `{}`", line_no, key));
    }
    nlohmann::json value = nlohmann::json::parse(value_text, nullptr, false);
    if (value.is_discarded()) {
      const char first = value_text.front();
      if (first == '[' || first == '{' || first == '"') {
        throw Error(ErrorCode::kParseError, fmt::format("line {}: malformed value for `{}`", line_no, key));
      }
      value = std::string(value_text);
    }
    doc.entries_.push_back({key, std::move(value), line_no});
  }
  return doc;
}

const KvEntry* KvDocument::find(std::string_view key) const {
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const KvEntry& e) { return e.key == key; });
  return it == entries_.end() ? nullptr : &*it;
}

void KvDocument::set(std::string key, nlohmann::json value) {
  for (auto& e : entries_) {
    if (e.key == key) {
      e.value = std::move(value);
      return;
    }
  }
  entries_.push_back({std::move(key), std::move(value), 0});
}

std::string KvDocument::serialize() const {
  std::string out;
  for (const auto& e : entries_) out += fmt::format("{} = {}\n", e.key, e.value.dump());
  return out;
}

KvDocument read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, fmt::format("cannot open `{}`", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  return KvDocument::parse(buf.str());
}

}  // namespace gmmddpm
