#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "json.hpp"
#include "predbias/error.hpp"

namespace predbias {

using Json = nlohmann::ordered_json;

/// 64-bit FNV-1a over raw bytes, rendered as 16 lowercase hex digits.
inline std::string content_digest(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string file_digest(const std::filesystem::path& path) {
  return content_digest(read_file(path));
}

/// Canonical text of a JSON document: 2-space indent, trailing newline.
/// nlohmann prints doubles with the shortest round-trip representation.
inline std::string dump_document(const Json& doc) { return doc.dump(2) + "\n"; }

/// Writes bytes to path. An existing file is left untouched when its content
/// already matches; a differing file is never overwritten.
inline void write_artifact(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (fs::exists(path)) {
    if (read_file(path) == bytes) return;
    throw IoError("refusing to overwrite existing artifact with different content: " +
                  path.string());
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

/// Plain overwrite-allowed write used by library-level save functions.
inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

inline Json parse_document(std::string_view text, const std::string& source) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source, 1, e.what());
  }
}

inline Json read_document(const std::filesystem::path& path) {
  return parse_document(read_file(path), path.string());
}

/// Field access that reports the missing or mistyped key by name.
template <typename T>
T require_field(const Json& doc, std::string_view key, const std::string& source) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw ConfigError(source + ": missing field '" + std::string(key) + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(source + ": field '" + std::string(key) + "' has the wrong type");
  }
}

}  // namespace predbias
