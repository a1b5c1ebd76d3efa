// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat key = value configuration files and run manifests.
//
//   # comment
//   include = case_a.conf     (resolved relative to the including file)
//   learning_rate = 0.001795
//
// Later assignments override earlier ones, so an include placed first acts as
// a base and one placed last acts as an override.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reentry/checkpoint.hpp"
#include "reentry/csv.hpp"
#include "reentry/error.hpp"

namespace reentry {

inline constexpr const char* kToolVersion = "0.1.0";

using Settings = std::map<std::string, std::string>;

namespace detail {

inline void load_config_into(const std::filesystem::path& path, Settings& out, std::set<std::string>& stack) {
  const auto canonical = std::filesystem::weakly_canonical(path).string();
  if (stack.count(canonical)) throw config_error("IncludeCycle", path.string());
  std::ifstream in(path);
  if (!in) throw input_error("FileNotFound", path.string());
  stack.insert(canonical);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = csv::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("MalformedConfig", path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = csv::trim(t.substr(0, eq));
    const std::string value = csv::trim(t.substr(eq + 1));
    if (key.empty()) throw config_error("MalformedConfig", path.string() + ":" + std::to_string(lineno) + ": empty key");
    if (key == "include") {
      load_config_into(path.parent_path() / value, out, stack);
    } else {
      out[key] = value;
    }
  }
  stack.erase(canonical);
}

}  // namespace detail

inline Settings load_config(const std::string& path) {
  Settings s;
  std::set<std::string> stack;
  detail::load_config_into(path, s, stack);
  return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("FileNotFound", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return "fnv1a64:" + hex64(fnv1a64(ss.str()));
}

/// Digest of the resolved settings in key order.
inline std::string settings_digest(const Settings& s) {
  std::string canon;
  for (const auto& [k, v] : s) canon += k + "=" + v + "\n";
  return "fnv1a64:" + hex64(fnv1a64(canon));
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  Settings settings;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["arguments"] = arguments;
    j["settings"] = settings;
    j["config_hash"] = settings_digest(settings);
    j["seed"] = seed;
    j["tool_version"] = kToolVersion;
    auto digests = [](const std::vector<std::string>& paths) {
      nlohmann::json a = nlohmann::json::array();
      for (const auto& p : paths) a.push_back({{"path", p}, {"digest", file_digest(p)}});
      return a;
    };
    j["inputs"] = digests(inputs);
    j["outputs"] = digests(outputs);
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    return j;
  }

  void write(const std::string& path) const { write_file_atomic(path, to_json().dump(2) + "\n"); }
};

}  // namespace reentry
