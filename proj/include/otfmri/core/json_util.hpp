#pragma once

#include <algorithm>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include "json.hpp"
#include "otfmri/core/binary_io.hpp"
#include "otfmri/core/error.hpp"

namespace otfmri {

using json = nlohmann::json;

namespace jsonutil {

// Rejects any key not listed in `allowed` and any missing key from `required`.
template <class Err = DataError>
void check_keys(const json& j, std::initializer_list<std::string_view> required,
                std::initializer_list<std::string_view> optional, std::string_view context) {
  if (!j.is_object()) throw Err(std::string(context) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    const bool known = std::find(required.begin(), required.end(), key) != required.end() ||
                       std::find(optional.begin(), optional.end(), key) != optional.end();
    if (!known) throw Err(std::string(context) + ": unknown field '" + key + "'");
  }
  for (auto key : required)
    if (!j.contains(key)) throw Err(std::string(context) + ": missing field '" + std::string(key) + "'");
}

template <class T, class Err = DataError>
T get(const json& j, std::string_view key, std::string_view context) {
  try {
    return j.at(std::string(key)).get<T>();
  } catch (const json::exception& e) {
    throw Err(std::string(context) + ": bad field '" + std::string(key) + "': " + e.what());
  }
}

template <class Err = DataError>
json parse(std::string_view text, std::string_view context) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Err(std::string(context) + ": invalid JSON: " + e.what());
  }
}

template <class Err = DataError>
json load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Err("file not found: " + path.string());
  return parse<Err>(io::read_text(path), path.string());
}

inline void save(const std::filesystem::path& path, const json& j) { io::write_text(path, j.dump(2) + "\n"); }

}  // namespace jsonutil
}  // namespace otfmri
