#pragma once

#include <nlohmann/json.hpp>

#include <initializer_list>
#include <string>
#include <string_view>

namespace csbm {

using Json = nlohmann::json;

enum class ConfigFormat { kAuto, kJson, kToml };

// Parses TOML or JSON text into a JSON tree. kAuto picks JSON when the first
// non-blank character is '{' or '[' and TOML otherwise.
Json parse_config_text(std::string_view text, ConfigFormat format = ConfigFormat::kAuto);
// Format is taken from the extension (.json / .toml), falling back to kAuto.
Json load_config_file(const std::string& path);

// Throws a config error naming the first key of `object` not in `allowed`.
void reject_unknown_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                         std::string_view where);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace csbm
