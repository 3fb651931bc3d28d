#include "csbm/config.hpp"

#include "csbm/common.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <fstream>
#include <sstream>

namespace csbm {
namespace {

Json toml_to_json(const toml::node& node) {
  if (const auto* table = node.as_table()) {
    Json out = Json::object();
    for (const auto& [key, value] : *table) out[std::string(key.str())] = toml_to_json(value);
    return out;
  }
  if (const auto* array = node.as_array()) {
    Json out = Json::array();
    for (const auto& value : *array) out.push_back(toml_to_json(value));
    return out;
  }
  if (const auto* v = node.as_integer()) return Json(v->get());
  if (const auto* v = node.as_floating_point()) return Json(v->get());
  if (const auto* v = node.as_boolean()) return Json(v->get());
  if (const auto* v = node.as_string()) return Json(v->get());
  fail(ErrorKind::kConfig, "unsupported TOML value type (dates and times are not accepted)");
}

bool looks_like_json(std::string_view text) {
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
    return c == '{' || c == '[';
  }
  return false;
}

}  // namespace

Json parse_config_text(std::string_view text, ConfigFormat format) {
  if (format == ConfigFormat::kAuto)
    format = looks_like_json(text) ? ConfigFormat::kJson : ConfigFormat::kToml;
  if (format == ConfigFormat::kJson) {
    try {
      return Json::parse(text);
    } catch (const Json::exception& e) {
      fail(ErrorKind::kConfig, std::string("invalid JSON: ") + e.what());
    }
  }
  try {
    toml::table table = toml::parse(text);
    return toml_to_json(table);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "invalid TOML: " << e.description() << " (line " << e.source().begin.line << ")";
    fail(ErrorKind::kConfig, msg.str());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path);
}

Json load_config_file(const std::string& path) {
  ConfigFormat format = ConfigFormat::kAuto;
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() &&
           std::string_view(path).substr(path.size() - suffix.size()) == suffix;
  };
  if (ends_with(".json")) format = ConfigFormat::kJson;
  if (ends_with(".toml")) format = ConfigFormat::kToml;
  return parse_config_text(read_text_file(path), format);
}

void reject_unknown_keys(const Json& object, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  if (!object.is_object()) fail(ErrorKind::kConfig, std::string(where) + ": expected a table/object");
  for (const auto& item : object.items()) {
    bool known = false;
    for (auto key : allowed) known = known || item.key() == key;
    if (!known) fail(ErrorKind::kConfig, std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

}  // namespace csbm
