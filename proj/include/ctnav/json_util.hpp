#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace ctnav {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RuntimeFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Json load_json_file(const std::string& path);

// writes with sorted keys and a trailing newline; byte-stable across runs
void save_json_file(const std::string& path, const Json& j);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// 16-hex-digit fingerprint of the canonical (sorted-key) dump
std::string config_hash(const Json& j);

// dotted-path access into nested objects, e.g. "train.lr"
void set_by_dotted_path(Json& root, const std::string& dotted, const Json& value);

}  // namespace ctnav
