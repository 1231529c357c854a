#include "ctnav/json_util.hpp"

#include <fstream>
#include <sstream>

#include "ctnav/rng.hpp"

namespace ctnav {

Json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    Json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

void save_json_file(const std::string& path, const Json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write file: " + path);
    out << text;
    if (!out) throw RuntimeFailure("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_hash(const Json& j) {
    const std::uint64_t h = fnv1a64(j.dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

void set_by_dotted_path(Json& root, const std::string& dotted, const Json& value) {
    Json* cur = &root;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, next - pos);
        if (key.empty()) throw ConfigError("bad config path: " + dotted);
        if (next == std::string::npos) {
            (*cur)[key] = value;
            return;
        }
        cur = &(*cur)[key];
        pos = next + 1;
    }
}

}  // namespace ctnav
