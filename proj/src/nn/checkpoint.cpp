#include "ctnav/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ctnav::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

void save_checkpoint(const std::string& path, const ParamStore& params, long step,
                     const Json& config) {
    Json header;
    header["dtype"] = "float32";
    header["step"] = step;
    header["config"] = config;
    header["config_hash"] = config_hash(config);
    Json names = Json::array();
    Json shapes = Json::object();
    for (const auto& e : params.entries()) {
        names.push_back(e.name);
        shapes[e.name] = e.value.shape;
    }
    header["names"] = names;
    header["shapes"] = shapes;
    const std::string hdr = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = hdr.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
    for (const auto& e : params.entries()) {
        out.write(reinterpret_cast<const char*>(e.value.data.data()),
                  static_cast<std::streamsize>(e.value.data.size() * sizeof(float)));
    }
    if (!out) throw RuntimeFailure("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw RuntimeFailure("not a checkpoint file (bad magic): " + path);
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string hdr(len, '\0');
    in.read(hdr.data(), static_cast<std::streamsize>(len));
    if (!in) throw RuntimeFailure("truncated checkpoint header: " + path);
    Json header;
    try {
        header = Json::parse(hdr);
    } catch (const std::exception& e) {
        throw RuntimeFailure("bad checkpoint header in " + path + ": " + e.what());
    }
    if (header.value("dtype", "") != "float32")
        throw RuntimeFailure("unsupported checkpoint dtype in " + path);

    Checkpoint ckpt;
    ckpt.step = header.value("step", 0L);
    ckpt.config = header.value("config", Json::object());
    ckpt.config_hash_value = header.value("config_hash", "");
    for (const Json& jn : header.at("names")) {
        const std::string name = jn.get<std::string>();
        std::vector<int> shape = header.at("shapes").at(name).get<std::vector<int>>();
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(float)));
        if (!in) throw RuntimeFailure("truncated checkpoint payload: " + path);
        ckpt.params.add(name, std::move(t));
    }
    return ckpt;
}

}  // namespace ctnav::nn
