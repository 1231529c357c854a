#pragma once

#include <string>

#include "ctnav/json_util.hpp"
#include "ctnav/nn/params.hpp"

namespace ctnav::nn {

// Container format: magic "CTCKPT01", u64 little-endian header length, JSON
// header (names in store order, shapes, dtype, step, config echo + hash),
// then the float32 payloads concatenated in header order. Round-trips are
// bit-exact.
inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'C', 'K', 'P', 'T', '0', '1'};

struct Checkpoint {
    ParamStore params;
    long step = 0;
    Json config;
    std::string config_hash_value;
};

void save_checkpoint(const std::string& path, const ParamStore& params, long step,
                     const Json& config);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctnav::nn
