#pragma once

#include <string>
#include <vector>

#include "ctnav/traj.hpp"

namespace ctnav {

struct Dataset {
    std::vector<Trajectory> trajectories;

    std::size_t size() const { return trajectories.size(); }
    std::uint64_t total_transitions() const {
        std::uint64_t n = 0;
        for (const Trajectory& t : trajectories) n += t.size();
        return n;
    }
};

// canonical format: one JSON object per line, occupancy channels RLE-encoded,
// doubles at full precision. Field names are frozen (see README).
void save_dataset_jsonl(const std::string& path, const Dataset& ds);
Dataset load_dataset_jsonl(const std::string& path);

Json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const Json& j);

// packed little-endian float32 export with a JSON index alongside
void save_dataset_binary(const std::string& bin_path, const std::string& index_path,
                         const Dataset& ds);
Dataset load_dataset_binary(const std::string& bin_path, const std::string& index_path);

}  // namespace ctnav
