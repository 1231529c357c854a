#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctnav/geom.hpp"
#include "ctnav/robot.hpp"
#include "ctnav/world.hpp"

namespace ctnav {

// occupancy channel packed to bits for in-memory datasets
struct OccBits {
    std::array<std::uint64_t, 10> words{};

    void set(int i) { words[static_cast<std::size_t>(i >> 6)] |= 1ull << (i & 63); }
    bool get(int i) const {
        return (words[static_cast<std::size_t>(i >> 6)] >> (i & 63)) & 1ull;
    }
    bool operator==(const OccBits&) const = default;

    static OccBits pack(const std::array<float, kOccCells>& cells);
    void unpack(float* out) const;  // kOccCells floats

    std::vector<int> to_rle() const;
    static OccBits from_rle(const std::vector<int>& runs);
};

struct PackedOcc {
    OccBits obstacle;
    OccBits goal;
    bool operator==(const PackedOcc&) const = default;
};

enum class TrajLabel { kPlanner, kFail, kRecovery };

const char* traj_label_name(TrajLabel l);
TrajLabel traj_label_from_name(const std::string& name);

// one executed step: observation before the step, action, reward after it
struct Transition {
    std::vector<double> proprio;
    PackedOcc occ;
    Point2 goal_delta;             // x_g - x_t, recording (world) frame
    std::vector<double> action;
    double reward = 0.0;
    double rtg = 0.0;
    bool collided = false;
};

struct Trajectory {
    std::vector<Transition> transitions;
    std::vector<Pose2> poses;      // length transitions.size() + 1
    std::vector<Point2> plan_waypoints;
    std::uint64_t world_seed = 0;
    Point2 start;
    Point2 goal;
    TrajLabel label = TrajLabel::kPlanner;
    int collided_steps = 0;
    RobotKind robot = RobotKind::kDiffDrive;
    double window_side = 2.0;

    std::size_t size() const { return transitions.size(); }
};

// r = -||x_g - x_next|| plus the collision penalty c (c <= 0) when the step collided
double reward(Point2 x_next, Point2 x_g, bool collided, double c);

// suffix sums, accumulated right to left
std::vector<double> compute_rtg(const std::vector<double>& rewards);

// fills rtg fields of every transition from the stored rewards
void populate_rtg(Trajectory& t);

}  // namespace ctnav
