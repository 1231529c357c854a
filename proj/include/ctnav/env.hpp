#pragma once

#include <string>
#include <vector>

#include "ctnav/json_util.hpp"
#include "ctnav/robot.hpp"
#include "ctnav/world.hpp"

namespace ctnav {

// Episode semantics for one robot/world family: kinematics, sensing source,
// success radius, horizon and reward shaping.
struct EnvSpec {
    RobotKind robot = RobotKind::kDiffDrive;
    DiffDriveParams diffdrive;
    PointParams point;
    int lidar_rays = 72;
    double lidar_range = 1.0;
    double window_side = 2.0;
    std::string obs_source = "lidar";  // "lidar" (scan projection) | "world" (ground truth)
    double success_eps = 0.3;
    double collision_penalty = -1.0;
    int horizon = 200;

    int action_dim() const { return 2; }
    int proprio_dim() const { return robot == RobotKind::kDiffDrive ? 2 : 0; }
    double footprint_radius() const {
        return robot == RobotKind::kDiffDrive ? diffdrive.footprint_radius
                                              : point.footprint_radius;
    }
    double dt() const { return robot == RobotKind::kDiffDrive ? diffdrive.dt : point.dt; }
    std::vector<double> action_scale() const {
        if (robot == RobotKind::kDiffDrive) return {diffdrive.v_max, diffdrive.omega_max};
        return {point.v_max, point.v_max};
    }

    Json to_json() const;
    static EnvSpec from_json(const Json& j);
};

struct Observation {
    std::vector<double> proprio;
    OccupancyMap occ;
    Point2 goal_delta;  // world-frame x_g - x_t
};

Observation observe(const EnvSpec& env, const World& w, const RobotState& s, Point2 goal);

struct EnvStepResult {
    RobotState state;
    bool collided = false;
    std::vector<double> applied_action;  // after clamping
};

// action layout: diffdrive (V, omega), point (vx, vy)
EnvStepResult env_step(const EnvSpec& env, const RobotState& s,
                       const std::vector<double>& action, const World& w);

RobotState make_start_state(const EnvSpec& env, Point2 start, double psi);

// the known low-level controller for the family
std::vector<double> controller_action(const EnvSpec& env, const RobotState& s, Point2 target,
                                      const ControllerGains& gains);

}  // namespace ctnav
