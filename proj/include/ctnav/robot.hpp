#pragma once

#include <vector>

#include "ctnav/geom.hpp"
#include "ctnav/json_util.hpp"
#include "ctnav/world.hpp"

namespace ctnav {

enum class RobotKind { kDiffDrive, kPoint };

const char* robot_kind_name(RobotKind k);
RobotKind robot_kind_from_name(const std::string& name);

struct DiffDriveParams {
    double wheel_base = 0.16;     // b, meters between wheels
    double wheel_radius = 0.033;  // r, meters
    double v_max = 0.22;          // m/s
    double omega_max = 2.84;      // rad/s
    double dt = 0.1;              // seconds
    double footprint_radius = 0.11;

    Json to_json() const;
    static DiffDriveParams from_json(const Json& j);
};

struct PointParams {
    double v_max = 0.25;
    double dt = 0.1;
    double footprint_radius = 0.11;

    Json to_json() const;
    static PointParams from_json(const Json& j);
};

struct RobotState {
    Pose2 pose;
    RobotKind kind = RobotKind::kDiffDrive;
};

struct DiffDriveCommand {
    double v = 0.0;      // linear velocity, m/s
    double omega = 0.0;  // angular velocity, rad/s
};

struct WheelSpeeds {
    double right = 0.0;  // rad/s
    double left = 0.0;
};

struct StepResult {
    RobotState state;
    bool collided = false;
};

struct ControllerGains {
    double k_v = 1.0;
    double k_omega = 2.0;
};

struct FailureConfig {
    bool collision_flag = true;
    int stall_window = 30;        // W, steps
    double stall_progress = 0.05; // delta_p, meters

    Json to_json() const;
    static FailureConfig from_json(const Json& j);
};

// one entry per executed step of a rollout, consumed by detect_failure
struct RolloutStep {
    Pose2 pose;            // pose after the step
    bool collided = false;
    double dist_to_goal = 0.0;
};

// proprioceptive encoding: unit vector toward the goal relative to heading for
// the differential drive, empty for the point robot
std::vector<double> proprio_state(const RobotState& s, Point2 goal);

// unicycle step with clamped commands; on footprint collision the pose is held
// at the pre-step value and collided is reported
StepResult step_diffdrive(const RobotState& s, DiffDriveCommand a, const DiffDriveParams& p,
                          const World& w);

WheelSpeeds wheel_speeds(double v, double omega, const DiffDriveParams& p);
DiffDriveCommand body_command(const WheelSpeeds& ws, const DiffDriveParams& p);

// proportional waypoint tracker: V from distance (gated by heading error),
// omega from bearing error
DiffDriveCommand proportional_controller(const RobotState& s, Point2 target,
                                         const ControllerGains& gains,
                                         const DiffDriveParams& p);

// velocity command clamped to norm <= v_max; collision semantics as diffdrive
StepResult step_point(const RobotState& s, Point2 velocity, const PointParams& p,
                      const World& w);

Point2 point_controller(const RobotState& s, Point2 target, double k_v, double v_max);

// true when the last step collided (if enabled) or when distance to goal
// decreased by less than stall_progress over the last stall_window steps
bool detect_failure(const std::vector<RolloutStep>& history, const FailureConfig& cfg);

}  // namespace ctnav
