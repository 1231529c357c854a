#include "ctnav/robot.hpp"

#include <algorithm>
#include <cmath>

namespace ctnav {

const char* robot_kind_name(RobotKind k) {
    return k == RobotKind::kDiffDrive ? "diffdrive" : "point";
}

RobotKind robot_kind_from_name(const std::string& name) {
    if (name == "diffdrive") return RobotKind::kDiffDrive;
    if (name == "point") return RobotKind::kPoint;
    throw ConfigError("unknown robot kind: " + name);
}

Json DiffDriveParams::to_json() const {
    return Json{{"wheel_base", wheel_base},     {"wheel_radius", wheel_radius},
                {"v_max", v_max},               {"omega_max", omega_max},
                {"dt", dt},                     {"footprint_radius", footprint_radius}};
}

DiffDriveParams DiffDriveParams::from_json(const Json& j) {
    DiffDriveParams p;
    p.wheel_base = j.value("wheel_base", p.wheel_base);
    p.wheel_radius = j.value("wheel_radius", p.wheel_radius);
    p.v_max = j.value("v_max", p.v_max);
    p.omega_max = j.value("omega_max", p.omega_max);
    p.dt = j.value("dt", p.dt);
    p.footprint_radius = j.value("footprint_radius", p.footprint_radius);
    if (p.wheel_base <= 0 || p.wheel_radius <= 0 || p.v_max <= 0 || p.omega_max <= 0 ||
        p.dt <= 0 || p.footprint_radius <= 0) {
        throw ConfigError("diffdrive params must all be positive");
    }
    return p;
}

Json PointParams::to_json() const {
    return Json{{"v_max", v_max}, {"dt", dt}, {"footprint_radius", footprint_radius}};
}

PointParams PointParams::from_json(const Json& j) {
    PointParams p;
    p.v_max = j.value("v_max", p.v_max);
    p.dt = j.value("dt", p.dt);
    p.footprint_radius = j.value("footprint_radius", p.footprint_radius);
    if (p.v_max <= 0 || p.dt <= 0 || p.footprint_radius <= 0)
        throw ConfigError("point params must all be positive");
    return p;
}

Json FailureConfig::to_json() const {
    return Json{{"collision_flag", collision_flag},
                {"stall_window", stall_window},
                {"stall_progress", stall_progress}};
}

FailureConfig FailureConfig::from_json(const Json& j) {
    FailureConfig c;
    c.collision_flag = j.value("collision_flag", c.collision_flag);
    c.stall_window = j.value("stall_window", c.stall_window);
    c.stall_progress = j.value("stall_progress", c.stall_progress);
    if (c.stall_window < 1) throw ConfigError("stall_window must be >= 1");
    if (c.stall_progress <= 0) throw ConfigError("stall_progress must be positive");
    return c;
}

std::vector<double> proprio_state(const RobotState& s, Point2 goal) {
    if (s.kind == RobotKind::kPoint) return {};
    const double bearing = std::atan2(goal.y - s.pose.y, goal.x - s.pose.x);
    const double dpsi = wrap_angle(bearing - s.pose.psi);
    return {std::cos(dpsi), std::sin(dpsi)};
}

StepResult step_diffdrive(const RobotState& s, DiffDriveCommand a, const DiffDriveParams& p,
                          const World& w) {
    const double v = std::clamp(a.v, -p.v_max, p.v_max);
    const double omega = std::clamp(a.omega, -p.omega_max, p.omega_max);
    Pose2 next = s.pose;
    next.x += v * std::cos(s.pose.psi) * p.dt;
    next.y += v * std::sin(s.pose.psi) * p.dt;
    next.psi = wrap_angle(s.pose.psi + omega * p.dt);
    if (!point_free(w, {next.x, next.y}, p.footprint_radius)) {
        return {s, true};
    }
    return {{next, s.kind}, false};
}

WheelSpeeds wheel_speeds(double v, double omega, const DiffDriveParams& p) {
    return {(v + omega * (p.wheel_base / 2.0)) / p.wheel_radius,
            (v - omega * (p.wheel_base / 2.0)) / p.wheel_radius};
}

DiffDriveCommand body_command(const WheelSpeeds& ws, const DiffDriveParams& p) {
    return {p.wheel_radius * (ws.right + ws.left) / 2.0,
            p.wheel_radius * (ws.right - ws.left) / p.wheel_base};
}

DiffDriveCommand proportional_controller(const RobotState& s, Point2 target,
                                         const ControllerGains& gains,
                                         const DiffDriveParams& p) {
    const double dx = target.x - s.pose.x;
    const double dy = target.y - s.pose.y;
    const double d = std::sqrt(dx * dx + dy * dy);
    if (d == 0.0) return {0.0, 0.0};
    const double heading_err = wrap_angle(std::atan2(dy, dx) - s.pose.psi);
    // gate forward speed by heading error so the robot turns in place when
    // facing away from the target
    const double v = std::min(gains.k_v * d, p.v_max) * std::max(0.0, std::cos(heading_err));
    const double omega = std::clamp(gains.k_omega * heading_err, -p.omega_max, p.omega_max);
    return {v, omega};
}

StepResult step_point(const RobotState& s, Point2 velocity, const PointParams& p,
                      const World& w) {
    const double speed = norm(velocity);
    if (speed > p.v_max) velocity = (p.v_max / speed) * velocity;
    Pose2 next = s.pose;
    next.x += velocity.x * p.dt;
    next.y += velocity.y * p.dt;
    if (!point_free(w, {next.x, next.y}, p.footprint_radius)) {
        return {s, true};
    }
    return {{next, s.kind}, false};
}

Point2 point_controller(const RobotState& s, Point2 target, double k_v, double v_max) {
    Point2 v{k_v * (target.x - s.pose.x), k_v * (target.y - s.pose.y)};
    const double speed = norm(v);
    if (speed > v_max) v = (v_max / speed) * v;
    return v;
}

bool detect_failure(const std::vector<RolloutStep>& history, const FailureConfig& cfg) {
    if (history.empty()) throw RuntimeFailure("detect_failure: empty history");
    if (cfg.collision_flag && history.back().collided) return true;
    const std::size_t w = static_cast<std::size_t>(cfg.stall_window);
    if (history.size() < w) return false;
    const double before = history[history.size() - w].dist_to_goal;
    const double now = history.back().dist_to_goal;
    return (before - now) < cfg.stall_progress;
}

}  // namespace ctnav
