#include "ctnav/env.hpp"

namespace ctnav {

Json EnvSpec::to_json() const {
    return Json{{"robot", robot_kind_name(robot)},
                {"diffdrive", diffdrive.to_json()},
                {"point", point.to_json()},
                {"lidar_rays", lidar_rays},
                {"lidar_range", lidar_range},
                {"window_side", window_side},
                {"obs_source", obs_source},
                {"success_eps", success_eps},
                {"collision_penalty", collision_penalty},
                {"horizon", horizon}};
}

EnvSpec EnvSpec::from_json(const Json& j) {
    EnvSpec e;
    if (j.contains("robot")) e.robot = robot_kind_from_name(j["robot"].get<std::string>());
    if (j.contains("diffdrive")) e.diffdrive = DiffDriveParams::from_json(j["diffdrive"]);
    if (j.contains("point")) e.point = PointParams::from_json(j["point"]);
    e.lidar_rays = j.value("lidar_rays", e.lidar_rays);
    e.lidar_range = j.value("lidar_range", e.lidar_range);
    e.window_side = j.value("window_side", e.window_side);
    e.obs_source = j.value("obs_source", e.obs_source);
    e.success_eps = j.value("success_eps", e.success_eps);
    e.collision_penalty = j.value("collision_penalty", e.collision_penalty);
    e.horizon = j.value("horizon", e.horizon);
    if (e.obs_source != "lidar" && e.obs_source != "world")
        throw ConfigError("env: obs_source must be lidar or world");
    if (e.success_eps <= 0.0 || e.horizon < 1) throw ConfigError("env: bad eps/horizon");
    if (e.collision_penalty > 0.0) throw ConfigError("env: collision_penalty must be <= 0");
    return e;
}

Observation observe(const EnvSpec& env, const World& w, const RobotState& s, Point2 goal) {
    Observation obs;
    obs.proprio = proprio_state(s, goal);
    obs.goal_delta = goal - s.pose.position();
    if (env.obs_source == "lidar") {
        const LidarScan scan = raycast(w, s.pose, env.lidar_rays, env.lidar_range);
        obs.occ = occupancy_window(scan, s.pose, goal, env.window_side);
    } else {
        obs.occ = occupancy_window(w, s.pose, goal, env.window_side);
    }
    return obs;
}

EnvStepResult env_step(const EnvSpec& env, const RobotState& s,
                       const std::vector<double>& action, const World& w) {
    if (action.size() != 2) throw RuntimeFailure("env_step: action must have two entries");
    EnvStepResult out;
    if (s.kind == RobotKind::kDiffDrive) {
        const double v = std::clamp(action[0], -env.diffdrive.v_max, env.diffdrive.v_max);
        const double omega =
            std::clamp(action[1], -env.diffdrive.omega_max, env.diffdrive.omega_max);
        const StepResult r = step_diffdrive(s, {v, omega}, env.diffdrive, w);
        out.state = r.state;
        out.collided = r.collided;
        out.applied_action = {v, omega};
    } else {
        Point2 vel{action[0], action[1]};
        const double speed = norm(vel);
        if (speed > env.point.v_max) vel = (env.point.v_max / speed) * vel;
        const StepResult r = step_point(s, vel, env.point, w);
        out.state = r.state;
        out.collided = r.collided;
        out.applied_action = {vel.x, vel.y};
    }
    return out;
}

RobotState make_start_state(const EnvSpec& env, Point2 start, double psi) {
    RobotState s;
    s.kind = env.robot;
    s.pose = {start.x, start.y, env.robot == RobotKind::kDiffDrive ? wrap_angle(psi) : 0.0};
    return s;
}

std::vector<double> controller_action(const EnvSpec& env, const RobotState& s, Point2 target,
                                      const ControllerGains& gains) {
    if (env.robot == RobotKind::kDiffDrive) {
        const DiffDriveCommand cmd = proportional_controller(s, target, gains, env.diffdrive);
        return {cmd.v, cmd.omega};
    }
    const Point2 v = point_controller(s, target, gains.k_v, env.point.v_max);
    return {v.x, v.y};
}

}  // namespace ctnav
