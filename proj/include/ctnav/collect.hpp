#pragma once

#include "ctnav/ct/rollout.hpp"
#include "ctnav/env.hpp"
#include "ctnav/planner.hpp"
#include "ctnav/traj.hpp"

namespace ctnav {

struct CollectConfig {
    int trajectories = 200;      // T, successes to keep
    int reset_interval = 25;     // L, episodes per world
    PrmConfig prm;
    std::uint64_t seed = 0;
    double success_floor = 0.01; // abort when the probe success rate drops below this
    int probe_attempts = 200;
    int min_graph_separation = 2;  // edges between start and goal vertices
    double reach_eps = 0.15;       // waypoint-reached radius
    bool replan_each_step = false; // fixed plan by default; flag re-plans every step
    ControllerGains gains;

    Json to_json() const;
    static CollectConfig from_json(const Json& j);
};

// where episodes come from: a randomized template, or a fixed world list
// cycled per reset block (the roadmap is still resampled every block)
struct WorldSource {
    std::optional<WorldTemplate> tmpl;
    std::vector<World> fixed;

    static WorldSource from_template(WorldTemplate t);
    static WorldSource from_worlds(std::vector<World> worlds);

    // deterministic in (source, collection seed, block index)
    std::pair<World, std::uint64_t> world_for_block(std::uint64_t seed, const std::string& tag,
                                                    long block) const;
};

// one controller-driven episode following a PRM plan; transitions relabeled
// toward the final goal; returns true when the episode ended within eps
bool controller_episode(const EnvSpec& env, const World& w, const PrmGraph& prm, Plan plan,
                        const RobotState& start_state, Point2 goal, const CollectConfig& cfg,
                        Trajectory& out, int max_steps);

// Alg.-style planner-guided collection: returns exactly cfg.trajectories
// success-filtered trajectories; the world and roadmap re-randomize every
// reset_interval episodes
std::vector<Trajectory> collect_planner_trajectories(const EnvSpec& env, const CollectConfig& cfg,
                                                     const WorldSource& source);

std::vector<Trajectory> collect_planner_trajectories(const EnvSpec& env, const CollectConfig& cfg,
                                                     const WorldTemplate& tmpl);

struct RecoveryBatch {
    std::vector<Trajectory> fails;
    std::vector<Trajectory> recoveries;
};

// Roll the policy until the failure detector fires, then let the planner-guided
// controller take over; pairs are kept only when the takeover reaches the goal
// within the episode budget. Throws after the attempt budget when the policy
// never fails (or recoveries never succeed).
RecoveryBatch collect_recoveries(const ct::ConditionedPolicy& policy, const EnvSpec& env,
                                 const CollectConfig& cfg, const WorldSource& source,
                                 const FailureConfig& detector, int t_rec);

RecoveryBatch collect_recoveries(const ct::ConditionedPolicy& policy, const EnvSpec& env,
                                 const CollectConfig& cfg, const WorldTemplate& tmpl,
                                 const FailureConfig& detector, int t_rec);

}  // namespace ctnav
