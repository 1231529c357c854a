#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctnav/ct/rollout.hpp"
#include "ctnav/env.hpp"
#include "ctnav/planner.hpp"

namespace ctnav {

struct EvalEpisode {
    int world_index = 0;
    Point2 start;
    Point2 goal;
    std::uint64_t heading_seed = 0;
};

struct EvalProtocol {
    int n_envs = 20;
    int goals_per_env = 25;
    std::uint64_t seed = 0;
    PrmConfig prm;              // for start/goal pair sampling
    int min_graph_separation = 2;
    double max_pair_distance = 0.0;  // Euclidean cap on sampled pairs; 0 = none

    Json to_json() const;
    static EvalProtocol from_json(const Json& j);
};

// a method under evaluation: one rollout policy per trained model seed
struct EvalMethod {
    std::string name;
    std::vector<ct::ConditionedPolicy> seeds;
};

struct MethodSummary {
    std::string name;
    double mean_success = 0.0;        // percent
    double stderr_success = 0.0;      // over model seeds
    double mean_full_success = 0.0;   // reached goal without any collision
    double mean_return = 0.0;
    double collision_episode_rate = 0.0;  // percent of episodes with >= 1 collision
    std::vector<double> per_seed_success;

    Json to_json() const;
};

struct EvalSummary {
    std::vector<MethodSummary> methods;
    int episodes_per_seed = 0;

    Json to_json() const;
    std::string table() const;
};

struct EvalResult {
    EvalSummary summary;
    // reports[m][s][e]: method m, model seed s, episode e
    std::vector<std::vector<std::vector<ct::RolloutReport>>> reports;
};

// identical (world, start, goal, heading) episodes for every method/seed
std::vector<EvalEpisode> sample_eval_episodes(const EvalProtocol& protocol,
                                              const std::vector<World>& worlds);

EvalResult run_eval(const EvalProtocol& protocol, const EnvSpec& env,
                    const std::vector<World>& worlds, const std::vector<EvalMethod>& methods);

// evaluation worlds from a template (seeds disjoint from any collection stream)
std::vector<World> make_eval_worlds(const WorldTemplate& tmpl, int count, std::uint64_t seed);

// scripted baselines for harness checks
ct::RolloutReport scripted_controller_rollout(const EnvSpec& env, const World& w,
                                              const PrmGraph& prm, Point2 start, Point2 goal,
                                              double reach_eps, const ControllerGains& gains,
                                              std::uint64_t heading_seed);

}  // namespace ctnav
