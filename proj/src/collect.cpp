#include "ctnav/collect.hpp"

#include <deque>
#include <map>
#include <memory>
#include <mutex>

#include <omp.h>

namespace ctnav {

Json CollectConfig::to_json() const {
    return Json{{"trajectories", trajectories},
                {"reset_interval", reset_interval},
                {"prm", prm.to_json()},
                {"seed", seed},
                {"success_floor", success_floor},
                {"probe_attempts", probe_attempts},
                {"min_graph_separation", min_graph_separation},
                {"reach_eps", reach_eps},
                {"replan_each_step", replan_each_step},
                {"k_v", gains.k_v},
                {"k_omega", gains.k_omega}};
}

CollectConfig CollectConfig::from_json(const Json& j) {
    CollectConfig c;
    c.trajectories = j.value("trajectories", c.trajectories);
    c.reset_interval = j.value("reset_interval", c.reset_interval);
    if (j.contains("prm")) c.prm = PrmConfig::from_json(j["prm"]);
    c.seed = j.value("seed", c.seed);
    c.success_floor = j.value("success_floor", c.success_floor);
    c.probe_attempts = j.value("probe_attempts", c.probe_attempts);
    c.min_graph_separation = j.value("min_graph_separation", c.min_graph_separation);
    c.reach_eps = j.value("reach_eps", c.reach_eps);
    c.replan_each_step = j.value("replan_each_step", c.replan_each_step);
    c.gains.k_v = j.value("k_v", c.gains.k_v);
    c.gains.k_omega = j.value("k_omega", c.gains.k_omega);
    if (c.trajectories < 1) throw ConfigError("collect: trajectories must be >= 1");
    if (c.reset_interval < 1) throw ConfigError("collect: reset_interval must be >= 1");
    return c;
}

WorldSource WorldSource::from_template(WorldTemplate t) {
    WorldSource s;
    s.tmpl = std::move(t);
    return s;
}

WorldSource WorldSource::from_worlds(std::vector<World> worlds) {
    if (worlds.empty()) throw ConfigError("world source needs at least one world");
    WorldSource s;
    s.fixed = std::move(worlds);
    return s;
}

std::pair<World, std::uint64_t> WorldSource::world_for_block(std::uint64_t seed,
                                                             const std::string& tag,
                                                             long block) const {
    if (tmpl) {
        const std::uint64_t ws = derive_seed(seed, tag + ".world", static_cast<std::uint64_t>(block));
        return {randomize(*tmpl, ws), ws};
    }
    const std::size_t idx = static_cast<std::size_t>(block) % fixed.size();
    return {fixed[idx], static_cast<std::uint64_t>(idx)};
}

namespace {

// worlds and roadmaps by reset block, shared across collection workers
class WorldCache {
public:
    WorldCache(const WorldSource& source, const CollectConfig& cfg, const std::string& tag)
        : source_(source), cfg_(cfg), tag_(tag) {}

    struct Entry {
        World world;
        PrmGraph prm;
        std::uint64_t world_seed = 0;
    };

    std::shared_ptr<const Entry> block(long b) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = cache_.find(b);
            if (it != cache_.end()) return it->second;
        }
        auto e = std::make_shared<Entry>();
        std::tie(e->world, e->world_seed) = source_.world_for_block(cfg_.seed, tag_, b);
        PrmConfig pc = cfg_.prm;
        pc.seed = derive_seed(cfg_.seed, tag_ + ".prm", static_cast<std::uint64_t>(b));
        e->prm = build_prm(e->world, pc);
        std::lock_guard<std::mutex> lock(mu_);
        auto [it, inserted] = cache_.emplace(b, std::move(e));
        return it->second;
    }

private:
    WorldSource source_;
    CollectConfig cfg_;
    std::string tag_;
    std::mutex mu_;
    std::map<long, std::shared_ptr<const Entry>> cache_;
};

// hop distances from a source vertex (unweighted BFS)
std::vector<int> hop_distances(const PrmGraph& g, int s) {
    std::vector<int> d(static_cast<std::size_t>(g.size()), -1);
    std::deque<int> q{s};
    d[static_cast<std::size_t>(s)] = 0;
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (const PrmEdge& e : g.adjacency[static_cast<std::size_t>(u)]) {
            if (d[static_cast<std::size_t>(e.to)] < 0) {
                d[static_cast<std::size_t>(e.to)] = d[static_cast<std::size_t>(u)] + 1;
                q.push_back(e.to);
            }
        }
    }
    return d;
}

struct EpisodeTask {
    int start_vertex = -1;
    int goal_vertex = -1;
    double psi0 = 0.0;
    bool valid = false;
};

// start/goal are roadmap vertices at least min_graph_separation edges apart
EpisodeTask sample_task(const PrmGraph& g, const CollectConfig& cfg, Rng& rng) {
    EpisodeTask task;
    for (int attempt = 0; attempt < 20 && !task.valid; ++attempt) {
        const int s = static_cast<int>(rng.uniform_int(0, g.size() - 1));
        const std::vector<int> hops = hop_distances(g, s);
        std::vector<int> candidates;
        for (int v = 0; v < g.size(); ++v)
            if (hops[static_cast<std::size_t>(v)] >= cfg.min_graph_separation)
                candidates.push_back(v);
        if (candidates.empty()) continue;
        const int t = candidates[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
        task.start_vertex = s;
        task.goal_vertex = t;
        task.psi0 = rng.uniform(-kPi, kPi);
        task.valid = true;
    }
    return task;
}

}  // namespace

bool controller_episode(const EnvSpec& env, const World& w, const PrmGraph& prm, Plan plan,
                        const RobotState& start_state, Point2 goal, const CollectConfig& cfg,
                        Trajectory& out, int max_steps) {
    RobotState state = start_state;
    out.robot = env.robot;
    out.window_side = env.window_side;
    out.goal = goal;
    if (out.poses.empty()) {
        out.start = state.pose.position();
        out.poses.push_back(state.pose);
    }
    if (out.plan_waypoints.empty()) out.plan_waypoints = plan.waypoints;

    bool success = false;
    for (int t = 0; t < max_steps; ++t) {
        if (cfg.replan_each_step) {
            std::optional<Plan> re = plan_route(prm, state.pose.position(), goal);
            if (re) plan = *re;
        }
        const Point2 target = advance_plan(plan, state.pose.position(), cfg.reach_eps);
        const Observation obs = observe(env, w, state, goal);
        const std::vector<double> action = controller_action(env, state, target, cfg.gains);
        const EnvStepResult step = env_step(env, state, action, w);

        Transition tr;
        tr.proprio = obs.proprio;
        tr.occ.obstacle = OccBits::pack(obs.occ.obstacle);
        tr.occ.goal = OccBits::pack(obs.occ.goal);
        tr.goal_delta = obs.goal_delta;
        tr.action = step.applied_action;
        tr.collided = step.collided;
        tr.reward = reward(step.state.pose.position(), goal, step.collided,
                           env.collision_penalty);
        out.transitions.push_back(std::move(tr));
        out.poses.push_back(step.state.pose);
        if (step.collided) ++out.collided_steps;

        state = step.state;
        if (dist(state.pose.position(), goal) < env.success_eps) {
            success = true;
            break;
        }
    }
    if (!out.transitions.empty()) populate_rtg(out);
    return success;
}

std::vector<Trajectory> collect_planner_trajectories(const EnvSpec& env, const CollectConfig& cfg,
                                                     const WorldTemplate& tmpl) {
    return collect_planner_trajectories(env, cfg, WorldSource::from_template(tmpl));
}

std::vector<Trajectory> collect_planner_trajectories(const EnvSpec& env, const CollectConfig& cfg,
                                                     const WorldSource& source) {
    WorldCache cache(source, cfg, "collect");
    std::vector<Trajectory> kept;
    kept.reserve(static_cast<std::size_t>(cfg.trajectories));
    long attempt = 0;
    long successes = 0;
    while (successes < cfg.trajectories) {
        const long block = attempt / cfg.reset_interval;
        const auto entry = cache.block(block);
        Rng rng(derive_seed(cfg.seed, "collect.episode", static_cast<std::uint64_t>(attempt)));
        ++attempt;

        if (attempt > cfg.probe_attempts &&
            static_cast<double>(successes) / static_cast<double>(attempt) < cfg.success_floor) {
            throw RuntimeFailure(
                "collect: success rate below floor; template looks impossible for this robot");
        }

        const EpisodeTask task = sample_task(entry->prm, cfg, rng);
        if (!task.valid) continue;
        std::optional<Plan> plan =
            shortest_path(entry->prm, task.start_vertex, task.goal_vertex);
        if (!plan) continue;

        const Point2 start = entry->prm.vertices[static_cast<std::size_t>(task.start_vertex)];
        const Point2 goal = entry->prm.vertices[static_cast<std::size_t>(task.goal_vertex)];
        Trajectory traj;
        traj.world_seed = entry->world_seed;
        traj.label = TrajLabel::kPlanner;
        const RobotState s0 = make_start_state(env, start, task.psi0);
        const bool ok = controller_episode(env, entry->world, entry->prm, *plan, s0, goal, cfg,
                                           traj, env.horizon);
        if (!ok || traj.transitions.empty()) continue;  // Alg. stores successes only
        kept.push_back(std::move(traj));
        ++successes;
    }
    return kept;
}

RecoveryBatch collect_recoveries(const ct::ConditionedPolicy& policy, const EnvSpec& env,
                                 const CollectConfig& cfg, const WorldTemplate& tmpl,
                                 const FailureConfig& detector, int t_rec) {
    return collect_recoveries(policy, env, cfg, WorldSource::from_template(tmpl), detector, t_rec);
}

RecoveryBatch collect_recoveries(const ct::ConditionedPolicy& policy, const EnvSpec& env,
                                 const CollectConfig& cfg, const WorldSource& source,
                                 const FailureConfig& detector, int t_rec) {
    if (!policy.model) throw RuntimeFailure("collect_recoveries: policy has no model");
    WorldCache cache(source, cfg, "recover");
    RecoveryBatch batch;

    struct AttemptResult {
        bool has_pair = false;
        Trajectory fail;
        Trajectory recovery;
    };

    const long max_attempts = std::max<long>(200, 50L * t_rec);
    const int block_size = std::max(2 * omp_get_max_threads(), 4);
    long attempt_base = 0;
    while (static_cast<int>(batch.fails.size()) < t_rec) {
        if (attempt_base >= max_attempts) {
            throw RuntimeFailure(
                "collect_recoveries: attempt budget exhausted (policy rarely fails or recoveries "
                "rarely succeed)");
        }
        const int n = static_cast<int>(
            std::min<long>(block_size, max_attempts - attempt_base));
        std::vector<AttemptResult> results(static_cast<std::size_t>(n));

        // attempts are deterministic in their index, so a parallel block merged
        // in index order yields the same pairs as a serial loop
#pragma omp parallel for schedule(dynamic) if (n > 1)
        for (int i = 0; i < n; ++i) {
            const long attempt = attempt_base + i;
            const long block = attempt / cfg.reset_interval;
            const auto entry = cache.block(block);
            Rng rng(derive_seed(cfg.seed, "recover.episode", static_cast<std::uint64_t>(attempt)));
            const EpisodeTask task = sample_task(entry->prm, cfg, rng);
            if (!task.valid) continue;
            const Point2 start =
                entry->prm.vertices[static_cast<std::size_t>(task.start_vertex)];
            const Point2 goal = entry->prm.vertices[static_cast<std::size_t>(task.goal_vertex)];

            Trajectory fail;
            fail.world_seed = entry->world_seed;
            fail.label = TrajLabel::kFail;
            ct::RolloutOptions opts;
            opts.detect_failures = true;
            opts.failure = detector;
            opts.heading_seed =
                derive_seed(cfg.seed, "recover.heading", static_cast<std::uint64_t>(attempt));
            opts.record = &fail;
            const ct::RolloutReport rep =
                ct::rollout_conditioned(policy, env, entry->world, start, goal, opts);
            if (!rep.failure_detected || fail.transitions.empty()) continue;

            const int used = static_cast<int>(fail.transitions.size());
            const int budget = env.horizon - used;
            if (budget <= 0) continue;

            // planner-guided takeover from the failure state to the goal
            const Pose2 fail_pose = fail.poses.back();
            std::optional<Plan> plan =
                plan_route(entry->prm, {fail_pose.x, fail_pose.y}, goal);
            if (!plan) continue;
            Trajectory recovery;
            recovery.world_seed = entry->world_seed;
            recovery.label = TrajLabel::kRecovery;
            RobotState takeover;
            takeover.kind = env.robot;
            takeover.pose = fail_pose;
            const bool ok = controller_episode(env, entry->world, entry->prm, *plan, takeover,
                                               goal, cfg, recovery, budget);
            if (!ok || recovery.transitions.empty()) continue;

            AttemptResult& r = results[static_cast<std::size_t>(i)];
            r.has_pair = true;
            r.fail = std::move(fail);
            r.recovery = std::move(recovery);
        }

        for (int i = 0; i < n && static_cast<int>(batch.fails.size()) < t_rec; ++i) {
            AttemptResult& r = results[static_cast<std::size_t>(i)];
            if (!r.has_pair) continue;
            batch.fails.push_back(std::move(r.fail));
            batch.recoveries.push_back(std::move(r.recovery));
        }
        attempt_base += n;
    }
    return batch;
}

}  // namespace ctnav
