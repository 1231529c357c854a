#include "ctnav/eval.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace ctnav {

Json EvalProtocol::to_json() const {
    return Json{{"n_envs", n_envs},
                {"goals_per_env", goals_per_env},
                {"seed", seed},
                {"prm", prm.to_json()},
                {"min_graph_separation", min_graph_separation},
                {"max_pair_distance", max_pair_distance}};
}

EvalProtocol EvalProtocol::from_json(const Json& j) {
    EvalProtocol p;
    p.n_envs = j.value("n_envs", p.n_envs);
    p.goals_per_env = j.value("goals_per_env", p.goals_per_env);
    p.seed = j.value("seed", p.seed);
    if (j.contains("prm")) p.prm = PrmConfig::from_json(j["prm"]);
    p.min_graph_separation = j.value("min_graph_separation", p.min_graph_separation);
    p.max_pair_distance = j.value("max_pair_distance", p.max_pair_distance);
    if (p.n_envs < 1 || p.goals_per_env < 1) throw ConfigError("eval: counts must be >= 1");
    return p;
}

Json MethodSummary::to_json() const {
    return Json{{"name", name},
                {"mean_success", mean_success},
                {"stderr_success", stderr_success},
                {"mean_full_success", mean_full_success},
                {"mean_return", mean_return},
                {"collision_episode_rate", collision_episode_rate},
                {"per_seed_success", per_seed_success}};
}

Json EvalSummary::to_json() const {
    Json m = Json::array();
    for (const MethodSummary& s : methods) m.push_back(s.to_json());
    return Json{{"methods", m}, {"episodes_per_seed", episodes_per_seed}};
}

std::string EvalSummary::table() const {
    std::ostringstream out;
    out << "method      success%   stderr   full%    return   collisions%\n";
    for (const MethodSummary& m : methods) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-10s  %7.2f  %7.2f  %6.2f  %8.2f  %10.2f\n",
                      m.name.c_str(), m.mean_success, m.stderr_success, m.mean_full_success,
                      m.mean_return, m.collision_episode_rate);
        out << line;
    }
    return out.str();
}

std::vector<World> make_eval_worlds(const WorldTemplate& tmpl, int count, std::uint64_t seed) {
    std::vector<World> worlds;
    worlds.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        worlds.push_back(randomize(tmpl, derive_seed(seed, "eval.world", static_cast<std::uint64_t>(i))));
    return worlds;
}

namespace {

std::vector<int> hops_from(const PrmGraph& g, int s) {
    std::vector<int> d(static_cast<std::size_t>(g.size()), -1);
    std::deque<int> q{s};
    d[static_cast<std::size_t>(s)] = 0;
    while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (const PrmEdge& e : g.adjacency[static_cast<std::size_t>(u)])
            if (d[static_cast<std::size_t>(e.to)] < 0) {
                d[static_cast<std::size_t>(e.to)] = d[static_cast<std::size_t>(u)] + 1;
                q.push_back(e.to);
            }
    }
    return d;
}

}  // namespace

std::vector<EvalEpisode> sample_eval_episodes(const EvalProtocol& protocol,
                                              const std::vector<World>& worlds) {
    std::vector<EvalEpisode> episodes;
    for (int wi = 0; wi < static_cast<int>(worlds.size()); ++wi) {
        PrmConfig pc = protocol.prm;
        pc.seed = derive_seed(protocol.seed, "eval.prm", static_cast<std::uint64_t>(wi));
        const PrmGraph prm = build_prm(worlds[static_cast<std::size_t>(wi)], pc);
        Rng rng(derive_seed(protocol.seed, "eval.pairs", static_cast<std::uint64_t>(wi)));
        int made = 0;
        int guard = 0;
        while (made < protocol.goals_per_env && guard++ < 200 * protocol.goals_per_env) {
            const int s = static_cast<int>(rng.uniform_int(0, prm.size() - 1));
            const std::vector<int> hops = hops_from(prm, s);
            std::vector<int> candidates;
            for (int v = 0; v < prm.size(); ++v) {
                if (hops[static_cast<std::size_t>(v)] < protocol.min_graph_separation) continue;
                if (protocol.max_pair_distance > 0.0 &&
                    dist(prm.vertices[static_cast<std::size_t>(s)],
                         prm.vertices[static_cast<std::size_t>(v)]) > protocol.max_pair_distance)
                    continue;
                candidates.push_back(v);
            }
            if (candidates.empty()) continue;
            const int t = candidates[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
            EvalEpisode ep;
            ep.world_index = wi;
            ep.start = prm.vertices[static_cast<std::size_t>(s)];
            ep.goal = prm.vertices[static_cast<std::size_t>(t)];
            ep.heading_seed = derive_seed(protocol.seed, "eval.heading",
                                          static_cast<std::uint64_t>(wi) * 100000u +
                                              static_cast<std::uint64_t>(made));
            episodes.push_back(ep);
            ++made;
        }
        if (made < protocol.goals_per_env)
            throw RuntimeFailure("eval: could not sample enough start/goal pairs in world " +
                                 std::to_string(wi));
    }
    return episodes;
}

EvalResult run_eval(const EvalProtocol& protocol, const EnvSpec& env,
                    const std::vector<World>& worlds, const std::vector<EvalMethod>& methods) {
    const std::vector<EvalEpisode> episodes = sample_eval_episodes(protocol, worlds);
    EvalResult result;
    result.summary.episodes_per_seed = static_cast<int>(episodes.size());

    for (const EvalMethod& method : methods) {
        std::vector<std::vector<ct::RolloutReport>> seed_reports;
        MethodSummary summary;
        summary.name = method.name;
        double return_sum = 0.0;
        double full_sum = 0.0;
        double coll_sum = 0.0;
        for (const ct::ConditionedPolicy& policy : method.seeds) {
            std::vector<ct::RolloutReport> reports(episodes.size());
            const int n = static_cast<int>(episodes.size());
            // read-only model, episode-indexed output: parallel order cannot
            // change the result
#pragma omp parallel for schedule(dynamic)
            for (int e = 0; e < n; ++e) {
                const EvalEpisode& ep = episodes[static_cast<std::size_t>(e)];
                ct::RolloutOptions opts;
                opts.heading_seed = ep.heading_seed;
                reports[static_cast<std::size_t>(e)] = ct::rollout_conditioned(
                    policy, env, worlds[static_cast<std::size_t>(ep.world_index)], ep.start,
                    ep.goal, opts);
            }
            int successes = 0;
            int full = 0;
            int collided = 0;
            for (const ct::RolloutReport& r : reports) {
                if (r.success) ++successes;
                if (r.success && r.collisions == 0) ++full;
                if (r.collisions > 0) ++collided;
                return_sum += r.total_return;
            }
            summary.per_seed_success.push_back(100.0 * successes / n);
            full_sum += 100.0 * full / n;
            coll_sum += 100.0 * collided / n;
            seed_reports.push_back(std::move(reports));
        }
        const std::size_t ns = summary.per_seed_success.size();
        double mean = 0.0;
        for (double v : summary.per_seed_success) mean += v;
        mean /= static_cast<double>(ns);
        double var = 0.0;
        for (double v : summary.per_seed_success) var += (v - mean) * (v - mean);
        summary.mean_success = mean;
        summary.stderr_success =
            ns > 1 ? std::sqrt(var / static_cast<double>(ns - 1)) / std::sqrt(static_cast<double>(ns))
                   : 0.0;
        summary.mean_full_success = full_sum / static_cast<double>(ns);
        summary.collision_episode_rate = coll_sum / static_cast<double>(ns);
        summary.mean_return =
            return_sum / static_cast<double>(ns * episodes.size());
        result.summary.methods.push_back(std::move(summary));
        result.reports.push_back(std::move(seed_reports));
    }
    return result;
}

ct::RolloutReport scripted_controller_rollout(const EnvSpec& env, const World& w,
                                              const PrmGraph& prm, Point2 start, Point2 goal,
                                              double reach_eps, const ControllerGains& gains,
                                              std::uint64_t heading_seed) {
    ct::RolloutReport report;
    std::optional<Plan> plan = plan_route(prm, start, goal);
    Rng heading_rng(derive_seed(heading_seed, "rollout.heading", 0));
    RobotState state = make_start_state(env, start, heading_rng.uniform(-kPi, kPi));
    report.path.push_back(state.pose);
    report.final_dist = dist(start, goal);
    if (!plan) return report;
    for (int t = 0; t < env.horizon; ++t) {
        const Point2 target = advance_plan(*plan, state.pose.position(), reach_eps);
        const std::vector<double> action = controller_action(env, state, target, gains);
        const EnvStepResult step = env_step(env, state, action, w);
        const double r =
            reward(step.state.pose.position(), goal, step.collided, env.collision_penalty);
        report.rewards.push_back(r);
        report.rtg_stream.push_back(0.0);
        report.total_return += r;
        if (step.collided) ++report.collisions;
        report.path.push_back(step.state.pose);
        state = step.state;
        report.final_dist = dist(state.pose.position(), goal);
        if (report.final_dist < env.success_eps) {
            report.success = true;
            break;
        }
    }
    return report;
}

}  // namespace ctnav
