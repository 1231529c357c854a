#include "ctnav/ct/rollout.hpp"

#include <deque>

namespace ctnav::ct {
namespace {

struct WindowStep {
    float rtg = 0.0f;                 // scaled token value
    std::vector<float> proprio;
    std::vector<float> goal;
    std::vector<float> occ;           // channel-last floats
    std::vector<float> action;        // scaled, executed
};

WindowStep make_window_step(const CtConfig& cfg, const Observation& obs, double rtg_token) {
    WindowStep s;
    s.rtg = static_cast<float>(rtg_token / cfg.rtg_scale);
    s.proprio.assign(obs.proprio.begin(), obs.proprio.end());
    s.goal = {static_cast<float>(obs.goal_delta.x), static_cast<float>(obs.goal_delta.y)};
    s.occ.resize(static_cast<std::size_t>(kOccCells) * 2);
    for (int i = 0; i < kOccCells; ++i) {
        s.occ[static_cast<std::size_t>(2 * i) + 0] = obs.occ.obstacle[static_cast<std::size_t>(i)];
        s.occ[static_cast<std::size_t>(2 * i) + 1] = obs.occ.goal[static_cast<std::size_t>(i)];
    }
    s.action.assign(static_cast<std::size_t>(cfg.action_dim), 0.0f);
    return s;
}

WindowBatch assemble_window(const CtConfig& cfg, const std::deque<WindowStep>& window) {
    WindowBatch b;
    b.count = 1;
    b.len = static_cast<int>(window.size());
    const int rows = b.len;
    const int pd = cfg.proprio_dim;
    const int ad = cfg.action_dim;
    b.rtg.resize(static_cast<std::size_t>(rows));
    b.proprio.resize(static_cast<std::size_t>(rows) * pd);
    b.goal.resize(static_cast<std::size_t>(rows) * cfg.goal_dim);
    b.occ.resize(static_cast<std::size_t>(rows) * kOccCells * 2);
    b.action_in.resize(static_cast<std::size_t>(rows) * ad);
    b.action_target.assign(static_cast<std::size_t>(rows) * ad, 0.0f);
    for (int t = 0; t < rows; ++t) {
        const WindowStep& s = window[static_cast<std::size_t>(t)];
        b.rtg[static_cast<std::size_t>(t)] = s.rtg;
        std::copy(s.proprio.begin(), s.proprio.end(),
                  b.proprio.begin() + static_cast<std::size_t>(t) * pd);
        std::copy(s.goal.begin(), s.goal.end(),
                  b.goal.begin() + static_cast<std::size_t>(t) * cfg.goal_dim);
        std::copy(s.occ.begin(), s.occ.end(),
                  b.occ.begin() + static_cast<std::size_t>(t) * kOccCells * 2);
        std::copy(s.action.begin(), s.action.end(),
                  b.action_in.begin() + static_cast<std::size_t>(t) * ad);
    }
    return b;
}

}  // namespace

double value_of_state(const ValueNet& net, const Observation& obs) {
    StateBatch batch;
    batch.count = 1;
    batch.proprio.assign(obs.proprio.begin(), obs.proprio.end());
    batch.goal = {static_cast<float>(obs.goal_delta.x), static_cast<float>(obs.goal_delta.y)};
    batch.occ.resize(static_cast<std::size_t>(kOccCells) * 2);
    for (int i = 0; i < kOccCells; ++i) {
        batch.occ[static_cast<std::size_t>(2 * i) + 0] =
            obs.occ.obstacle[static_cast<std::size_t>(i)];
        batch.occ[static_cast<std::size_t>(2 * i) + 1] =
            obs.occ.goal[static_cast<std::size_t>(i)];
    }
    return predict_values(net, batch)[0];
}

RolloutReport rollout_conditioned(const ConditionedPolicy& policy, const EnvSpec& env,
                                  const World& w, Point2 start, Point2 goal,
                                  const RolloutOptions& opts) {
    if (!policy.model) throw RuntimeFailure("rollout: policy has no model");
    const CtConfig& cfg = policy.model->config;
    const int horizon = opts.horizon_override > 0 ? opts.horizon_override : env.horizon;

    Rng heading_rng(derive_seed(opts.heading_seed, "rollout.heading", 0));
    RobotState state = make_start_state(env, start, heading_rng.uniform(-kPi, kPi));

    RolloutReport report;
    report.path.push_back(state.pose);
    if (opts.record) {
        opts.record->poses.push_back(state.pose);
        opts.record->start = start;
        opts.record->goal = goal;
        opts.record->robot = env.robot;
        opts.record->window_side = env.window_side;
    }

    Observation obs = observe(env, w, state, goal);
    double rtg_token = 0.0;
    if (policy.vnet) rtg_token = policy.rule.k * value_of_state(*policy.vnet, obs);

    std::deque<WindowStep> window;
    std::vector<RolloutStep> history;
    report.final_dist = dist(state.pose.position(), goal);

    for (int t = 0; t < horizon; ++t) {
        window.push_back(make_window_step(cfg, obs, rtg_token));
        while (static_cast<int>(window.size()) > cfg.context_eval) window.pop_front();

        const WindowBatch batch = assemble_window(cfg, window);
        const std::vector<double> action = policy.action_override
                                               ? policy.action_override(batch)
                                               : predict_action(*policy.model, batch);
        const EnvStepResult step = env_step(env, state, action, w);

        // the executed (clamped) action enters the context for later steps
        for (int i = 0; i < cfg.action_dim; ++i)
            window.back().action[static_cast<std::size_t>(i)] = static_cast<float>(
                step.applied_action[static_cast<std::size_t>(i)] /
                cfg.action_scale[static_cast<std::size_t>(i)]);

        const double r =
            reward(step.state.pose.position(), goal, step.collided, env.collision_penalty);
        report.rewards.push_back(r);
        report.rtg_stream.push_back(rtg_token);
        report.total_return += r;
        if (step.collided) ++report.collisions;
        report.path.push_back(step.state.pose);

        if (opts.record) {
            Transition tr;
            tr.proprio = obs.proprio;
            tr.occ.obstacle = OccBits::pack(obs.occ.obstacle);
            tr.occ.goal = OccBits::pack(obs.occ.goal);
            tr.goal_delta = obs.goal_delta;
            tr.action = step.applied_action;
            tr.reward = r;
            tr.collided = step.collided;
            opts.record->transitions.push_back(std::move(tr));
            opts.record->poses.push_back(step.state.pose);
            if (step.collided) ++opts.record->collided_steps;
        }

        state = step.state;
        // conditioned mode decrements the token by the observed reward; the
        // behavior-cloning ablation keeps the stream at zero
        if (policy.vnet) rtg_token -= r;
        report.final_dist = dist(state.pose.position(), goal);

        if (report.final_dist < env.success_eps) {
            report.success = true;
            break;
        }
        if (opts.detect_failures) {
            history.push_back({state.pose, step.collided, report.final_dist});
            if (detect_failure(history, opts.failure)) {
                report.failure_detected = true;
                report.failure_step = t;
                break;
            }
        }
        obs = observe(env, w, state, goal);
    }

    if (opts.record && !opts.record->transitions.empty()) populate_rtg(*opts.record);
    return report;
}

}  // namespace ctnav::ct
