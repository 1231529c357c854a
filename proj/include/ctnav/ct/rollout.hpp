#pragma once

#include "ctnav/ct/model.hpp"
#include "ctnav/ct/train.hpp"
#include "ctnav/ct/value_net.hpp"
#include "ctnav/env.hpp"
#include "ctnav/traj.hpp"

namespace ctnav::ct {

// policy + optional value conditioning; without a value net the return-token
// stream is zero (the behavior-cloning ablation)
struct ConditionedPolicy {
    const ControlTransformer* model = nullptr;
    const ValueNet* vnet = nullptr;
    ConditioningRule rule;
    // scripted action source for harness checks; the model still defines the
    // window/config plumbing
    std::function<std::vector<double>(const WindowBatch&)> action_override;
};

struct RolloutOptions {
    bool detect_failures = false;
    FailureConfig failure;
    std::uint64_t heading_seed = 0;  // initial yaw draw (diffdrive)
    int horizon_override = 0;        // 0 = env horizon
    Trajectory* record = nullptr;    // when set, transitions are appended
};

struct RolloutReport {
    bool success = false;
    bool failure_detected = false;
    int failure_step = -1;
    double total_return = 0.0;
    double final_dist = 0.0;
    int collisions = 0;
    std::vector<Pose2> path;           // steps + 1 poses
    std::vector<double> rewards;       // per step
    std::vector<double> rtg_stream;    // conditioning token value used at each step
};

// Runs the policy from start toward goal. The first return token is
// k * V(s_0 | g_0) when a value net is present; afterwards the token is
// decremented by each observed reward. The context window keeps the last
// context_eval steps.
RolloutReport rollout_conditioned(const ConditionedPolicy& policy, const EnvSpec& env,
                                  const World& w, Point2 start, Point2 goal,
                                  const RolloutOptions& opts);

double value_of_state(const ValueNet& net, const Observation& obs);

}  // namespace ctnav::ct
