#pragma once

#include "ctnav/ct/model.hpp"
#include "ctnav/ct/value_net.hpp"
#include "ctnav/traj.hpp"

namespace ctnav::ct {

struct TrainConfig {
    long updates = 1000;
    int batch_size = 64;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    long warmup = 1000;
    bool use_returns = true;  // false zeroes the return-token stream (behavior cloning)
    std::uint64_t seed = 0;

    Json to_json() const;
    static TrainConfig from_json(const Json& j);
};

enum class ValueFilter { kAll, kTopPercent, kCollisionFree };

const char* value_filter_name(ValueFilter f);
ValueFilter value_filter_from_name(const std::string& name);

// how rollouts choose the initial return token and which trajectories train
// the value regressor
struct ConditioningRule {
    double k = 1.0;
    ValueFilter filter = ValueFilter::kCollisionFree;
    double top_percent = 50.0;  // used by kTopPercent

    Json to_json() const;
    static ConditioningRule from_json(const Json& j);
    void validate() const;
};

struct TrainResult {
    std::vector<double> losses;  // one entry per update
};

nn::AdamW make_optimizer(const TrainConfig& cfg);

// mean-squared action error over uniformly sampled context windows
TrainResult train_ct(ControlTransformer& model, const std::vector<Trajectory>& data,
                     const TrainConfig& cfg, nn::AdamW& opt);

// indexes of trajectories the rule admits, in dataset order
std::vector<std::size_t> filter_trajectories(const std::vector<Trajectory>& data,
                                             const ConditioningRule& rule);

TrainResult train_value(ValueNet& net, const std::vector<Trajectory>& data,
                        const ConditioningRule& rule, const TrainConfig& cfg, nn::AdamW& opt);

// batch assembly shared with tests
WindowBatch build_window_batch(const std::vector<Trajectory>& data, const CtConfig& cfg,
                               const std::vector<std::pair<std::size_t, int>>& ends, int len,
                               bool use_returns);

StateBatch build_state_batch(const std::vector<Trajectory>& data, const ValueConfig& cfg,
                             const std::vector<std::pair<std::size_t, int>>& picks);

void fill_occupancy_row(const PackedOcc& occ, float* out);  // kOccCells*2 floats, channel-last

}  // namespace ctnav::ct
