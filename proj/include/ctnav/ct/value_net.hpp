#pragma once

#include "ctnav/ct/model.hpp"

namespace ctnav::ct {

struct ValueConfig {
    int embed_dim = 64;     // conv projection width
    int hidden_dim = 128;
    int proprio_dim = 2;
    int goal_dim = 2;
    ConvSpec conv;
    double rtg_scale = 100.0;

    Json to_json() const;
    static ValueConfig from_json(const Json& j);
    void validate() const;
};

// goal-conditioned undiscounted value regressor over single states: conv over
// the occupancy window, then an MLP on (features, proprio, goal). Not
// conditioned on history.
struct ValueNet {
    ValueConfig config;
    nn::ParamStore params;

    static ValueNet init(const ValueConfig& cfg, std::uint64_t seed);
};

struct StateBatch {
    int count = 0;
    std::vector<float> proprio;  // [count * proprio_dim]
    std::vector<float> goal;     // [count * goal_dim]
    std::vector<float> occ;      // [count * 25*25*2], channel-last
};

template <typename T>
typename nn::TapeT<T>::Id value_forward(nn::TapeT<T>& tape, const Bound<T>& bound,
                                        const ValueConfig& cfg, const StateBatch& batch);

// predictions in reward units (internal output times rtg_scale)
std::vector<double> predict_values(const ValueNet& net, const StateBatch& batch);

ValueNet value_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace ctnav::ct
