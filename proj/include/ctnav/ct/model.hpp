#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctnav/json_util.hpp"
#include "ctnav/nn/checkpoint.hpp"
#include "ctnav/nn/params.hpp"
#include "ctnav/nn/tape.hpp"
#include "ctnav/world.hpp"

namespace ctnav::ct {

struct ConvSpec {
    std::vector<int> channels{16, 32};
    int kernel = 3;
    int stride = 2;
};

struct CtConfig {
    int layers = 2;
    int heads = 2;
    int embed_dim = 64;
    int context_train = 5;   // K at training time
    int context_eval = 5;    // rolling window length at rollout time
    double dropout = 0.1;
    int proprio_dim = 2;
    int action_dim = 2;
    int goal_dim = 2;
    ConvSpec conv;
    std::string nonlinearity = "relu";     // "relu" | "gelu"
    std::vector<double> action_scale{0.22, 2.84};
    double rtg_scale = 100.0;

    int context_max() const { return std::max(context_train, context_eval); }
    int mlp_dim() const { return 4 * embed_dim; }

    Json to_json() const;
    static CtConfig from_json(const Json& j);
    void validate() const;
};

// flattened conv feature width for a 2x25x25 occupancy input
int conv_flat_dim(const ConvSpec& spec);

struct ControlTransformer {
    CtConfig config;
    nn::ParamStore params;

    static ControlTransformer init(const CtConfig& cfg, std::uint64_t seed);
};

// one homogeneous group of training/eval windows, all of length `len`;
// feature rows are ordered window-major then timestep
struct WindowBatch {
    int count = 0;  // windows
    int len = 0;    // timesteps per window
    std::vector<float> rtg;        // [count*len], already divided by rtg_scale
    std::vector<float> proprio;    // [count*len * proprio_dim]
    std::vector<float> goal;       // [count*len * goal_dim]
    std::vector<float> occ;        // [count*len * 25*25*2], channel-last (y,x,c)
    std::vector<float> action_in;  // [count*len * action_dim], scaled
    std::vector<float> action_target;  // [count*len * action_dim], scaled (training)

    int rows() const { return count * len; }
};

// per-forward binding of store entries to tape leaves
template <typename T>
struct Bound {
    nn::TapeT<T>* tape = nullptr;
    std::unordered_map<std::string, typename nn::TapeT<T>::Id> ids;

    typename nn::TapeT<T>::Id operator()(const std::string& name) const {
        auto it = ids.find(name);
        if (it == ids.end()) throw RuntimeFailure("unbound param: " + name);
        return it->second;
    }
};

template <typename T>
Bound<T> bind_params(nn::TapeT<T>& tape, const nn::ParamStoreT<T>& store) {
    Bound<T> b;
    b.tape = &tape;
    for (const auto& e : store.entries()) b.ids[e.name] = tape.param(e.value);
    return b;
}

template <typename T>
void pull_grads(const nn::TapeT<T>& tape, const Bound<T>& bound, nn::ParamStoreT<T>& store) {
    for (auto& e : store.entries()) {
        const auto id = bound(e.name);
        if (tape.has_grad(id)) {
            const auto& g = tape.grad(id);
            for (std::size_t i = 0; i < g.data.size(); ++i)
                e.grad.data[i] += g.data[i];
        }
    }
    store.mark_grads_fresh();
}

// token sequence for a window group: three tokens (rtg, state, action) per
// timestep, all three sharing the timestep's positional embedding
template <typename T>
typename nn::TapeT<T>::Id embed_sequence(nn::TapeT<T>& tape, const Bound<T>& bound,
                                         const CtConfig& cfg, const WindowBatch& batch,
                                         bool training, Rng* dropout_rng);

// transformer trunk + action head over embedded tokens; returns predictions
// [count*len, action_dim] in scaled units
template <typename T>
typename nn::TapeT<T>::Id ct_forward(nn::TapeT<T>& tape, const Bound<T>& bound,
                                     const CtConfig& cfg, const WindowBatch& batch,
                                     bool training, Rng* dropout_rng);

// deterministic action for the last timestep of an eval window (unscaled units)
std::vector<double> predict_action(const ControlTransformer& model, const WindowBatch& window);

// trunk bitwise copy + fresh input embedders / action head at target dims
ControlTransformer transfer_init(const nn::Checkpoint& source, const CtConfig& target_cfg,
                                 std::uint64_t seed);

// names owned by the trunk (copied bitwise on transfer)
bool is_trunk_param(const std::string& name);

// rebuilds a model from a checkpoint whose config carries a "model" section;
// validates the parameter set against a fresh initialization
ControlTransformer model_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace ctnav::ct
