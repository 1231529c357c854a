#include "ctnav/ct/value_net.hpp"

namespace ctnav::ct {

Json ValueConfig::to_json() const {
    return Json{{"embed_dim", embed_dim},
                {"hidden_dim", hidden_dim},
                {"proprio_dim", proprio_dim},
                {"goal_dim", goal_dim},
                {"conv_channels", conv.channels},
                {"conv_kernel", conv.kernel},
                {"conv_stride", conv.stride},
                {"rtg_scale", rtg_scale}};
}

ValueConfig ValueConfig::from_json(const Json& j) {
    ValueConfig c;
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.proprio_dim = j.value("proprio_dim", c.proprio_dim);
    c.goal_dim = j.value("goal_dim", c.goal_dim);
    if (j.contains("conv_channels")) c.conv.channels = j["conv_channels"].get<std::vector<int>>();
    c.conv.kernel = j.value("conv_kernel", c.conv.kernel);
    c.conv.stride = j.value("conv_stride", c.conv.stride);
    c.rtg_scale = j.value("rtg_scale", c.rtg_scale);
    c.validate();
    return c;
}

void ValueConfig::validate() const {
    if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("value: dims must be positive");
    if (proprio_dim < 0 || goal_dim < 1) throw ConfigError("value: bad input dims");
    if (conv.channels.size() != 2) throw ConfigError("value: conv spec wants two layers");
    if (rtg_scale <= 0.0) throw ConfigError("value: rtg_scale must be positive");
}

ValueNet ValueNet::init(const ValueConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ValueNet net;
    net.config = cfg;
    nn::ParamStore& p = net.params;
    Rng rng(derive_seed(seed, "value.init", 0));
    const int kk = cfg.conv.kernel;
    const int c0 = cfg.conv.channels[0];
    const int c1 = cfg.conv.channels[1];
    constexpr double kStd = 0.02;
    p.add("conv.0.w", nn::gaussian_tensor<float>({kk * kk * 2, c0}, rng, kStd));
    p.add("conv.0.b", nn::const_tensor<float>({c0}, 0.0f));
    p.add("conv.1.w", nn::gaussian_tensor<float>({kk * kk * c0, c1}, rng, kStd));
    p.add("conv.1.b", nn::const_tensor<float>({c1}, 0.0f));
    p.add("conv.proj.w",
          nn::gaussian_tensor<float>({conv_flat_dim(cfg.conv), cfg.embed_dim}, rng, kStd));
    p.add("conv.proj.b", nn::const_tensor<float>({cfg.embed_dim}, 0.0f));
    const int mlp_in = cfg.embed_dim + cfg.proprio_dim + cfg.goal_dim;
    p.add("mlp.0.w", nn::gaussian_tensor<float>({mlp_in, cfg.hidden_dim}, rng, kStd));
    p.add("mlp.0.b", nn::const_tensor<float>({cfg.hidden_dim}, 0.0f));
    p.add("mlp.1.w", nn::gaussian_tensor<float>({cfg.hidden_dim, cfg.hidden_dim}, rng, kStd));
    p.add("mlp.1.b", nn::const_tensor<float>({cfg.hidden_dim}, 0.0f));
    p.add("mlp.out.w", nn::gaussian_tensor<float>({cfg.hidden_dim, 1}, rng, kStd));
    p.add("mlp.out.b", nn::const_tensor<float>({1}, 0.0f));
    return net;
}

template <typename T>
typename nn::TapeT<T>::Id value_forward(nn::TapeT<T>& tape, const Bound<T>& bound,
                                        const ValueConfig& cfg, const StateBatch& batch) {
    const int rows = batch.count;
    const int kk = cfg.conv.kernel;
    std::vector<T> occ(batch.occ.begin(), batch.occ.end());
    auto occ_in = tape.input({{rows, kOccGrid, kOccGrid, 2}, std::move(occ)});
    auto h1 = tape.relu(tape.conv2d(occ_in, bound("conv.0.w"), bound("conv.0.b"), kk, kk,
                                    cfg.conv.stride));
    auto h2 = tape.relu(
        tape.conv2d(h1, bound("conv.1.w"), bound("conv.1.b"), kk, kk, cfg.conv.stride));
    auto flat = tape.reshape(h2, {rows, conv_flat_dim(cfg.conv)});
    auto feat = tape.relu(
        tape.add_bias(tape.matmul(flat, bound("conv.proj.w")), bound("conv.proj.b")));

    std::vector<typename nn::TapeT<T>::Id> parts{feat};
    if (cfg.proprio_dim > 0) {
        std::vector<T> pro(batch.proprio.begin(), batch.proprio.end());
        parts.push_back(tape.input({{rows, cfg.proprio_dim}, std::move(pro)}));
    }
    std::vector<T> goal(batch.goal.begin(), batch.goal.end());
    parts.push_back(tape.input({{rows, cfg.goal_dim}, std::move(goal)}));
    auto x = tape.concat_cols(parts);

    x = tape.relu(tape.add_bias(tape.matmul(x, bound("mlp.0.w")), bound("mlp.0.b")));
    x = tape.relu(tape.add_bias(tape.matmul(x, bound("mlp.1.w")), bound("mlp.1.b")));
    return tape.add_bias(tape.matmul(x, bound("mlp.out.w")), bound("mlp.out.b"));
}

template nn::TapeT<float>::Id value_forward<float>(nn::TapeT<float>&, const Bound<float>&,
                                                   const ValueConfig&, const StateBatch&);
template nn::TapeT<double>::Id value_forward<double>(nn::TapeT<double>&, const Bound<double>&,
                                                     const ValueConfig&, const StateBatch&);

ValueNet value_from_checkpoint(const nn::Checkpoint& ckpt) {
    if (!ckpt.config.contains("value"))
        throw RuntimeFailure("checkpoint config has no value section");
    ValueNet net;
    net.config = ValueConfig::from_json(ckpt.config.at("value"));
    const ValueNet fresh = ValueNet::init(net.config, 0);
    for (const auto& e : fresh.params.entries()) {
        const auto& src = ckpt.params.at(e.name);
        if (src.value.shape != e.value.shape)
            throw RuntimeFailure("checkpoint/config mismatch for param " + e.name);
        net.params.add(e.name, src.value);
    }
    return net;
}

std::vector<double> predict_values(const ValueNet& net, const StateBatch& batch) {
    nn::Tape tape(/*grad_enabled=*/false);
    Bound<float> bound = bind_params(tape, net.params);
    auto out = value_forward(tape, bound, net.config, batch);
    const nn::Tensor& v = tape.val(out);
    std::vector<double> values(static_cast<std::size_t>(batch.count));
    for (int i = 0; i < batch.count; ++i)
        values[static_cast<std::size_t>(i)] =
            static_cast<double>(v.data[static_cast<std::size_t>(i)]) * net.config.rtg_scale;
    return values;
}

}  // namespace ctnav::ct
