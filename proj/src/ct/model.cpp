#include "ctnav/ct/model.hpp"

#include <cmath>

namespace ctnav::ct {

Json CtConfig::to_json() const {
    return Json{{"layers", layers},
                {"heads", heads},
                {"embed_dim", embed_dim},
                {"context_train", context_train},
                {"context_eval", context_eval},
                {"dropout", dropout},
                {"proprio_dim", proprio_dim},
                {"action_dim", action_dim},
                {"goal_dim", goal_dim},
                {"conv_channels", conv.channels},
                {"conv_kernel", conv.kernel},
                {"conv_stride", conv.stride},
                {"nonlinearity", nonlinearity},
                {"action_scale", action_scale},
                {"rtg_scale", rtg_scale}};
}

CtConfig CtConfig::from_json(const Json& j) {
    CtConfig c;
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.context_train = j.value("context_train", c.context_train);
    c.context_eval = j.value("context_eval", c.context_eval);
    c.dropout = j.value("dropout", c.dropout);
    c.proprio_dim = j.value("proprio_dim", c.proprio_dim);
    c.action_dim = j.value("action_dim", c.action_dim);
    c.goal_dim = j.value("goal_dim", c.goal_dim);
    if (j.contains("conv_channels")) c.conv.channels = j["conv_channels"].get<std::vector<int>>();
    c.conv.kernel = j.value("conv_kernel", c.conv.kernel);
    c.conv.stride = j.value("conv_stride", c.conv.stride);
    c.nonlinearity = j.value("nonlinearity", c.nonlinearity);
    if (j.contains("action_scale")) c.action_scale = j["action_scale"].get<std::vector<double>>();
    c.rtg_scale = j.value("rtg_scale", c.rtg_scale);
    c.validate();
    return c;
}

void CtConfig::validate() const {
    if (layers < 1) throw ConfigError("ct: layers must be >= 1");
    if (heads < 1 || embed_dim % heads != 0)
        throw ConfigError("ct: embed_dim must be divisible by heads");
    if (context_train < 1 || context_eval < 1) throw ConfigError("ct: context must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("ct: dropout must be in [0,1)");
    if (action_dim < 1) throw ConfigError("ct: action_dim must be >= 1");
    if (goal_dim < 1) throw ConfigError("ct: goal_dim must be >= 1");
    if (proprio_dim < 0) throw ConfigError("ct: proprio_dim must be >= 0");
    if (conv.channels.size() != 2) throw ConfigError("ct: conv spec wants two layers");
    if (static_cast<int>(action_scale.size()) != action_dim)
        throw ConfigError("ct: action_scale length must equal action_dim");
    if (nonlinearity != "relu" && nonlinearity != "gelu")
        throw ConfigError("ct: nonlinearity must be relu or gelu");
    if (rtg_scale <= 0.0) throw ConfigError("ct: rtg_scale must be positive");
}

int conv_flat_dim(const ConvSpec& spec) {
    int side = kOccGrid;
    for (std::size_t i = 0; i < spec.channels.size(); ++i)
        side = nn::conv_out_dim(side, spec.kernel, spec.stride);
    if (side <= 0) throw ConfigError("ct: conv spec collapses the occupancy grid");
    return side * side * spec.channels.back();
}

namespace {

constexpr double kInitStd = 0.02;
constexpr double kHeadScale = 0.1;

void add_linear(nn::ParamStore& p, const std::string& name, int in, int out, Rng& rng,
                double std_scale = 1.0) {
    p.add(name + ".w", nn::gaussian_tensor<float>({in, out}, rng, kInitStd * std_scale));
    p.add(name + ".b", nn::const_tensor<float>({out}, 0.0f));
}

void add_layernorm(nn::ParamStore& p, const std::string& name, int dim) {
    p.add(name + ".g", nn::const_tensor<float>({dim}, 1.0f));
    p.add(name + ".b", nn::const_tensor<float>({dim}, 0.0f));
}

}  // namespace

ControlTransformer ControlTransformer::init(const CtConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ControlTransformer model;
    model.config = cfg;
    nn::ParamStore& p = model.params;
    Rng rng(derive_seed(seed, "ct.init", 0));

    const int d = cfg.embed_dim;
    const int kk = cfg.conv.kernel;
    const int c0 = cfg.conv.channels[0];
    const int c1 = cfg.conv.channels[1];
    p.add("conv.0.w", nn::gaussian_tensor<float>({kk * kk * 2, c0}, rng, kInitStd));
    p.add("conv.0.b", nn::const_tensor<float>({c0}, 0.0f));
    p.add("conv.1.w", nn::gaussian_tensor<float>({kk * kk * c0, c1}, rng, kInitStd));
    p.add("conv.1.b", nn::const_tensor<float>({c1}, 0.0f));
    add_linear(p, "conv.proj", conv_flat_dim(cfg.conv), d, rng);

    add_linear(p, "embed.rtg", 1, d, rng);
    if (cfg.proprio_dim > 0) add_linear(p, "embed.proprio", cfg.proprio_dim, d, rng);
    add_linear(p, "embed.goal", cfg.goal_dim, d, rng);
    add_linear(p, "embed.action", cfg.action_dim, d, rng);
    const int mix_in = cfg.proprio_dim > 0 ? 3 * d : 2 * d;
    add_linear(p, "embed.state_mix", mix_in, d, rng);
    p.add("embed.pos", nn::gaussian_tensor<float>({cfg.context_max(), d}, rng, kInitStd));
    add_layernorm(p, "embed.ln", d);

    for (int l = 0; l < cfg.layers; ++l) {
        const std::string b = "block" + std::to_string(l);
        add_layernorm(p, b + ".ln1", d);
        add_linear(p, b + ".attn.q", d, d, rng);
        add_linear(p, b + ".attn.k", d, d, rng);
        add_linear(p, b + ".attn.v", d, d, rng);
        add_linear(p, b + ".attn.proj", d, d, rng);
        add_layernorm(p, b + ".ln2", d);
        add_linear(p, b + ".mlp.fc", d, cfg.mlp_dim(), rng);
        add_linear(p, b + ".mlp.proj", cfg.mlp_dim(), d, rng);
    }
    add_layernorm(p, "final.ln", d);
    add_linear(p, "head.action", d, cfg.action_dim, rng, kHeadScale);
    return model;
}

bool is_trunk_param(const std::string& name) {
    return name.rfind("conv.", 0) == 0 || name.rfind("block", 0) == 0 ||
           name.rfind("final.", 0) == 0 || name == "embed.pos" || name.rfind("embed.ln.", 0) == 0 ||
           name.rfind("embed.rtg.", 0) == 0;
}

namespace {

template <typename T>
typename nn::TapeT<T>::Id linear(nn::TapeT<T>& tape, const Bound<T>& bound,
                                 const std::string& name, typename nn::TapeT<T>::Id x) {
    return tape.add_bias(tape.matmul(x, bound(name + ".w")), bound(name + ".b"));
}

template <typename T>
typename nn::TapeT<T>::Id layer_norm(nn::TapeT<T>& tape, const Bound<T>& bound,
                                     const std::string& name, typename nn::TapeT<T>::Id x) {
    return tape.layernorm(x, bound(name + ".g"), bound(name + ".b"));
}

template <typename T>
typename nn::TapeT<T>::Id nonlinear(nn::TapeT<T>& tape, const CtConfig& cfg,
                                    typename nn::TapeT<T>::Id x) {
    return cfg.nonlinearity == "gelu" ? tape.gelu(x) : tape.relu(x);
}

template <typename T>
std::vector<T> widen(const std::vector<float>& v) {
    return std::vector<T>(v.begin(), v.end());
}

// conv encoder over occupancy windows: two strided convs, flatten, project
template <typename T>
typename nn::TapeT<T>::Id conv_encode(nn::TapeT<T>& tape, const Bound<T>& bound,
                                      const CtConfig& cfg, typename nn::TapeT<T>::Id occ,
                                      int rows) {
    const int kk = cfg.conv.kernel;
    const int stride = cfg.conv.stride;
    auto h1 = tape.conv2d(occ, bound("conv.0.w"), bound("conv.0.b"), kk, kk, stride);
    h1 = nonlinear(tape, cfg, h1);
    auto h2 = tape.conv2d(h1, bound("conv.1.w"), bound("conv.1.b"), kk, kk, stride);
    h2 = nonlinear(tape, cfg, h2);
    auto flat = tape.reshape(h2, {rows, conv_flat_dim(cfg.conv)});
    return linear(tape, bound, "conv.proj", flat);
}

}  // namespace

template <typename T>
typename nn::TapeT<T>::Id embed_sequence(nn::TapeT<T>& tape, const Bound<T>& bound,
                                         const CtConfig& cfg, const WindowBatch& batch,
                                         bool training, Rng* dropout_rng) {
    const int rows = batch.rows();
    if (batch.len > cfg.context_max())
        throw RuntimeFailure("embed_sequence: window exceeds positional table");

    auto occ_in = tape.input({{rows, kOccGrid, kOccGrid, 2}, widen<T>(batch.occ)});
    auto occ_emb = conv_encode(tape, bound, cfg, occ_in, rows);

    auto goal_in = tape.input({{rows, cfg.goal_dim}, widen<T>(batch.goal)});
    auto goal_emb = linear(tape, bound, "embed.goal", goal_in);

    typename nn::TapeT<T>::Id state_cat;
    if (cfg.proprio_dim > 0) {
        auto pro_in = tape.input({{rows, cfg.proprio_dim}, widen<T>(batch.proprio)});
        auto pro_emb = linear(tape, bound, "embed.proprio", pro_in);
        state_cat = tape.concat_cols({occ_emb, pro_emb, goal_emb});
    } else {
        state_cat = tape.concat_cols({occ_emb, goal_emb});
    }
    auto state_tok = linear(tape, bound, "embed.state_mix", state_cat);

    auto rtg_in = tape.input({{rows, 1}, widen<T>(batch.rtg)});
    auto rtg_tok = linear(tape, bound, "embed.rtg", rtg_in);

    auto act_in = tape.input({{rows, cfg.action_dim}, widen<T>(batch.action_in)});
    auto act_tok = linear(tape, bound, "embed.action", act_in);

    // the three modality tokens of timestep t share positional row t
    std::vector<int> pos_rows(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) pos_rows[static_cast<std::size_t>(i)] = i % batch.len;
    auto pos = tape.embed_rows(bound("embed.pos"), pos_rows);
    rtg_tok = tape.add(rtg_tok, pos);
    state_tok = tape.add(state_tok, pos);
    act_tok = tape.add(act_tok, pos);

    return tape.interleave_rows({rtg_tok, state_tok, act_tok});
}

template <typename T>
typename nn::TapeT<T>::Id ct_forward(nn::TapeT<T>& tape, const Bound<T>& bound,
                                     const CtConfig& cfg, const WindowBatch& batch,
                                     bool training, Rng* dropout_rng) {
    const int d = cfg.embed_dim;
    const int seq = 3 * batch.len;
    const int heads = cfg.heads;
    const T att_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads)));

    auto x = embed_sequence(tape, bound, cfg, batch, training, dropout_rng);
    x = layer_norm(tape, bound, "embed.ln", x);
    if (training && dropout_rng) x = tape.dropout(x, cfg.dropout, *dropout_rng, true);
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string b = "block" + std::to_string(l);
        auto h = layer_norm(tape, bound, b + ".ln1", x);
        auto q = tape.split_heads(linear(tape, bound, b + ".attn.q", h), batch.count, seq, heads);
        auto k = tape.split_heads(linear(tape, bound, b + ".attn.k", h), batch.count, seq, heads);
        auto v = tape.split_heads(linear(tape, bound, b + ".attn.v", h), batch.count, seq, heads);
        auto scores = tape.scale(tape.bmm_nt(q, k), att_scale);
        auto probs = tape.softmax_causal(scores);
        if (training && dropout_rng) probs = tape.dropout(probs, cfg.dropout, *dropout_rng, true);
        auto ctx = tape.merge_heads(tape.bmm_nn(probs, v), batch.count, seq, heads);
        auto att = linear(tape, bound, b + ".attn.proj", ctx);
        if (training && dropout_rng) att = tape.dropout(att, cfg.dropout, *dropout_rng, true);
        x = tape.add(x, att);

        auto h2 = layer_norm(tape, bound, b + ".ln2", x);
        auto mid = nonlinear(tape, cfg, linear(tape, bound, b + ".mlp.fc", h2));
        auto out = linear(tape, bound, b + ".mlp.proj", mid);
        if (training && dropout_rng) out = tape.dropout(out, cfg.dropout, *dropout_rng, true);
        x = tape.add(x, out);
    }
    x = layer_norm(tape, bound, "final.ln", x);

    // action is read from the transformed state token of each timestep
    std::vector<int> state_rows(static_cast<std::size_t>(batch.rows()));
    for (int g = 0; g < batch.count; ++g)
        for (int t = 0; t < batch.len; ++t)
            state_rows[static_cast<std::size_t>(g * batch.len + t)] = g * seq + 3 * t + 1;
    auto state_out = tape.gather_rows(x, state_rows);
    return linear(tape, bound, "head.action", state_out);
}

template nn::TapeT<float>::Id embed_sequence<float>(nn::TapeT<float>&, const Bound<float>&,
                                                    const CtConfig&, const WindowBatch&, bool,
                                                    Rng*);
template nn::TapeT<double>::Id embed_sequence<double>(nn::TapeT<double>&, const Bound<double>&,
                                                      const CtConfig&, const WindowBatch&, bool,
                                                      Rng*);
template nn::TapeT<float>::Id ct_forward<float>(nn::TapeT<float>&, const Bound<float>&,
                                                const CtConfig&, const WindowBatch&, bool, Rng*);
template nn::TapeT<double>::Id ct_forward<double>(nn::TapeT<double>&, const Bound<double>&,
                                                  const CtConfig&, const WindowBatch&, bool,
                                                  Rng*);

std::vector<double> predict_action(const ControlTransformer& model, const WindowBatch& window) {
    if (window.count != 1) throw RuntimeFailure("predict_action: expects a single window");
    nn::Tape tape(/*grad_enabled=*/false);
    Bound<float> bound = bind_params(tape, model.params);
    auto preds = ct_forward(tape, bound, model.config, window, /*training=*/false, nullptr);
    const nn::Tensor& v = tape.val(preds);
    const int ad = model.config.action_dim;
    std::vector<double> action(static_cast<std::size_t>(ad));
    const std::size_t last = static_cast<std::size_t>((window.len - 1) * ad);
    for (int i = 0; i < ad; ++i)
        action[static_cast<std::size_t>(i)] =
            static_cast<double>(v.data[last + static_cast<std::size_t>(i)]) *
            model.config.action_scale[static_cast<std::size_t>(i)];
    return action;
}

ControlTransformer model_from_checkpoint(const nn::Checkpoint& ckpt) {
    if (!ckpt.config.contains("model"))
        throw RuntimeFailure("checkpoint config has no model section");
    ControlTransformer model;
    model.config = CtConfig::from_json(ckpt.config.at("model"));
    const ControlTransformer fresh = ControlTransformer::init(model.config, 0);
    for (const auto& e : fresh.params.entries()) {
        const auto& src = ckpt.params.at(e.name);
        if (src.value.shape != e.value.shape)
            throw RuntimeFailure("checkpoint/config mismatch for param " + e.name + ": stored " +
                                 nn::Tensor::shape_str(src.value.shape) + ", expected " +
                                 nn::Tensor::shape_str(e.value.shape));
        model.params.add(e.name, src.value);
    }
    return model;
}

ControlTransformer transfer_init(const nn::Checkpoint& source, const CtConfig& target_cfg,
                                 std::uint64_t seed) {
    const CtConfig src_cfg = CtConfig::from_json(source.config.at("model"));
    std::string mismatches;
    if (src_cfg.embed_dim != target_cfg.embed_dim) mismatches += " embed_dim";
    if (src_cfg.layers != target_cfg.layers) mismatches += " layers";
    if (src_cfg.heads != target_cfg.heads) mismatches += " heads";
    if (src_cfg.conv.channels != target_cfg.conv.channels ||
        src_cfg.conv.kernel != target_cfg.conv.kernel ||
        src_cfg.conv.stride != target_cfg.conv.stride)
        mismatches += " conv";
    if (src_cfg.context_max() != target_cfg.context_max()) mismatches += " context";
    if (!mismatches.empty())
        throw RuntimeFailure("transfer_init: trunk shape mismatch:" + mismatches);

    ControlTransformer model = ControlTransformer::init(target_cfg, seed);
    for (auto& e : model.params.entries()) {
        if (is_trunk_param(e.name)) {
            const auto& src = source.params.at(e.name);
            if (src.value.shape != e.value.shape)
                throw RuntimeFailure("transfer_init: trunk tensor shape mismatch: " + e.name);
            e.value = src.value;
        }
    }
    return model;
}

}  // namespace ctnav::ct
