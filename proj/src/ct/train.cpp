#include "ctnav/ct/train.hpp"

#include <algorithm>
#include <map>

namespace ctnav::ct {

Json TrainConfig::to_json() const {
    return Json{{"updates", updates},       {"batch_size", batch_size},
                {"lr", lr},                 {"weight_decay", weight_decay},
                {"warmup", warmup},         {"use_returns", use_returns},
                {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
    TrainConfig c;
    c.updates = j.value("updates", c.updates);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.warmup = j.value("warmup", c.warmup);
    c.use_returns = j.value("use_returns", c.use_returns);
    c.seed = j.value("seed", c.seed);
    if (c.updates < 1 || c.batch_size < 1) throw ConfigError("train: updates/batch must be >= 1");
    if (c.lr <= 0.0) throw ConfigError("train: lr must be positive");
    return c;
}

const char* value_filter_name(ValueFilter f) {
    switch (f) {
        case ValueFilter::kAll: return "all";
        case ValueFilter::kTopPercent: return "top_percent";
        case ValueFilter::kCollisionFree: return "collision_free";
    }
    return "all";
}

ValueFilter value_filter_from_name(const std::string& name) {
    if (name == "all") return ValueFilter::kAll;
    if (name == "top_percent") return ValueFilter::kTopPercent;
    if (name == "collision_free") return ValueFilter::kCollisionFree;
    throw ConfigError("unknown value filter: " + name);
}

Json ConditioningRule::to_json() const {
    return Json{{"k", k}, {"filter", value_filter_name(filter)}, {"top_percent", top_percent}};
}

ConditioningRule ConditioningRule::from_json(const Json& j) {
    ConditioningRule r;
    r.k = j.value("k", r.k);
    if (j.contains("filter")) r.filter = value_filter_from_name(j["filter"].get<std::string>());
    r.top_percent = j.value("top_percent", r.top_percent);
    r.validate();
    return r;
}

void ConditioningRule::validate() const {
    if (k <= 0.0) throw ConfigError("conditioning: k must be positive");
    if (top_percent <= 0.0 || top_percent > 100.0)
        throw ConfigError("conditioning: top_percent must be in (0,100]");
}

nn::AdamW make_optimizer(const TrainConfig& cfg) {
    nn::AdamW opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    opt.warmup_steps = cfg.warmup;
    return opt;
}

void fill_occupancy_row(const PackedOcc& occ, float* out) {
    for (int i = 0; i < kOccCells; ++i) {
        out[2 * i + 0] = occ.obstacle.get(i) ? 1.0f : 0.0f;
        out[2 * i + 1] = occ.goal.get(i) ? 1.0f : 0.0f;
    }
}

WindowBatch build_window_batch(const std::vector<Trajectory>& data, const CtConfig& cfg,
                               const std::vector<std::pair<std::size_t, int>>& ends, int len,
                               bool use_returns) {
    WindowBatch b;
    b.count = static_cast<int>(ends.size());
    b.len = len;
    const int rows = b.rows();
    const int pd = cfg.proprio_dim;
    const int ad = cfg.action_dim;
    b.rtg.assign(static_cast<std::size_t>(rows), 0.0f);
    b.proprio.assign(static_cast<std::size_t>(rows) * pd, 0.0f);
    b.goal.assign(static_cast<std::size_t>(rows) * cfg.goal_dim, 0.0f);
    b.occ.assign(static_cast<std::size_t>(rows) * kOccCells * 2, 0.0f);
    b.action_in.assign(static_cast<std::size_t>(rows) * ad, 0.0f);
    b.action_target.assign(static_cast<std::size_t>(rows) * ad, 0.0f);

    int row = 0;
    for (const auto& [ti, t_end] : ends) {
        const Trajectory& traj = data[ti];
        const int start = t_end - len + 1;
        if (start < 0 || t_end >= static_cast<int>(traj.size()))
            throw RuntimeFailure("build_window_batch: window out of range");
        for (int t = start; t <= t_end; ++t, ++row) {
            const Transition& tr = traj.transitions[static_cast<std::size_t>(t)];
            if (use_returns)
                b.rtg[static_cast<std::size_t>(row)] =
                    static_cast<float>(tr.rtg / cfg.rtg_scale);
            for (int i = 0; i < pd; ++i)
                b.proprio[static_cast<std::size_t>(row) * pd + i] =
                    static_cast<float>(tr.proprio[static_cast<std::size_t>(i)]);
            b.goal[static_cast<std::size_t>(row) * cfg.goal_dim + 0] =
                static_cast<float>(tr.goal_delta.x);
            b.goal[static_cast<std::size_t>(row) * cfg.goal_dim + 1] =
                static_cast<float>(tr.goal_delta.y);
            fill_occupancy_row(tr.occ, b.occ.data() + static_cast<std::size_t>(row) * kOccCells * 2);
            for (int i = 0; i < ad; ++i) {
                const float a = static_cast<float>(tr.action[static_cast<std::size_t>(i)] /
                                                   cfg.action_scale[static_cast<std::size_t>(i)]);
                b.action_in[static_cast<std::size_t>(row) * ad + i] = a;
                b.action_target[static_cast<std::size_t>(row) * ad + i] = a;
            }
        }
    }
    return b;
}

namespace {

struct TransitionIndex {
    std::vector<std::uint64_t> cumulative;  // cumulative transition counts
    std::uint64_t total = 0;

    explicit TransitionIndex(const std::vector<Trajectory>& data) {
        cumulative.reserve(data.size());
        for (const Trajectory& t : data) {
            total += t.size();
            cumulative.push_back(total);
        }
        if (total == 0) throw RuntimeFailure("training dataset has no transitions");
    }

    std::pair<std::size_t, int> locate(std::uint64_t flat) const {
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), flat);
        const std::size_t ti = static_cast<std::size_t>(it - cumulative.begin());
        const std::uint64_t before = ti == 0 ? 0 : cumulative[ti - 1];
        return {ti, static_cast<int>(flat - before)};
    }
};

}  // namespace

TrainResult train_ct(ControlTransformer& model, const std::vector<Trajectory>& data,
                     const TrainConfig& cfg, nn::AdamW& opt) {
    if (data.empty()) throw RuntimeFailure("train_ct: empty dataset");
    const CtConfig& mc = model.config;
    const TransitionIndex index(data);
    Rng batch_rng(derive_seed(cfg.seed, "train.batch", 0));
    Rng drop_rng(derive_seed(cfg.seed, "train.dropout", 0));

    TrainResult result;
    result.losses.reserve(static_cast<std::size_t>(cfg.updates));
    const int kctx = mc.context_train;

    for (long update = 0; update < cfg.updates; ++update) {
        // uniform over (trajectory, end step); short windows appear near
        // episode starts
        std::map<int, std::vector<std::pair<std::size_t, int>>> by_len;
        for (int i = 0; i < cfg.batch_size; ++i) {
            const std::uint64_t flat =
                static_cast<std::uint64_t>(batch_rng.uniform_int(0, static_cast<std::int64_t>(index.total) - 1));
            const auto [ti, t_end] = index.locate(flat);
            const int len = std::min(kctx, t_end + 1);
            by_len[len].emplace_back(ti, t_end);
        }

        nn::Tape tape;
        Bound<float> bound = bind_params(tape, model.params);
        nn::Tape::Id total_sse = -1;
        std::int64_t total_elems = 0;
        for (const auto& [len, ends] : by_len) {
            WindowBatch batch = build_window_batch(data, mc, ends, len, cfg.use_returns);
            auto preds = ct_forward(tape, bound, mc, batch, /*training=*/true, &drop_rng);
            auto target = tape.input(
                {{batch.rows(), mc.action_dim}, std::vector<float>(batch.action_target)});
            auto sse = tape.sq_err_sum(preds, target);
            total_sse = total_sse < 0 ? sse : tape.add(total_sse, sse);
            total_elems += static_cast<std::int64_t>(batch.rows()) * mc.action_dim;
        }
        auto loss = tape.scale(total_sse, 1.0f / static_cast<float>(total_elems));
        tape.backward(loss);
        model.params.zero_grads();
        pull_grads(tape, bound, model.params);
        opt.step(model.params);
        result.losses.push_back(static_cast<double>(tape.val(loss).data[0]));
    }
    return result;
}

std::vector<std::size_t> filter_trajectories(const std::vector<Trajectory>& data,
                                             const ConditioningRule& rule) {
    rule.validate();
    std::vector<std::size_t> keep;
    switch (rule.filter) {
        case ValueFilter::kAll:
            for (std::size_t i = 0; i < data.size(); ++i) keep.push_back(i);
            break;
        case ValueFilter::kCollisionFree:
            for (std::size_t i = 0; i < data.size(); ++i)
                if (data[i].collided_steps == 0) keep.push_back(i);
            break;
        case ValueFilter::kTopPercent: {
            std::vector<std::size_t> order(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) order[i] = i;
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                const double ra = data[a].transitions.empty() ? -1e300 : data[a].transitions[0].rtg;
                const double rb = data[b].transitions.empty() ? -1e300 : data[b].transitions[0].rtg;
                if (ra != rb) return ra > rb;
                return a < b;  // ties by trajectory index
            });
            const std::size_t n = std::max<std::size_t>(
                1, static_cast<std::size_t>(static_cast<double>(data.size()) * rule.top_percent /
                                            100.0));
            keep.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(
                                                           std::min(n, order.size())));
            std::sort(keep.begin(), keep.end());
            break;
        }
    }
    if (keep.empty())
        throw RuntimeFailure("value filter left no trajectories (" +
                             std::string(value_filter_name(rule.filter)) + ")");
    return keep;
}

StateBatch build_state_batch(const std::vector<Trajectory>& data, const ValueConfig& cfg,
                             const std::vector<std::pair<std::size_t, int>>& picks) {
    StateBatch b;
    b.count = static_cast<int>(picks.size());
    b.proprio.assign(static_cast<std::size_t>(b.count) * cfg.proprio_dim, 0.0f);
    b.goal.assign(static_cast<std::size_t>(b.count) * cfg.goal_dim, 0.0f);
    b.occ.assign(static_cast<std::size_t>(b.count) * kOccCells * 2, 0.0f);
    for (int row = 0; row < b.count; ++row) {
        const auto& [ti, t] = picks[static_cast<std::size_t>(row)];
        const Transition& tr = data[ti].transitions[static_cast<std::size_t>(t)];
        for (int i = 0; i < cfg.proprio_dim; ++i)
            b.proprio[static_cast<std::size_t>(row) * cfg.proprio_dim + i] =
                static_cast<float>(tr.proprio[static_cast<std::size_t>(i)]);
        b.goal[static_cast<std::size_t>(row) * cfg.goal_dim + 0] =
            static_cast<float>(tr.goal_delta.x);
        b.goal[static_cast<std::size_t>(row) * cfg.goal_dim + 1] =
            static_cast<float>(tr.goal_delta.y);
        fill_occupancy_row(tr.occ, b.occ.data() + static_cast<std::size_t>(row) * kOccCells * 2);
    }
    return b;
}

TrainResult train_value(ValueNet& net, const std::vector<Trajectory>& data,
                        const ConditioningRule& rule, const TrainConfig& cfg, nn::AdamW& opt) {
    const std::vector<std::size_t> keep = filter_trajectories(data, rule);
    std::vector<std::uint64_t> cumulative;
    std::uint64_t total = 0;
    for (std::size_t ti : keep) {
        total += data[ti].size();
        cumulative.push_back(total);
    }
    if (total == 0) throw RuntimeFailure("train_value: filtered dataset has no transitions");

    Rng rng(derive_seed(cfg.seed, "value.batch", 0));
    TrainResult result;
    result.losses.reserve(static_cast<std::size_t>(cfg.updates));
    for (long update = 0; update < cfg.updates; ++update) {
        std::vector<std::pair<std::size_t, int>> picks;
        std::vector<float> targets;
        picks.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            const std::uint64_t flat =
                static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
            const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), flat);
            const std::size_t ki = static_cast<std::size_t>(it - cumulative.begin());
            const std::uint64_t before = ki == 0 ? 0 : cumulative[ki - 1];
            const std::size_t ti = keep[ki];
            const int t = static_cast<int>(flat - before);
            picks.emplace_back(ti, t);
            targets.push_back(static_cast<float>(
                data[ti].transitions[static_cast<std::size_t>(t)].rtg / net.config.rtg_scale));
        }
        StateBatch batch = build_state_batch(data, net.config, picks);
        nn::Tape tape;
        Bound<float> bound = bind_params(tape, net.params);
        auto preds = value_forward(tape, bound, net.config, batch);
        auto target = tape.input({{batch.count, 1}, std::move(targets)});
        auto loss = tape.mse(preds, target);
        tape.backward(loss);
        net.params.zero_grads();
        pull_grads(tape, bound, net.params);
        opt.step(net.params);
        result.losses.push_back(static_cast<double>(tape.val(loss).data[0]));
    }
    return result;
}

}  // namespace ctnav::ct
