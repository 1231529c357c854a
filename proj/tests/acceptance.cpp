// Acceptance suite: one criterion per invocation, one [PASS]/[FAIL] line per
// criterion on stdout. Heavy artifacts (datasets, checkpoints) are cached in
// the work directory and reused across criteria via stage files keyed on the
// configuration hash.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "ctnav/collect.hpp"
#include "ctnav/ct/rollout.hpp"
#include "ctnav/ct/train.hpp"
#include "ctnav/dataset.hpp"
#include "ctnav/eval.hpp"
#include "ctnav/nn/checkpoint.hpp"
#include "ctnav/pipeline.hpp"
#include "gradcheck.hpp"

using namespace ctnav;
namespace pl = ctnav::pipeline;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_work;
std::string g_assets;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// stage cache: skip `build` when the stage config on disk matches
void run_stage(const std::string& artifact, const Json& stage_cfg,
               const std::function<void()>& build) {
    const std::string stage_path = artifact + ".stage.json";
    if (fs::exists(artifact) && fs::exists(stage_path)) {
        if (load_json_file(stage_path) == stage_cfg) return;
    }
    build();
    save_json_file(stage_path, stage_cfg);
}

Json load_repro_config(const std::string& out_dir) {
    Json j = load_json_file(g_assets + "/configs/repro.json");
    j["out_dir"] = out_dir;
    return j;
}

// Spearman rank correlation with average ranks on ties
double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    auto ranks = [&](const std::vector<double>& v) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
        std::vector<double> r(n);
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
            const double avg = 0.5 * (i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> ra = ranks(a);
    const std::vector<double> rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return cov / std::sqrt(va * vb);
}

ct::WindowBatch random_window_batch(const ct::CtConfig& cfg, int count, int len,
                                    std::uint64_t seed) {
    Rng rng(seed);
    ct::WindowBatch b;
    b.count = count;
    b.len = len;
    const int rows = b.rows();
    b.rtg.resize(static_cast<std::size_t>(rows));
    b.proprio.resize(static_cast<std::size_t>(rows) * cfg.proprio_dim);
    b.goal.resize(static_cast<std::size_t>(rows) * cfg.goal_dim);
    b.occ.resize(static_cast<std::size_t>(rows) * kOccCells * 2);
    b.action_in.resize(static_cast<std::size_t>(rows) * cfg.action_dim);
    b.action_target.resize(static_cast<std::size_t>(rows) * cfg.action_dim);
    for (auto& v : b.rtg) v = static_cast<float>(rng.normal());
    for (auto& v : b.proprio) v = static_cast<float>(rng.normal());
    for (auto& v : b.goal) v = static_cast<float>(rng.normal());
    for (auto& v : b.occ) v = rng.uniform() < 0.15 ? 1.0f : 0.0f;
    for (auto& v : b.action_in) v = static_cast<float>(rng.normal() * 0.5);
    for (auto& v : b.action_target) v = static_cast<float>(rng.normal() * 0.5);
    return b;
}

// ---- criterion 1: gradient oracle -----------------------------------------

Check criterion_1() {
    Check c;
    const auto t0 = Clock::now();

    ct::CtConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.embed_dim = 16;  // width 16
    cfg.conv.channels = {8, 16};
    cfg.dropout = 0.0;
    cfg.nonlinearity = "gelu";  // smooth surrogate; relu kinks break differencing
    cfg.proprio_dim = 2;
    cfg.action_scale = {0.22, 2.84};
    ct::ControlTransformer model = ct::ControlTransformer::init(cfg, 5);
    const ct::WindowBatch batch = random_window_batch(cfg, 1, 3, 13);

    nn::ParamStoreT<double> params64 = nn::cast_params<double>(model.params);
    std::vector<double> target;
    {
        Rng rng(21);
        for (int i = 0; i < batch.rows() * cfg.action_dim; ++i) target.push_back(rng.normal());
    }
    const gradcheck::LossFn64 loss_fn = [&](nn::TapeT<double>& tape,
                                            const nn::ParamStoreT<double>&,
                                            std::unordered_map<std::string, int>& ids) {
        ct::Bound<double> bound;
        bound.tape = &tape;
        bound.ids = ids;
        auto preds = ct::ct_forward(tape, bound, cfg, batch, false, nullptr);
        nn::TensorT<double> t({batch.rows(), cfg.action_dim}, target);
        return tape.mse(preds, tape.input(std::move(t)));
    };

    const auto fd = gradcheck::central_differences(params64, loss_fn, 1e-5);
    const auto ad64 = gradcheck::reverse_grads(params64, loss_fn);
    const gradcheck::Result r64 = gradcheck::compare(ad64, fd);

    nn::Tape tape32;
    ct::Bound<float> bound32 = ct::bind_params(tape32, model.params);
    auto preds32 = ct::ct_forward(tape32, bound32, cfg, batch, false, nullptr);
    std::vector<float> t32(target.begin(), target.end());
    auto loss32 =
        tape32.mse(preds32, tape32.input({{batch.rows(), cfg.action_dim}, std::move(t32)}));
    tape32.backward(loss32);
    nn::ParamStoreT<double> ad32;
    for (const auto& e : model.params.entries()) {
        nn::TensorT<double> g(e.value.shape);
        if (tape32.has_grad(bound32(e.name)))
            g = nn::cast_tensor<double>(tape32.grad(bound32(e.name)));
        ad32.add(e.name, std::move(g));
    }
    const gradcheck::Result r32 = gradcheck::compare(ad32, fd);

    const double elapsed = seconds_since(t0);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "float64 max rel err %.3g (<=1e-6), float32 %.3g (<=1e-3), %zu coords, %.1fs",
                  r64.max_rel_err, r32.max_rel_err, r64.coords, elapsed);
    c.note(buf);
    c.require(r64.max_rel_err <= 1e-6, "float64 gradient error above 1e-6");
    c.require(r32.max_rel_err <= 1e-3, "float32 gradient error above 1e-3");
    c.require(elapsed < 60.0, "runtime exceeded 1 minute");
    return c;
}

// ---- criterion 2: planner oracle -------------------------------------------

struct BfResult {
    bool reachable = false;
    double cost = 0.0;
};

BfResult bellman_ford_cost(const PrmGraph& g, int s, int t) {
    const int n = g.size();
    std::vector<double> dist(static_cast<std::size_t>(n), 1e300);
    dist[static_cast<std::size_t>(s)] = 0.0;
    for (int sweep = 0; sweep < n; ++sweep) {
        bool changed = false;
        for (int u = 0; u < n; ++u) {
            if (dist[static_cast<std::size_t>(u)] >= 1e300) continue;
            for (const PrmEdge& e : g.adjacency[static_cast<std::size_t>(u)]) {
                const double nd = dist[static_cast<std::size_t>(u)] + e.weight;
                if (nd < dist[static_cast<std::size_t>(e.to)]) {
                    dist[static_cast<std::size_t>(e.to)] = nd;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    BfResult r;
    r.reachable = dist[static_cast<std::size_t>(t)] < 1e300;
    r.cost = dist[static_cast<std::size_t>(t)];
    return r;
}

Check criterion_2() {
    Check c;
    const auto t0 = Clock::now();

    // 200 random graphs against Bellman-Ford, exact cost equality
    Rng rng(2024);
    int exact = 0;
    int mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_int(0, 17));
        PrmGraph g;
        for (int i = 0; i < n; ++i)
            g.vertices.push_back({rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0)});
        g.adjacency.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                if (rng.uniform() > 0.3) continue;
                const double w = trial % 2 == 0
                                     ? static_cast<double>(rng.uniform_int(1, 4))
                                     : rng.uniform(0.1, 5.0);
                g.adjacency[static_cast<std::size_t>(i)].push_back({j, w});
                g.adjacency[static_cast<std::size_t>(j)].push_back({i, w});
            }
        const int s = static_cast<int>(rng.uniform_int(0, n - 1));
        const int t = static_cast<int>(rng.uniform_int(0, n - 1));
        const BfResult oracle = bellman_ford_cost(g, s, t);
        const auto got = shortest_path(g, s, t);
        if (got.has_value() != oracle.reachable) {
            ++mismatches;
            continue;
        }
        if (got) {
            if (got->cost == oracle.cost)
                ++exact;
            else
                ++mismatches;
        }
    }
    c.require(mismatches == 0, "shortest_path disagreed with Bellman-Ford");

    // 50 randomized worlds: every roadmap edge re-validates at 10x finer step
    WorldTemplate tmpl;
    tmpl.bounds = {0.0, 0.0, 4.5, 4.5};
    tmpl.n_obstacles_min = 8;
    tmpl.n_obstacles_max = 12;
    tmpl.width_min = 0.2;
    tmpl.width_max = 0.55;
    PrmConfig pc;
    pc.n_samples = 150;
    pc.connect_distance = 2.0;
    pc.sample_step = 0.055;
    pc.radius = 0.19;
    long edges = 0;
    long bad_edges = 0;
    for (int widx = 0; widx < 50; ++widx) {
        const World w = randomize(tmpl, derive_seed(777, "crit2.world", static_cast<std::uint64_t>(widx)));
        pc.seed = derive_seed(777, "crit2.prm", static_cast<std::uint64_t>(widx));
        const PrmGraph g = build_prm(w, pc);
        for (int u = 0; u < g.size(); ++u)
            for (const PrmEdge& e : g.adjacency[static_cast<std::size_t>(u)]) {
                if (e.to < u) continue;
                ++edges;
                if (!segment_free(w, g.vertices[static_cast<std::size_t>(u)],
                                  g.vertices[static_cast<std::size_t>(e.to)], pc.radius,
                                  pc.sample_step / 10.0))
                    ++bad_edges;
            }
    }
    c.require(bad_edges == 0, "roadmap edges failed finer re-validation");

    const double elapsed = seconds_since(t0);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d graphs exact, %ld edges re-validated across 50 worlds, %.1fs",
                  exact, edges, elapsed);
    c.note(buf);
    c.require(elapsed < 60.0, "runtime exceeded 1 minute");
    return c;
}

// ---- criterion 3: data integrity -------------------------------------------

std::string ci_dataset_path() { return g_work + "/ci_dataset.jsonl"; }

Json ci_collect_config() {
    Json j = load_repro_config(g_work);
    j["collect"]["trajectories"] = 200;
    j["seed"] = 424242;
    return j;
}

void build_ci_dataset() {
    const Json j = ci_collect_config();
    run_stage(ci_dataset_path(), j, [&] {
        pl::cmd_collect(pl::RunConfig::parse(j), ci_dataset_path());
    });
}

Check criterion_3() {
    Check c;
    build_ci_dataset();
    const Dataset ds = load_dataset_jsonl(ci_dataset_path());
    const Json cfg = ci_collect_config();
    const double eps = cfg.at("env").at("success_eps").get<double>();

    c.require(ds.size() == 200, "expected 200 trajectories");
    int rtg_violations = 0;
    int eps_violations = 0;
    for (const Trajectory& t : ds.trajectories) {
        if (!(dist(t.poses.back().position(), t.goal) < eps)) ++eps_violations;
        // R0 equals the right-to-left reward sum, and the stepwise identity
        // holds exactly at every index
        double acc = 0.0;
        for (std::size_t i = t.size(); i-- > 0;) acc += t.transitions[i].reward;
        if (t.transitions[0].rtg != acc) ++rtg_violations;
        for (std::size_t i = 0; i + 1 < t.size(); ++i)
            if (t.transitions[i].rtg != t.transitions[i].reward + t.transitions[i + 1].rtg)
                ++rtg_violations;
        if (t.transitions.back().rtg != t.transitions.back().reward) ++rtg_violations;
    }
    c.require(eps_violations == 0, std::to_string(eps_violations) + " trajectories end outside eps");
    c.require(rtg_violations == 0, std::to_string(rtg_violations) + " return-to-go identity violations");

    // byte-identical regeneration from the manifest alone
    const Json manifest = pl::read_manifest_for(ci_dataset_path());
    const std::string regen = g_work + "/ci_dataset_regen.jsonl";
    pl::reproduce_collect_from_manifest(manifest, regen);
    c.require(read_text_file(regen) == read_text_file(ci_dataset_path()),
              "manifest regeneration differs");
    fs::remove(regen);

    c.note("200 trajectories, all within eps, exact return identities, regeneration byte-identical");
    return c;
}

// ---- criterion 4: desk-scale reproduction ----------------------------------

constexpr int kSeeds = 3;

std::string repro_dataset_path() { return g_work + "/repro/dataset.jsonl"; }
std::string repro_ct_path(int s) { return g_work + "/repro/ct_s" + std::to_string(s) + ".ckpt"; }
std::string repro_bc_path(int s) { return g_work + "/repro/bc_s" + std::to_string(s) + ".ckpt"; }
std::string repro_value_path(int s) {
    return g_work + "/repro/value_s" + std::to_string(s) + ".ckpt";
}
std::string repro_fct_path(int s) {
    return g_work + "/repro/f_ct_s" + std::to_string(s) + ".ckpt";
}

void build_repro_artifacts() {
    const Json base = load_repro_config(g_work + "/repro");
    const pl::RunConfig cfg = pl::RunConfig::parse(base);
    pl::ensure_dir(g_work + "/repro");

    Json collect_stage = base;
    run_stage(repro_dataset_path(), collect_stage, [&] {
        std::printf("  [stage] collecting %d planner trajectories...\n",
                    base["collect"]["trajectories"].get<int>());
        std::fflush(stdout);
        pl::cmd_collect(cfg, repro_dataset_path());
    });

    for (int s = 0; s < kSeeds; ++s) {
        Json stage = base;
        stage["__stage"] = "ct_seed" + std::to_string(s);
        run_stage(repro_ct_path(s), stage, [&] {
            std::printf("  [stage] training CT seed %d (%ld updates)...\n", s,
                        base["train"]["updates"].get<long>());
            std::fflush(stdout);
            pl::cmd_train(cfg, repro_dataset_path(), true, s, repro_ct_path(s));
        });
        stage["__stage"] = "bc_seed" + std::to_string(s);
        run_stage(repro_bc_path(s), stage, [&] {
            std::printf("  [stage] training BC-CT seed %d...\n", s);
            std::fflush(stdout);
            pl::cmd_train(cfg, repro_dataset_path(), false, s, repro_bc_path(s));
        });
        stage["__stage"] = "value_seed" + std::to_string(s);
        run_stage(repro_value_path(s), stage, [&] {
            std::printf("  [stage] training value net seed %d...\n", s);
            std::fflush(stdout);
            pl::cmd_train_value(cfg, repro_dataset_path(), repro_value_path(s), s);
        });
        stage["__stage"] = "fct_seed" + std::to_string(s);
        run_stage(repro_fct_path(s), stage, [&] {
            std::printf("  [stage] fine-tuning F-CT seed %d (%d recoveries)...\n", s,
                        base["finetune"]["recoveries"].get<int>());
            std::fflush(stdout);
            pl::cmd_finetune(cfg, repro_ct_path(s), repro_value_path(s), repro_dataset_path(),
                             repro_fct_path(s));
        });
    }
}

Check criterion_4() {
    Check c;
    const auto t0 = Clock::now();
    build_repro_artifacts();

    Json base = load_repro_config(g_work + "/repro");
    Json methods = Json::array();
    auto paths_of = [&](auto fn) {
        Json arr = Json::array();
        for (int s = 0; s < kSeeds; ++s) arr.push_back(fn(s));
        return arr;
    };
    Json values = paths_of(repro_value_path);
    methods.push_back(Json{{"name", "BC-CT"},
                           {"checkpoints", paths_of(repro_bc_path)},
                           {"use_returns", false}});
    methods.push_back(Json{{"name", "CT"},
                           {"checkpoints", paths_of(repro_ct_path)},
                           {"value_checkpoints", values}});
    methods.push_back(Json{{"name", "F-CT"},
                           {"checkpoints", paths_of(repro_fct_path)},
                           {"value_checkpoints", values}});
    base["eval"]["methods"] = methods;
    const pl::RunConfig cfg = pl::RunConfig::parse(base);

    std::printf("  [stage] paired evaluation: 20 worlds x 25 pairs x 3 methods x 3 seeds...\n");
    std::fflush(stdout);
    const pl::EvalOutcome out = pl::cmd_eval(cfg, g_work + "/repro/eval");
    std::printf("%s", out.summary.table().c_str());

    double bc = 0, ct_mean = 0, fct = 0;
    for (const MethodSummary& m : out.summary.methods) {
        if (m.name == "BC-CT") bc = m.mean_success;
        if (m.name == "CT") ct_mean = m.mean_success;
        if (m.name == "F-CT") fct = m.mean_success;
    }
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "BC-CT %.2f%% <= CT %.2f%% <= F-CT %.2f%%, F-BC gap %.2f pts, %.0f min",
                  bc, ct_mean, fct, fct - bc, seconds_since(t0) / 60.0);
    c.note(buf);
    c.require(bc <= ct_mean, "ordering violated: BC-CT > CT");
    c.require(ct_mean <= fct, "ordering violated: CT > F-CT");
    c.require(fct - bc >= 2.0, "F-CT does not beat BC-CT by 2 points");
    c.require(ct_mean >= 80.0, "CT mean success below 80%");
    return c;
}

// ---- criterion 5: value-function conditioning -------------------------------

Check criterion_5() {
    Check c;
    build_ci_dataset();

    // value net trained on the collected set with the default conditioning rule
    const std::string vpath = g_work + "/ci_value.ckpt";
    Json stage = ci_collect_config();
    stage["__stage"] = "ci_value";
    run_stage(vpath, stage, [&] {
        Json j = ci_collect_config();
        j["train_value"] = Json{{"updates", 6000}, {"batch_size", 128}, {"lr", 3e-4},
                                {"weight_decay", 0.0}, {"warmup", 500}};
        pl::cmd_train_value(pl::RunConfig::parse(j), ci_dataset_path(), vpath);
    });
    const ct::ValueNet vnet = ct::value_from_checkpoint(nn::load_checkpoint(vpath));

    // held-out states: a fresh collection with a different seed
    const std::string held_path = g_work + "/ci_heldout.jsonl";
    Json held_cfg = ci_collect_config();
    held_cfg["seed"] = 777777;
    held_cfg["collect"]["trajectories"] = 60;
    run_stage(held_path, held_cfg, [&] {
        pl::cmd_collect(pl::RunConfig::parse(held_cfg), held_path);
    });
    const Dataset held = load_dataset_jsonl(held_path);

    std::vector<std::pair<std::size_t, int>> picks;
    std::vector<double> realized;
    std::vector<double> neg_goal_dist;
    Rng rng(31);
    for (std::size_t ti = 0; ti < held.size(); ++ti) {
        const Trajectory& t = held.trajectories[ti];
        for (int k = 0; k < 34 && static_cast<std::size_t>(k) < t.size(); ++k) {
            const int idx = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(t.size()) - 1));
            picks.emplace_back(ti, idx);
            realized.push_back(t.transitions[static_cast<std::size_t>(idx)].rtg);
            neg_goal_dist.push_back(-norm(t.transitions[static_cast<std::size_t>(idx)].goal_delta));
        }
    }
    const ct::StateBatch batch = ct::build_state_batch(held.trajectories, vnet.config, picks);
    const std::vector<double> predicted = ct::predict_values(vnet, batch);
    const double rho_rtg = spearman(predicted, realized);
    const double rho_goal = spearman(predicted, neg_goal_dist);

    // conditioned rollouts read the value net, never a hand-set constant
    const Json cfg_json = ci_collect_config();
    const EnvSpec env = EnvSpec::from_json(cfg_json.at("env"));
    const WorldTemplate tmpl = WorldTemplate::from_json(cfg_json.at("world").at("template"));
    const World w = randomize(tmpl, 999);
    ct::CtConfig mc;
    mc.layers = 1;
    mc.heads = 2;
    mc.embed_dim = 16;
    mc.proprio_dim = 2;
    mc.action_scale = env.action_scale();
    const ct::ControlTransformer probe_model = ct::ControlTransformer::init(mc, 3);
    ct::ConditionedPolicy policy;
    policy.model = &probe_model;
    policy.vnet = &vnet;
    policy.rule.k = 1.0;
    ct::RolloutOptions opts;
    opts.heading_seed = 4;
    opts.horizon_override = 12;
    const ct::RolloutReport rep =
        ct::rollout_conditioned(policy, env, w, {1.0, 1.0}, {3.2, 3.2}, opts);
    RobotState s0 = make_start_state(env, {1.0, 1.0}, rep.path.front().psi);
    const double v0 = ct::value_of_state(vnet, observe(env, w, s0, {3.2, 3.2}));
    c.require(!rep.rtg_stream.empty() && rep.rtg_stream[0] == policy.rule.k * v0,
              "initial return token is not k*V(s0|g0)");
    bool recursion_ok = true;
    for (std::size_t t = 0; t + 1 < rep.rtg_stream.size(); ++t)
        recursion_ok =
            recursion_ok && rep.rtg_stream[t + 1] == rep.rtg_stream[t] - rep.rewards[t];
    c.require(recursion_ok, "return-token recursion broken");

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "Spearman(V, realized RTG) = %.3f (>=0.7), Spearman(V, -|g|) = %.3f (>=0.8), "
                  "%zu held-out states",
                  rho_rtg, rho_goal, picks.size());
    c.note(buf);
    c.require(rho_rtg >= 0.7, "value/realized-return correlation below 0.7");
    c.require(rho_goal >= 0.8, "value/goal-distance correlation below 0.8");
    return c;
}

// ---- criterion 6: cross-robot transfer --------------------------------------

Check criterion_6() {
    Check c;
    const auto t0 = Clock::now();
    pl::ensure_dir(g_work + "/transfer");

    // source: a desk-scale diffdrive policy on the shared CI dataset
    build_ci_dataset();
    Json src_cfg = ci_collect_config();
    src_cfg["model"] = Json{{"layers", 2}, {"heads", 2}, {"embed_dim", 64},
                            {"context_train", 5}, {"context_eval", 5}, {"dropout", 0.1},
                            {"nonlinearity", "relu"}, {"rtg_scale", 100.0}};
    src_cfg["train"] = Json{{"updates", 4000}, {"batch_size", 64}, {"lr", 3e-4},
                            {"weight_decay", 1e-4}, {"warmup", 1000}};
    const std::string src_path = g_work + "/transfer/source_ct.ckpt";
    Json stage = src_cfg;
    stage["__stage"] = "transfer_source";
    run_stage(src_path, stage, [&] {
        std::printf("  [stage] training transfer source (diffdrive)...\n");
        std::fflush(stdout);
        pl::cmd_train(pl::RunConfig::parse(src_cfg), ci_dataset_path(), true, 0, src_path);
    });

    // point-robot data in the training mazes
    Json pt_cfg = load_json_file(g_assets + "/configs/point_maze.json");
    pt_cfg["world"]["maze_files"] = Json::array(
        {g_assets + "/mazes/maze_train_a.txt", g_assets + "/mazes/maze_train_b.txt"});
    pt_cfg["out_dir"] = g_work + "/transfer";
    const std::string pt_data = g_work + "/transfer/point_dataset.jsonl";
    run_stage(pt_data, pt_cfg, [&] {
        std::printf("  [stage] collecting point-robot maze trajectories...\n");
        std::fflush(stdout);
        pl::cmd_collect(pl::RunConfig::parse(pt_cfg), pt_data);
    });

    // from-scratch point policy, 10k updates
    Json scratch_cfg = pt_cfg;
    scratch_cfg["train"] = Json{{"updates", 10000}, {"batch_size", 64}, {"lr", 3e-4},
                                {"weight_decay", 1e-4}, {"warmup", 1000}};
    const std::string scratch_path = g_work + "/transfer/point_scratch.ckpt";
    stage = scratch_cfg;
    stage["__stage"] = "point_scratch";
    run_stage(scratch_path, stage, [&] {
        std::printf("  [stage] training point policy from scratch (10k updates)...\n");
        std::fflush(stdout);
        pl::cmd_train(pl::RunConfig::parse(scratch_cfg), pt_data, true, 0, scratch_path);
    });

    // transfer-initialized point policy, 5k updates
    Json tr_cfg = scratch_cfg;
    tr_cfg["train"]["updates"] = 5000;
    const std::string tr_init_path = g_work + "/transfer/point_transfer_init.ckpt";
    const std::string tr_path = g_work + "/transfer/point_transfer.ckpt";
    stage = tr_cfg;
    stage["__stage"] = "point_transfer";
    run_stage(tr_path, stage, [&] {
        std::printf("  [stage] transfer-init + 5k update fine-tune...\n");
        std::fflush(stdout);
        const pl::RunConfig rc = pl::RunConfig::parse(tr_cfg);
        pl::cmd_transfer_init(rc, src_path, tr_init_path);
        // resume from the transferred weights
        const nn::Checkpoint init = nn::load_checkpoint(tr_init_path);
        ct::ControlTransformer model = ct::model_from_checkpoint(init);
        const Dataset ds = load_dataset_jsonl(pt_data);
        ct::TrainConfig tc = ct::TrainConfig::from_json(tr_cfg.at("train"));
        tc.seed = derive_seed(rc.seed, "train", 0);
        nn::AdamW opt = ct::make_optimizer(tc);
        const ct::TrainResult res = ct::train_ct(model, ds.trajectories, tc, opt);
        Json ckpt_cfg = init.config;
        ckpt_cfg["train"] = tc.to_json();
        save_checkpoint(tr_path, model.params, opt.step_count, ckpt_cfg);
        Json losses = Json::array();
        for (double l : res.losses) losses.push_back(l);
        save_json_file(tr_path + ".losses.json", Json{{"losses", losses}});
    });

    // windowed training-loss comparison: does transfer reach the scratch
    // model's 10k-update loss within 5k updates?
    auto windowed = [](const std::vector<double>& v, std::size_t end, std::size_t w) {
        const std::size_t lo = end > w ? end - w : 0;
        double s = 0;
        for (std::size_t i = lo; i < end; ++i) s += v[i];
        return s / static_cast<double>(end - lo);
    };
    std::vector<double> scratch_losses;
    {
        // loss curve persisted by cmd_train
        const std::string csv = read_text_file(scratch_path + ".loss.csv");
        std::size_t pos = csv.find('\n') + 1;
        while (pos < csv.size()) {
            const std::size_t c1 = csv.find(',', pos);
            const std::size_t c2 = csv.find(',', c1 + 1);
            scratch_losses.push_back(std::strtod(csv.c_str() + c1 + 1, nullptr));
            pos = csv.find('\n', c2);
            if (pos == std::string::npos) break;
            ++pos;
        }
    }
    std::vector<double> transfer_losses;
    const Json transfer_doc = load_json_file(tr_path + ".losses.json");
    for (const Json& l : transfer_doc.at("losses")) transfer_losses.push_back(l.get<double>());

    const double scratch_final = windowed(scratch_losses, scratch_losses.size(), 200);
    double transfer_best = 1e300;
    std::size_t reached_at = 0;
    for (std::size_t u = 200; u <= transfer_losses.size(); u += 50) {
        const double wl = windowed(transfer_losses, u, 200);
        if (wl < transfer_best) transfer_best = wl;
        if (transfer_best <= scratch_final && reached_at == 0) reached_at = u;
    }

    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "scratch@10k windowed loss %.5g, transfer best %.5g (reached at update %zu), "
                  "%.0f min",
                  scratch_final, transfer_best, reached_at, seconds_since(t0) / 60.0);
    c.note(buf);
    c.require(reached_at > 0 && reached_at <= 5000,
              "transfer did not reach the from-scratch 10k loss within 5k updates");
    c.require(seconds_since(t0) < 1800.0, "runtime exceeded 30 minutes");
    return c;
}

// ---- criterion 7: maze generalization ---------------------------------------

Check criterion_7() {
    Check c;
    build_repro_artifacts();  // reuses cached checkpoints when criterion 4 ran

    Json base = load_repro_config(g_work + "/repro");
    // maze-family episode semantics for the cluttered-world policy; pair
    // sampling keeps goals within the training goal-distance support
    base["env"]["success_eps"] = 0.5;
    base["env"]["horizon"] = 400;
    Json ct_ckpts = Json::array();
    Json value_ckpts = Json::array();
    for (int s = 0; s < kSeeds; ++s) {
        ct_ckpts.push_back(repro_ct_path(s));
        value_ckpts.push_back(repro_value_path(s));
    }
    base["eval"] = Json{
        {"n_envs", 12},
        {"goals_per_env", 10},
        {"max_pair_distance", 4.0},
        {"maze_files",
         Json::array({g_assets + "/mazes/maze_eval_a.txt", g_assets + "/mazes/maze_eval_b.txt",
                      g_assets + "/mazes/maze_eval_c.txt", g_assets + "/mazes/maze_eval_d.txt",
                      g_assets + "/mazes/maze_eval_e.txt", g_assets + "/mazes/maze_eval_f.txt"})},
        {"maze_cell_size", 1.0},
        {"methods", Json::array({Json{{"name", "CT"},
                                      {"checkpoints", ct_ckpts},
                                      {"value_checkpoints", value_ckpts}}})}};
    const pl::RunConfig cfg = pl::RunConfig::parse(base);
    std::printf("  [stage] evaluating the cluttered-world CT on held-out mazes...\n");
    std::fflush(stdout);
    const pl::EvalOutcome out = pl::cmd_eval(cfg, g_work + "/maze_eval");
    std::printf("%s", out.summary.table().c_str());
    const double success = out.summary.methods.at(0).mean_success;

    char buf[160];
    std::snprintf(buf, sizeof(buf), "maze-family success %.2f%% over %d episodes (>=60%%)",
                  success, out.summary.episodes_per_seed);
    c.note(buf);
    c.require(success >= 60.0, "maze generalization below 60%");
    return c;
}

// ---- criterion 8: determinism and persistence --------------------------------

Check criterion_8() {
    Check c;

    // identical seeds give identical loss curves
    Json j = ci_collect_config();
    j["collect"]["trajectories"] = 12;
    j["seed"] = 515151;
    const std::string small_data = g_work + "/det_dataset.jsonl";
    run_stage(small_data, j, [&] { pl::cmd_collect(pl::RunConfig::parse(j), small_data); });
    const Dataset ds = load_dataset_jsonl(small_data);

    ct::CtConfig mc;
    mc.layers = 2;
    mc.heads = 2;
    mc.embed_dim = 32;
    mc.proprio_dim = 2;
    mc.action_scale = {0.22, 2.84};
    ct::TrainConfig tc;
    tc.updates = 120;
    tc.batch_size = 16;
    tc.lr = 3e-4;
    tc.warmup = 40;
    tc.seed = 9;
    auto run_training = [&] {
        ct::ControlTransformer model = ct::ControlTransformer::init(mc, 4);
        nn::AdamW opt = ct::make_optimizer(tc);
        return ct::train_ct(model, ds.trajectories, tc, opt).losses;
    };
    const std::vector<double> l1 = run_training();
    const std::vector<double> l2 = run_training();
    c.require(l1.size() == l2.size() &&
                  std::memcmp(l1.data(), l2.data(), l1.size() * sizeof(double)) == 0,
              "loss curves differ across identical runs");

    // checkpoint save -> load -> predict is bitwise identical, and the file
    // round-trips byte for byte
    ct::ControlTransformer model = ct::ControlTransformer::init(mc, 4);
    nn::AdamW opt = ct::make_optimizer(tc);
    ct::train_ct(model, ds.trajectories, tc, opt);
    const std::string ckpt1 = g_work + "/det_model.ckpt";
    save_checkpoint(ckpt1, model.params, opt.step_count, Json{{"model", mc.to_json()}});
    const nn::Checkpoint loaded = nn::load_checkpoint(ckpt1);
    const ct::ControlTransformer reloaded = ct::model_from_checkpoint(loaded);
    const ct::WindowBatch probe = random_window_batch(mc, 1, 5, 99);
    const std::vector<double> p1 = ct::predict_action(model, probe);
    const std::vector<double> p2 = ct::predict_action(reloaded, probe);
    c.require(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0,
              "predictions differ after checkpoint round trip");
    const std::string ckpt2 = g_work + "/det_model2.ckpt";
    save_checkpoint(ckpt2, loaded.params, loaded.step, loaded.config);
    c.require(read_text_file(ckpt1) == read_text_file(ckpt2), "checkpoint bytes differ");

    // dataset formats round-trip
    const std::string rt = g_work + "/det_roundtrip.jsonl";
    save_dataset_jsonl(rt, ds);
    c.require(read_text_file(rt) == read_text_file(small_data), "dataset jsonl round trip differs");
    save_dataset_binary(g_work + "/det.bin", g_work + "/det.bin.index.json", ds);
    const Dataset bin = load_dataset_binary(g_work + "/det.bin", g_work + "/det.bin.index.json");
    c.require(bin.size() == ds.size(), "binary dataset lost trajectories");
    bool occ_equal = true;
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t t = 0; t < ds.trajectories[i].size(); ++t)
            occ_equal = occ_equal && bin.trajectories[i].transitions[t].occ ==
                                         ds.trajectories[i].transitions[t].occ;
    c.require(occ_equal, "binary dataset occupancy differs");

    c.note("loss curves, checkpoints and dataset formats are reproducible");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    int criterion = 0;
    g_work = "acceptance_work";
    g_assets = "assets";
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) throw std::runtime_error("missing value for " + arg);
            return argv[++i];
        };
        if (arg == "--criterion") criterion = std::atoi(next().c_str());
        else if (arg == "--work") g_work = next();
        else if (arg == "--assets") g_assets = next();
    }
    if (criterion < 1 || criterion > 8) {
        std::fprintf(stderr, "usage: acceptance --criterion N --work DIR --assets DIR\n");
        return 2;
    }
    pl::ensure_dir(g_work);

    static const char* kTitles[9] = {
        "",
        "gradient oracle vs central finite differences",
        "planner oracle: Dijkstra vs Bellman-Ford, edge re-validation",
        "data integrity on a 200-trajectory collection",
        "desk-scale success ordering BC-CT <= CT <= F-CT",
        "value-function conditioning correlations",
        "cross-robot transfer speedup",
        "generalization to held-out maze worlds",
        "determinism and persistence round trips",
    };

    Check result;
    try {
        switch (criterion) {
            case 1: result = criterion_1(); break;
            case 2: result = criterion_2(); break;
            case 3: result = criterion_3(); break;
            case 4: result = criterion_4(); break;
            case 5: result = criterion_5(); break;
            case 6: result = criterion_6(); break;
            case 7: result = criterion_7(); break;
            case 8: result = criterion_8(); break;
        }
    } catch (const std::exception& e) {
        result.ok = false;
        result.detail = std::string("exception: ") + e.what();
    }

    std::printf("[%s] criterion %d: %s — %s\n", result.ok ? "PASS" : "FAIL", criterion,
                kTitles[criterion], result.detail.c_str());
    return result.ok ? 0 : 1;
}
