#include "ctnav/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <omp.h>

#include "ctnav/ct/train.hpp"
#include "ctnav/nn/checkpoint.hpp"
#include "ctnav/svg.hpp"

namespace fs = std::filesystem;

namespace ctnav::pipeline {

RunConfig RunConfig::parse(Json j) {
    RunConfig c;
    c.seed = j.value("seed", 0ull);
    c.out_dir = j.value("out_dir", std::string("runs/out"));
    c.raw = std::move(j);
    return c;
}

RunConfig RunConfig::load(const std::string& path) { return parse(load_json_file(path)); }

const Json& RunConfig::section(const std::string& name) const {
    if (!raw.contains(name))
        throw ConfigError("config is missing the '" + name + "' section");
    return raw.at(name);
}

bool RunConfig::has_section(const std::string& name) const { return raw.contains(name); }

EnvSpec RunConfig::env() const { return EnvSpec::from_json(section("env")); }

WorldTemplate RunConfig::world_template() const {
    const Json& w = section("world");
    if (!w.contains("template")) throw ConfigError("world section has no template");
    return WorldTemplate::from_json(w.at("template"));
}

std::vector<std::string> RunConfig::maze_files() const {
    const Json& w = section("world");
    if (!w.contains("maze_files")) return {};
    return w.at("maze_files").get<std::vector<std::string>>();
}

CollectConfig RunConfig::collect_config() const {
    CollectConfig c = CollectConfig::from_json(section("collect"));
    if (raw.contains("prm")) c.prm = PrmConfig::from_json(raw.at("prm"));
    if (c.seed == 0) c.seed = derive_seed(seed, "collect", 0);
    return c;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw RuntimeFailure("cannot create directory " + dir + ": " + ec.message());
}

int recorded_threads() { return omp_get_max_threads(); }

namespace {

std::string manifest_path_for(const std::string& artifact_path) {
    return artifact_path + ".manifest.json";
}

std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_text_file(path)); }

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void require_input(const std::string& path, const std::string& producing_command) {
    if (!fs::exists(path))
        throw RuntimeFailure("missing input artifact '" + path + "'; produce it with `ctnav " +
                             producing_command + "` first");
}

}  // namespace

void write_manifest(const std::string& artifact_path, const std::string& command,
                    const Json& effective_config, const std::vector<std::string>& inputs,
                    std::uint64_t seed) {
    Json m;
    m["artifact"] = fs::path(artifact_path).filename().string();
    m["command"] = command;
    m["config"] = effective_config;
    m["config_hash"] = config_hash(effective_config);
    Json in = Json::array();
    for (const std::string& p : inputs)
        in.push_back(Json{{"path", fs::path(p).filename().string()}, {"fnv64", hex64(file_hash(p))}});
    m["inputs"] = in;
    m["seed"] = seed;
    m["threads"] = recorded_threads();
    m["version"] = kVersion;
    save_json_file(manifest_path_for(artifact_path), m);
}

Json read_manifest_for(const std::string& artifact_path) {
    return load_json_file(manifest_path_for(artifact_path));
}

std::vector<std::string> cmd_gen_worlds(const RunConfig& cfg) {
    const Json& wsec = cfg.section("world");
    const std::string dir = cfg.out_dir + "/worlds";
    ensure_dir(dir);
    std::vector<std::string> paths;
    if (wsec.contains("maze_files")) {
        const double cell = wsec.value("maze_cell_size", 1.0);
        int i = 0;
        for (const std::string& mf : cfg.maze_files()) {
            World w = world_from_maze(read_text_file(mf), cell);
            char name[64];
            std::snprintf(name, sizeof(name), "%s/world_%03d.json", dir.c_str(), i++);
            save_json_file(name, w.to_json());
            paths.push_back(name);
        }
    } else {
        const WorldTemplate tmpl = cfg.world_template();
        const int count = wsec.value("count", 1);
        for (int i = 0; i < count; ++i) {
            World w = randomize(tmpl, derive_seed(cfg.seed, "gen.world",
                                                  static_cast<std::uint64_t>(i)));
            char name[64];
            std::snprintf(name, sizeof(name), "%s/world_%03d.json", dir.c_str(), i);
            save_json_file(name, w.to_json());
            paths.push_back(name);
        }
    }
    Json eff{{"world", wsec}, {"seed", cfg.seed}};
    write_manifest(dir + "/worlds", "gen-worlds", eff, {}, cfg.seed);
    return paths;
}

std::string cmd_build_prm(const RunConfig& cfg, const std::string& world_file,
                          const std::string& out_file) {
    require_input(world_file, "gen-worlds");
    const World w = World::from_json(load_json_file(world_file));
    PrmConfig pc = PrmConfig::from_json(cfg.section("prm"));
    if (pc.seed == 0) pc.seed = derive_seed(cfg.seed, "prm", 0);
    const PrmGraph g = build_prm(w, pc);
    save_json_file(out_file, g.to_json());
    Json eff{{"prm", pc.to_json()}, {"seed", cfg.seed}};
    write_manifest(out_file, "build-prm", eff, {world_file}, cfg.seed);
    return out_file;
}

namespace {

// standalone world section: maze files are resolved to embedded world JSON so
// a manifest regenerates without touching the original assets
Json resolve_world_section(const Json& wsec) {
    if (wsec.contains("template")) return Json{{"template", wsec.at("template")}};
    if (wsec.contains("fixed_worlds")) return Json{{"fixed_worlds", wsec.at("fixed_worlds")}};
    if (wsec.contains("maze_files")) {
        const double cell = wsec.value("maze_cell_size", 1.0);
        Json worlds = Json::array();
        for (const std::string& mf : wsec.at("maze_files").get<std::vector<std::string>>())
            worlds.push_back(world_from_maze(read_text_file(mf), cell).to_json());
        return Json{{"fixed_worlds", worlds}};
    }
    throw ConfigError("world section needs template, maze_files or fixed_worlds");
}

WorldSource world_source_from_json(const Json& resolved) {
    if (resolved.contains("template"))
        return WorldSource::from_template(WorldTemplate::from_json(resolved.at("template")));
    std::vector<World> worlds;
    for (const Json& w : resolved.at("fixed_worlds")) worlds.push_back(World::from_json(w));
    return WorldSource::from_worlds(std::move(worlds));
}

Json collect_effective_config(const RunConfig& cfg) {
    return Json{{"env", cfg.env().to_json()},
                {"collect", cfg.collect_config().to_json()},
                {"world", resolve_world_section(cfg.section("world"))},
                {"seed", cfg.seed}};
}

Dataset run_collect(const Json& effective) {
    const EnvSpec env = EnvSpec::from_json(effective.at("env"));
    const CollectConfig ccfg = CollectConfig::from_json(effective.at("collect"));
    const WorldSource source = world_source_from_json(effective.at("world"));
    Dataset ds;
    ds.trajectories = collect_planner_trajectories(env, ccfg, source);
    return ds;
}

}  // namespace

std::string cmd_collect(const RunConfig& cfg, const std::string& out_path) {
    ensure_dir(fs::path(out_path).parent_path().string());
    const Json eff = collect_effective_config(cfg);
    const Dataset ds = run_collect(eff);
    save_dataset_jsonl(out_path, ds);
    save_dataset_binary(out_path + ".bin", out_path + ".bin.index.json", ds);
    write_manifest(out_path, "collect", eff, {}, cfg.seed);
    return out_path;
}

void reproduce_collect_from_manifest(const Json& manifest, const std::string& out_path) {
    const Dataset ds = run_collect(manifest.at("config"));
    save_dataset_jsonl(out_path, ds);
}

namespace {

// optimizer moments live in a sidecar next to the checkpoint so that
// fine-tuning resumes without resetting warmup
void save_optimizer(const std::string& ckpt_path, const nn::AdamW& opt,
                    const nn::ParamStore& params) {
    nn::ParamStore state;
    for (const auto& [name, tensor] : opt.state(params)) state.add(name, *tensor);
    save_checkpoint(ckpt_path + ".opt", state, opt.step_count, Json::object());
}

void load_optimizer(const std::string& ckpt_path, nn::AdamW& opt) {
    const std::string path = ckpt_path + ".opt";
    if (!fs::exists(path)) return;
    nn::Checkpoint ckpt = nn::load_checkpoint(path);
    opt.step_count = ckpt.step;
    for (auto& e : ckpt.params.entries()) opt.load_moment(e.name, std::move(e.value));
}

void write_loss_csv(const std::string& path, const std::vector<double>& losses,
                    const nn::AdamW& opt, long first_update) {
    std::ostringstream out;
    out << "update,loss,lr\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        const long update = first_update + static_cast<long>(i) + 1;
        char line[96];
        std::snprintf(line, sizeof(line), "%ld,%.9g,%.9g\n", update, losses[i],
                      opt.effective_lr(update));
        out << line;
    }
    write_text_file(path, out.str());
}

ct::CtConfig model_config(const RunConfig& cfg) {
    ct::CtConfig mc = ct::CtConfig::from_json(cfg.section("model"));
    const EnvSpec env = cfg.env();
    mc.proprio_dim = env.proprio_dim();
    mc.action_dim = env.action_dim();
    mc.action_scale = env.action_scale();
    return mc;
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& cfg, const std::string& dataset_path, bool use_returns,
                       int model_seed_index, const std::string& out_path) {
    require_input(dataset_path, "collect");
    const Dataset ds = load_dataset_jsonl(dataset_path);
    ct::CtConfig mc = model_config(cfg);
    ct::TrainConfig tc = ct::TrainConfig::from_json(cfg.section("train"));
    tc.use_returns = use_returns;
    if (tc.seed == 0)
        tc.seed = derive_seed(cfg.seed, "train", static_cast<std::uint64_t>(model_seed_index));

    ct::ControlTransformer model = ct::ControlTransformer::init(
        mc, derive_seed(cfg.seed, "model.init", static_cast<std::uint64_t>(model_seed_index)));
    nn::AdamW opt = ct::make_optimizer(tc);
    const ct::TrainResult res = ct::train_ct(model, ds.trajectories, tc, opt);

    ensure_dir(fs::path(out_path).parent_path().string());
    Json ckpt_cfg{{"model", mc.to_json()},
                  {"train", tc.to_json()},
                  {"robot", robot_kind_name(cfg.env().robot)},
                  {"model_seed_index", model_seed_index}};
    save_checkpoint(out_path, model.params, opt.step_count, ckpt_cfg);
    save_optimizer(out_path, opt, model.params);

    TrainOutcome out;
    out.checkpoint = out_path;
    out.loss_csv = out_path + ".loss.csv";
    out.losses = res.losses;
    write_loss_csv(out.loss_csv, res.losses, opt, 0);
    write_manifest(out_path, "train", ckpt_cfg, {dataset_path}, cfg.seed);
    return out;
}

TrainOutcome cmd_train_value(const RunConfig& cfg, const std::string& dataset_path,
                             const std::string& out_path, int model_seed_index) {
    require_input(dataset_path, "collect");
    const Dataset ds = load_dataset_jsonl(dataset_path);
    const Json& vsec = cfg.section("value");
    ct::ValueConfig vc = ct::ValueConfig::from_json(vsec);
    const EnvSpec env = cfg.env();
    vc.proprio_dim = env.proprio_dim();
    const ct::ConditioningRule rule = vsec.contains("rule")
                                          ? ct::ConditioningRule::from_json(vsec.at("rule"))
                                          : ct::ConditioningRule{};
    ct::TrainConfig tc = ct::TrainConfig::from_json(cfg.section("train_value"));
    if (tc.seed == 0)
        tc.seed = derive_seed(cfg.seed, "train_value", static_cast<std::uint64_t>(model_seed_index));

    ct::ValueNet net = ct::ValueNet::init(
        vc, derive_seed(cfg.seed, "value.init", static_cast<std::uint64_t>(model_seed_index)));
    nn::AdamW opt = ct::make_optimizer(tc);
    const ct::TrainResult res = ct::train_value(net, ds.trajectories, rule, tc, opt);

    ensure_dir(fs::path(out_path).parent_path().string());
    Json ckpt_cfg{{"value", vc.to_json()},
                  {"rule", rule.to_json()},
                  {"train_value", tc.to_json()},
                  {"robot", robot_kind_name(env.robot)}};
    save_checkpoint(out_path, net.params, opt.step_count, ckpt_cfg);

    TrainOutcome out;
    out.checkpoint = out_path;
    out.loss_csv = out_path + ".loss.csv";
    out.losses = res.losses;
    write_loss_csv(out.loss_csv, res.losses, opt, 0);
    write_manifest(out_path, "train-value", ckpt_cfg, {dataset_path}, cfg.seed);
    return out;
}

ct::ConditionedPolicy
load_policy(const std::string& ckpt_path, const std::string& value_ckpt_path, bool use_returns,
            std::vector<std::shared_ptr<ct::ControlTransformer>>& model_keepalive,
            std::vector<std::shared_ptr<ct::ValueNet>>& value_keepalive) {
    require_input(ckpt_path, "train");
    auto model = std::make_shared<ct::ControlTransformer>(
        ct::model_from_checkpoint(nn::load_checkpoint(ckpt_path)));
    model_keepalive.push_back(model);
    ct::ConditionedPolicy policy;
    policy.model = model.get();
    if (use_returns && !value_ckpt_path.empty()) {
        require_input(value_ckpt_path, "train-value");
        const nn::Checkpoint vk = nn::load_checkpoint(value_ckpt_path);
        auto vnet = std::make_shared<ct::ValueNet>(ct::value_from_checkpoint(vk));
        value_keepalive.push_back(vnet);
        policy.vnet = vnet.get();
        if (vk.config.contains("rule"))
            policy.rule = ct::ConditioningRule::from_json(vk.config.at("rule"));
    }
    return policy;
}

FinetuneOutcome cmd_finetune(const RunConfig& cfg, const std::string& ckpt_path,
                             const std::string& value_ckpt_path, const std::string& dataset_path,
                             const std::string& out_path) {
    require_input(ckpt_path, "train");
    require_input(dataset_path, "collect");
    const Json& fsec = cfg.section("finetune");
    const int iterations = fsec.value("iterations", 1);
    const int recoveries = fsec.value("recoveries", 500);
    const long updates = fsec.value("updates", 3000L);
    const FailureConfig detector = fsec.contains("failure")
                                       ? FailureConfig::from_json(fsec.at("failure"))
                                       : FailureConfig{};

    const nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_path);
    ct::ControlTransformer model = ct::model_from_checkpoint(ckpt);
    ct::TrainConfig tc = ct::TrainConfig::from_json(ckpt.config.at("train"));
    tc.updates = updates;
    tc.seed = derive_seed(tc.seed, "finetune", 1);
    nn::AdamW opt = ct::make_optimizer(tc);
    load_optimizer(ckpt_path, opt);

    std::vector<std::shared_ptr<ct::ValueNet>> value_keepalive;
    ct::ConditionedPolicy policy;
    policy.model = &model;
    if (tc.use_returns && !value_ckpt_path.empty()) {
        require_input(value_ckpt_path, "train-value");
        const nn::Checkpoint vk = nn::load_checkpoint(value_ckpt_path);
        value_keepalive.push_back(
            std::make_shared<ct::ValueNet>(ct::value_from_checkpoint(vk)));
        policy.vnet = value_keepalive.back().get();
        if (vk.config.contains("rule"))
            policy.rule = ct::ConditioningRule::from_json(vk.config.at("rule"));
    }

    Dataset ds = load_dataset_jsonl(dataset_path);
    const EnvSpec env = cfg.env();
    CollectConfig ccfg = cfg.collect_config();
    const WorldSource source = world_source_from_json(resolve_world_section(cfg.section("world")));

    FinetuneOutcome out;
    for (int i = 0; i < iterations; ++i) {
        CollectConfig iter_cfg = ccfg;
        iter_cfg.seed = derive_seed(ccfg.seed, "finetune.iter", static_cast<std::uint64_t>(i));
        const RecoveryBatch batch =
            collect_recoveries(policy, env, iter_cfg, source, detector, recoveries);
        // the dataset can only grow across iterations
        for (const Trajectory& t : batch.fails) ds.trajectories.push_back(t);
        for (const Trajectory& t : batch.recoveries) ds.trajectories.push_back(t);
        out.pairs_added += static_cast<int>(batch.fails.size());

        ct::TrainConfig iter_tc = tc;
        iter_tc.seed = derive_seed(tc.seed, "finetune.train", static_cast<std::uint64_t>(i));
        ct::train_ct(model, ds.trajectories, iter_tc, opt);
    }

    ensure_dir(fs::path(out_path).parent_path().string());
    out.dataset_union = out_path + ".dataset.jsonl";
    save_dataset_jsonl(out.dataset_union, ds);
    Json ckpt_cfg = ckpt.config;
    ckpt_cfg["finetune"] = Json{{"iterations", iterations},
                                {"recoveries", recoveries},
                                {"updates", updates},
                                {"failure", detector.to_json()}};
    save_checkpoint(out_path, model.params, opt.step_count, ckpt_cfg);
    save_optimizer(out_path, opt, model.params);
    out.checkpoint = out_path;
    write_manifest(out_path, "finetune", ckpt_cfg,
                   {ckpt_path, dataset_path}, cfg.seed);
    return out;
}

Json report_to_json(const ct::RolloutReport& r, int world_index) {
    Json path = Json::array();
    for (const Pose2& p : r.path) path.push_back(Json::array({p.x, p.y, p.psi}));
    return Json{{"success", r.success},
                {"failure_detected", r.failure_detected},
                {"failure_step", r.failure_step},
                {"total_return", r.total_return},
                {"final_dist", r.final_dist},
                {"collisions", r.collisions},
                {"world_index", world_index},
                {"path", path},
                {"rewards", r.rewards},
                {"rtg_stream", r.rtg_stream}};
}

EvalOutcome cmd_eval(const RunConfig& cfg, const std::string& out_dir) {
    const Json& esec = cfg.section("eval");
    EvalProtocol protocol = EvalProtocol::from_json(esec);
    if (cfg.raw.contains("prm") && !esec.contains("prm"))
        protocol.prm = PrmConfig::from_json(cfg.raw.at("prm"));
    if (protocol.seed == 0) protocol.seed = derive_seed(cfg.seed, "eval", 0);
    const EnvSpec env = cfg.env();

    std::vector<World> worlds;
    if (esec.contains("maze_files")) {
        const double cell = esec.value("maze_cell_size", 1.0);
        for (const std::string& mf : esec.at("maze_files").get<std::vector<std::string>>())
            worlds.push_back(world_from_maze(read_text_file(mf), cell));
        if (worlds.empty()) throw ConfigError("eval: maze_files list is empty");
        // round-robin the maze list up to n_envs
        const std::size_t base = worlds.size();
        while (static_cast<int>(worlds.size()) < protocol.n_envs)
            worlds.push_back(worlds[worlds.size() % base]);
        if (static_cast<int>(worlds.size()) > protocol.n_envs)
            worlds.resize(static_cast<std::size_t>(protocol.n_envs));
    } else if (esec.contains("template")) {
        worlds = make_eval_worlds(WorldTemplate::from_json(esec.at("template")), protocol.n_envs,
                                  protocol.seed);
    } else {
        worlds = make_eval_worlds(cfg.world_template(), protocol.n_envs, protocol.seed);
    }

    std::vector<std::shared_ptr<ct::ControlTransformer>> model_keepalive;
    std::vector<std::shared_ptr<ct::ValueNet>> value_keepalive;
    std::vector<EvalMethod> methods;
    std::vector<std::string> input_files;
    for (const Json& msec : esec.at("methods")) {
        EvalMethod m;
        m.name = msec.at("name").get<std::string>();
        const bool use_returns = msec.value("use_returns", true);
        const auto ckpts = msec.at("checkpoints").get<std::vector<std::string>>();
        std::vector<std::string> vals;
        if (msec.contains("value_checkpoints"))
            vals = msec.at("value_checkpoints").get<std::vector<std::string>>();
        for (std::size_t i = 0; i < ckpts.size(); ++i) {
            const std::string v = i < vals.size() ? vals[i] : (vals.empty() ? "" : vals[0]);
            m.seeds.push_back(
                load_policy(ckpts[i], use_returns ? v : "", use_returns, model_keepalive,
                            value_keepalive));
            input_files.push_back(ckpts[i]);
        }
        methods.push_back(std::move(m));
    }

    const EvalResult result = run_eval(protocol, env, worlds, methods);

    ensure_dir(out_dir);
    EvalOutcome out;
    out.summary = result.summary;
    const std::string worlds_dir = out_dir + "/worlds";
    ensure_dir(worlds_dir);
    for (std::size_t i = 0; i < worlds.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s/world_%03d.json", worlds_dir.c_str(),
                      static_cast<int>(i));
        save_json_file(name, worlds[i].to_json());
        out.world_paths.push_back(name);
    }
    const std::vector<EvalEpisode> episodes = sample_eval_episodes(protocol, worlds);
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        for (std::size_t si = 0; si < result.reports[mi].size(); ++si) {
            std::ostringstream fname;
            fname << out_dir << "/reports_" << methods[mi].name << "_seed" << si << ".jsonl";
            std::ofstream rf(fname.str(), std::ios::binary);
            for (std::size_t e = 0; e < result.reports[mi][si].size(); ++e)
                rf << report_to_json(result.reports[mi][si][e],
                                     episodes[e].world_index)
                          .dump()
                   << "\n";
            out.report_paths.push_back(fname.str());
        }
    }
    out.summary_path = out_dir + "/summary.json";
    save_json_file(out.summary_path, result.summary.to_json());
    Json eff{{"eval", esec}, {"env", env.to_json()}, {"seed", cfg.seed}};
    write_manifest(out.summary_path, "eval", eff, input_files, cfg.seed);
    return out;
}

std::string cmd_transfer_init(const RunConfig& cfg, const std::string& source_ckpt,
                              const std::string& out_path) {
    require_input(source_ckpt, "train");
    const nn::Checkpoint source = nn::load_checkpoint(source_ckpt);
    ct::CtConfig mc = model_config(cfg);
    const ct::ControlTransformer model =
        ct::transfer_init(source, mc, derive_seed(cfg.seed, "transfer.init", 0));
    ensure_dir(fs::path(out_path).parent_path().string());
    Json ckpt_cfg{{"model", mc.to_json()},
                  {"robot", robot_kind_name(cfg.env().robot)},
                  {"transfer_from", fs::path(source_ckpt).filename().string()}};
    save_checkpoint(out_path, model.params, 0, ckpt_cfg);
    write_manifest(out_path, "transfer-init", ckpt_cfg, {source_ckpt}, cfg.seed);
    return out_path;
}

std::string cmd_render(const std::string& reports_path, int line_index,
                       const std::string& world_path, const std::string& out_path) {
    require_input(reports_path, "eval");
    require_input(world_path, "eval");
    std::ifstream in(reports_path);
    std::string line;
    int i = 0;
    while (std::getline(in, line)) {
        if (i++ == line_index) break;
    }
    if (i <= line_index) throw RuntimeFailure("render: report line out of range");
    const Json j = Json::parse(line);
    ct::RolloutReport r;
    r.success = j.value("success", false);
    r.collisions = j.value("collisions", 0);
    r.total_return = j.value("total_return", 0.0);
    r.final_dist = j.value("final_dist", 0.0);
    for (const Json& p : j.at("path"))
        r.path.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    r.rewards = j.value("rewards", std::vector<double>{});
    const World w = World::from_json(load_json_file(world_path));
    render_trajectory(r, w, out_path);
    return out_path;
}

}  // namespace ctnav::pipeline
