#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include "ctnav/nn/checkpoint.hpp"
#include "ctnav/pipeline.hpp"

using namespace ctnav;
namespace pl = ctnav::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempRun {
    std::string root;
    TempRun() {
        root = (fs::temp_directory_path() / "ctnav_pipeline_test").string();
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempRun() { fs::remove_all(root); }
};

Json tiny_run_config(const std::string& out_dir) {
    return Json{
        {"seed", 7},
        {"out_dir", out_dir},
        {"env",
         {{"robot", "diffdrive"},
          {"horizon", 120},
          {"success_eps", 0.3},
          {"collision_penalty", -1.0},
          {"obs_source", "lidar"},
          {"lidar_rays", 72},
          {"lidar_range", 1.0},
          {"window_side", 2.0}}},
        {"world",
         {{"template",
           {{"bounds", {0.0, 0.0, 4.5, 4.5}},
            {"n_obstacles", {4, 6}},
            {"width", {0.2, 0.45}}}},
          {"count", 3}}},
        {"prm",
         {{"n_samples", 50}, {"connect_distance", 2.0}, {"sample_step", 0.055}, {"radius", 0.19}}},
        {"collect",
         {{"trajectories", 6},
          {"reset_interval", 3},
          {"min_graph_separation", 2},
          {"reach_eps", 0.15}}},
        {"model",
         {{"layers", 1},
          {"heads", 2},
          {"embed_dim", 16},
          {"context_train", 5},
          {"context_eval", 5},
          {"dropout", 0.1},
          {"nonlinearity", "relu"},
          {"rtg_scale", 100.0}}},
        {"train",
         {{"updates", 150}, {"batch_size", 16}, {"lr", 1e-3}, {"weight_decay", 1e-4},
          {"warmup", 50}}},
        {"value",
         {{"embed_dim", 16},
          {"hidden_dim", 32},
          {"rule", {{"k", 1.0}, {"filter", "collision_free"}}}}},
        {"train_value",
         {{"updates", 150}, {"batch_size", 16}, {"lr", 1e-3}, {"warmup", 50}}},
        {"finetune",
         {{"iterations", 1},
          {"recoveries", 2},
          {"updates", 30},
          {"failure",
           {{"collision_flag", true}, {"stall_window", 25}, {"stall_progress", 0.05}}}}},
    };
}

}  // namespace

TEST_CASE("full pipeline at smoke scale") {
    TempRun tmp;
    Json raw = tiny_run_config(tmp.root + "/run");
    pl::RunConfig cfg = pl::RunConfig::parse(raw);

    // worlds
    const auto worlds = pl::cmd_gen_worlds(cfg);
    CHECK(worlds.size() == 3);
    for (const auto& w : worlds) CHECK(fs::exists(w));

    // roadmap over the first world
    const std::string graph =
        pl::cmd_build_prm(cfg, worlds[0], tmp.root + "/run/graph.json");
    const Json gj = load_json_file(graph);
    CHECK(gj.contains("vertices"));
    CHECK(gj.contains("edges"));
    CHECK(fs::exists(graph + ".manifest.json"));

    // collection is reproducible byte for byte
    const std::string dataset = pl::cmd_collect(cfg, tmp.root + "/run/dataset.jsonl");
    const std::string bytes1 = read_text_file(dataset);
    pl::cmd_collect(cfg, tmp.root + "/run/dataset.jsonl");
    CHECK(read_text_file(dataset) == bytes1);
    CHECK(fs::exists(dataset + ".bin"));
    CHECK(fs::exists(dataset + ".bin.index.json"));

    // regeneration from the manifest alone
    const Json manifest = pl::read_manifest_for(dataset);
    CHECK(manifest.at("command") == "collect");
    pl::reproduce_collect_from_manifest(manifest, tmp.root + "/regen.jsonl");
    CHECK(read_text_file(tmp.root + "/regen.jsonl") == bytes1);

    // policy + ablation + value net
    const auto ct_out = pl::cmd_train(cfg, dataset, true, 0, tmp.root + "/run/ct.ckpt");
    CHECK(ct_out.losses.size() == 150);
    CHECK(fs::exists(ct_out.loss_csv));
    const auto bc_out = pl::cmd_train(cfg, dataset, false, 0, tmp.root + "/run/bc.ckpt");
    const auto value_out = pl::cmd_train_value(cfg, dataset, tmp.root + "/run/value.ckpt");

    // fine-tuning appends pairs and keeps the optimizer step counter running
    const auto ft = pl::cmd_finetune(cfg, ct_out.checkpoint, value_out.checkpoint, dataset,
                                     tmp.root + "/run/f_ct.ckpt");
    CHECK(ft.pairs_added == 2);
    const Dataset base = load_dataset_jsonl(dataset);
    const Dataset grown = load_dataset_jsonl(ft.dataset_union);
    CHECK(grown.size() == base.size() + 4);  // two fail/recovery pairs
    int fails = 0, recs = 0;
    for (const auto& t : grown.trajectories) {
        fails += t.label == TrajLabel::kFail;
        recs += t.label == TrajLabel::kRecovery;
    }
    CHECK(fails == 2);
    CHECK(recs == 2);
    CHECK(nn::load_checkpoint(ft.checkpoint).step == 180);  // 150 + 30, warmup not reset

    // paired evaluation of the three methods
    raw["eval"] = Json{{"n_envs", 2},
                       {"goals_per_env", 2},
                       {"methods",
                        Json::array({Json{{"name", "BC-CT"},
                                          {"checkpoints", {bc_out.checkpoint}},
                                          {"use_returns", false}},
                                     Json{{"name", "CT"},
                                          {"checkpoints", {ct_out.checkpoint}},
                                          {"value_checkpoints", {value_out.checkpoint}}},
                                     Json{{"name", "F-CT"},
                                          {"checkpoints", {ft.checkpoint}},
                                          {"value_checkpoints", {value_out.checkpoint}}}})}};
    cfg = pl::RunConfig::parse(raw);
    const auto eval_out = pl::cmd_eval(cfg, tmp.root + "/run/eval");
    CHECK(eval_out.summary.methods.size() == 3);
    CHECK(eval_out.summary.episodes_per_seed == 4);
    CHECK(fs::exists(eval_out.summary_path));
    REQUIRE(!eval_out.report_paths.empty());
    REQUIRE(!eval_out.world_paths.empty());

    // render the first report line
    const std::string svg = pl::cmd_render(eval_out.report_paths[0], 0,
                                           eval_out.world_paths[0], tmp.root + "/traj.svg");
    const std::string svg_text = read_text_file(svg);
    CHECK(svg_text.find("<svg") != std::string::npos);
    CHECK(svg_text.find("polyline") != std::string::npos);
}

TEST_CASE("missing upstream artifacts name the producing command") {
    TempRun tmp;
    const pl::RunConfig cfg = pl::RunConfig::parse(tiny_run_config(tmp.root + "/run"));
    try {
        pl::cmd_train(cfg, tmp.root + "/nope.jsonl", true, 0, tmp.root + "/x.ckpt");
        FAIL("expected an exception");
    } catch (const RuntimeFailure& e) {
        CHECK(std::string(e.what()).find("collect") != std::string::npos);
    }
    try {
        pl::cmd_build_prm(cfg, tmp.root + "/missing_world.json", tmp.root + "/g.json");
        FAIL("expected an exception");
    } catch (const RuntimeFailure& e) {
        CHECK(std::string(e.what()).find("gen-worlds") != std::string::npos);
    }
}

TEST_CASE("config overrides follow dotted paths") {
    Json j = tiny_run_config("/tmp/x");
    set_by_dotted_path(j, "train.lr", 5e-4);
    CHECK(j["train"]["lr"] == 5e-4);
    set_by_dotted_path(j, "model.embed_dim", 32);
    CHECK(j["model"]["embed_dim"] == 32);
    CHECK_THROWS_AS(set_by_dotted_path(j, "..bad", 1), ConfigError);
}

TEST_CASE("cli exit codes: 0 ok, 1 config error, 2 runtime error") {
    const std::string bin = CTNAV_BIN_PATH;
    REQUIRE(fs::exists(bin));
    auto run = [&](const std::string& args) {
        const int status = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("help") == 0);
    CHECK(run("definitely-not-a-command") == 1);
    CHECK(run("collect --config /nonexistent.json") == 1);

    TempRun tmp;
    const std::string cfg_path = tmp.root + "/cfg.json";
    save_json_file(cfg_path, tiny_run_config(tmp.root + "/run"));
    CHECK(run("train --config " + cfg_path + " --dataset " + tmp.root + "/none.jsonl") == 2);
}
