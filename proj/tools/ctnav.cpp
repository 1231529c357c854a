// Pipeline entry point. Commands communicate only through files; flags of the
// form --a.b.c VALUE override config fields dot-path style.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <omp.h>

#include "ctnav/pipeline.hpp"

namespace {

using ctnav::ConfigError;
using ctnav::Json;
using ctnav::pipeline::RunConfig;

constexpr const char* kUsage = R"(usage: ctnav <command> [options]

commands:
  gen-worlds     --config FILE                         write randomized/maze worlds
  build-prm      --config FILE --world W --out G       build a roadmap over a world
  collect        --config FILE [--out DATASET]         PRM-guided trajectory collection
  train          --config FILE --dataset D [--out C]   train the policy (--bc drops returns)
                 [--bc] [--model-seed N]
  train-value    --config FILE --dataset D [--out C]   train the value regressor
  finetune       --config FILE --ckpt C --dataset D    recovery collection + continued training
                 [--value V] [--out C2]
  eval           --config FILE [--out DIR]             paired evaluation of methods
  render         --reports R --line N --world W --out S  trajectory SVG
  transfer-init  --config FILE --source C [--out C2]   re-init embedders on a new robot

global options:
  --config FILE      run configuration (JSON)
  --KEY.PATH VALUE   override a config field, e.g. --train.lr 1e-4
  --threads N        worker threads (also honors CTNAV_THREADS)

exit codes: 0 ok, 1 config error, 2 runtime error
)";

Json parse_override_value(const std::string& text) {
    // numbers, booleans and JSON literals pass through; anything else is a string
    try {
        return Json::parse(text);
    } catch (...) {
        return Json(text);
    }
}

struct CliArgs {
    std::string command;
    std::string config_path;
    std::vector<std::pair<std::string, Json>> overrides;
    std::string out;
    std::string dataset;
    std::string ckpt;
    std::string value;
    std::string world;
    std::string source;
    std::string reports;
    int line = 0;
    int model_seed = 0;
    bool bc = false;
    int threads = 0;
};

CliArgs parse_args(int argc, char** argv) {
    CliArgs a;
    if (argc < 2) throw ConfigError("missing command");
    a.command = argv[1];
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) throw ConfigError("missing value for " + arg);
            return argv[++i];
        };
        if (arg == "--config") a.config_path = next();
        else if (arg == "--out") a.out = next();
        else if (arg == "--dataset") a.dataset = next();
        else if (arg == "--ckpt") a.ckpt = next();
        else if (arg == "--value") a.value = next();
        else if (arg == "--world") a.world = next();
        else if (arg == "--source") a.source = next();
        else if (arg == "--reports") a.reports = next();
        else if (arg == "--line") a.line = std::atoi(next().c_str());
        else if (arg == "--model-seed") a.model_seed = std::atoi(next().c_str());
        else if (arg == "--bc") a.bc = true;
        else if (arg == "--threads") a.threads = std::atoi(next().c_str());
        else if (arg.rfind("--", 0) == 0 && arg.find('.') != std::string::npos)
            a.overrides.emplace_back(arg.substr(2), parse_override_value(next()));
        else throw ConfigError("unknown option: " + arg);
    }
    return a;
}

RunConfig load_config(const CliArgs& a) {
    if (a.config_path.empty()) throw ConfigError("--config is required");
    Json j = ctnav::load_json_file(a.config_path);
    for (const auto& [path, value] : a.overrides) ctnav::set_by_dotted_path(j, path, value);
    return RunConfig::parse(std::move(j));
}

int dispatch(const CliArgs& a) {
    namespace pl = ctnav::pipeline;
    if (a.command == "gen-worlds") {
        const RunConfig cfg = load_config(a);
        const auto paths = pl::cmd_gen_worlds(cfg);
        std::cout << "wrote " << paths.size() << " worlds under " << cfg.out_dir << "/worlds\n";
        return 0;
    }
    if (a.command == "build-prm") {
        const RunConfig cfg = load_config(a);
        if (a.world.empty()) throw ConfigError("build-prm needs --world");
        const std::string out = a.out.empty() ? cfg.out_dir + "/graph.json" : a.out;
        pl::ensure_dir(cfg.out_dir);
        std::cout << "graph: " << pl::cmd_build_prm(cfg, a.world, out) << "\n";
        return 0;
    }
    if (a.command == "collect") {
        const RunConfig cfg = load_config(a);
        const std::string out = a.out.empty() ? cfg.out_dir + "/dataset.jsonl" : a.out;
        std::cout << "dataset: " << pl::cmd_collect(cfg, out) << "\n";
        return 0;
    }
    if (a.command == "train") {
        const RunConfig cfg = load_config(a);
        if (a.dataset.empty()) throw ConfigError("train needs --dataset");
        const std::string out =
            a.out.empty() ? cfg.out_dir + (a.bc ? "/bc_ct.ckpt" : "/ct.ckpt") : a.out;
        const auto res = pl::cmd_train(cfg, a.dataset, !a.bc, a.model_seed, out);
        std::cout << "checkpoint: " << res.checkpoint << "\nfinal loss: "
                  << (res.losses.empty() ? 0.0 : res.losses.back()) << "\n";
        return 0;
    }
    if (a.command == "train-value") {
        const RunConfig cfg = load_config(a);
        if (a.dataset.empty()) throw ConfigError("train-value needs --dataset");
        const std::string out = a.out.empty() ? cfg.out_dir + "/value.ckpt" : a.out;
        const auto res = pl::cmd_train_value(cfg, a.dataset, out);
        std::cout << "checkpoint: " << res.checkpoint << "\n";
        return 0;
    }
    if (a.command == "finetune") {
        const RunConfig cfg = load_config(a);
        if (a.ckpt.empty() || a.dataset.empty())
            throw ConfigError("finetune needs --ckpt and --dataset");
        const std::string out = a.out.empty() ? cfg.out_dir + "/f_ct.ckpt" : a.out;
        const auto res = pl::cmd_finetune(cfg, a.ckpt, a.value, a.dataset, out);
        std::cout << "checkpoint: " << res.checkpoint << "\npairs added: " << res.pairs_added
                  << "\nunion dataset: " << res.dataset_union << "\n";
        return 0;
    }
    if (a.command == "eval") {
        const RunConfig cfg = load_config(a);
        const std::string out = a.out.empty() ? cfg.out_dir + "/eval" : a.out;
        const auto res = pl::cmd_eval(cfg, out);
        std::cout << res.summary.table() << "summary: " << res.summary_path << "\n";
        return 0;
    }
    if (a.command == "render") {
        if (a.reports.empty() || a.world.empty() || a.out.empty())
            throw ConfigError("render needs --reports, --world and --out");
        std::cout << "svg: " << pl::cmd_render(a.reports, a.line, a.world, a.out) << "\n";
        return 0;
    }
    if (a.command == "transfer-init") {
        const RunConfig cfg = load_config(a);
        if (a.source.empty()) throw ConfigError("transfer-init needs --source");
        const std::string out = a.out.empty() ? cfg.out_dir + "/transfer.ckpt" : a.out;
        std::cout << "checkpoint: " << pl::cmd_transfer_init(cfg, a.source, out) << "\n";
        return 0;
    }
    if (a.command == "help" || a.command == "--help" || a.command == "-h") {
        std::cout << kUsage;
        return 0;
    }
    throw ConfigError("unknown command: " + a.command);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        CliArgs args = parse_args(argc, argv);
        if (const char* env = std::getenv("CTNAV_THREADS"); env && args.threads == 0)
            args.threads = std::atoi(env);
        if (args.threads > 0) omp_set_num_threads(args.threads);
        return dispatch(args);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n" << kUsage;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
