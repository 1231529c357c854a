#pragma once

#include <string>
#include <vector>

#include "ctnav/collect.hpp"
#include "ctnav/dataset.hpp"
#include "ctnav/eval.hpp"
#include "ctnav/env.hpp"
#include "ctnav/json_util.hpp"

namespace ctnav::pipeline {

inline constexpr const char* kVersion = "ctnav 0.1.0";

// full run configuration: one JSON document with per-command sections
struct RunConfig {
    Json raw;
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";

    static RunConfig parse(Json j);
    static RunConfig load(const std::string& path);

    const Json& section(const std::string& name) const;
    bool has_section(const std::string& name) const;

    EnvSpec env() const;
    WorldTemplate world_template() const;
    std::vector<std::string> maze_files() const;
    CollectConfig collect_config() const;
};

void ensure_dir(const std::string& dir);
int recorded_threads();

// manifest written next to every artifact: inputs, effective config, hashes
void write_manifest(const std::string& artifact_path, const std::string& command,
                    const Json& effective_config, const std::vector<std::string>& inputs,
                    std::uint64_t seed);
Json read_manifest_for(const std::string& artifact_path);

// commands ------------------------------------------------------------------

std::vector<std::string> cmd_gen_worlds(const RunConfig& cfg);

std::string cmd_build_prm(const RunConfig& cfg, const std::string& world_file,
                          const std::string& out_file);

std::string cmd_collect(const RunConfig& cfg, const std::string& out_path);

// regenerates a dataset from its manifest into out_path (reproducibility check)
void reproduce_collect_from_manifest(const Json& manifest, const std::string& out_path);

struct TrainOutcome {
    std::string checkpoint;
    std::string loss_csv;
    std::vector<double> losses;
};

TrainOutcome cmd_train(const RunConfig& cfg, const std::string& dataset_path, bool use_returns,
                       int model_seed_index, const std::string& out_path);

TrainOutcome cmd_train_value(const RunConfig& cfg, const std::string& dataset_path,
                             const std::string& out_path, int model_seed_index = 0);

struct FinetuneOutcome {
    std::string checkpoint;
    std::string dataset_union;
    int pairs_added = 0;
};

FinetuneOutcome cmd_finetune(const RunConfig& cfg, const std::string& ckpt_path,
                             const std::string& value_ckpt_path, const std::string& dataset_path,
                             const std::string& out_path);

struct EvalOutcome {
    EvalSummary summary;
    std::string summary_path;
    std::vector<std::string> report_paths;
    std::vector<std::string> world_paths;
};

EvalOutcome cmd_eval(const RunConfig& cfg, const std::string& out_dir);

std::string cmd_transfer_init(const RunConfig& cfg, const std::string& source_ckpt,
                              const std::string& out_path);

std::string cmd_render(const std::string& reports_path, int line_index,
                       const std::string& world_path, const std::string& out_path);

// helpers shared with tests/acceptance
ct::ConditionedPolicy
load_policy(const std::string& ckpt_path, const std::string& value_ckpt_path, bool use_returns,
            std::vector<std::shared_ptr<ct::ControlTransformer>>& model_keepalive,
            std::vector<std::shared_ptr<ct::ValueNet>>& value_keepalive);

Json report_to_json(const ct::RolloutReport& r, int world_index);

}  // namespace ctnav::pipeline
