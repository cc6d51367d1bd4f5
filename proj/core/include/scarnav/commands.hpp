#pragma once

#include <string>

#include "scarnav/config.hpp"

namespace scarnav {

// Command implementations shared by the CLI binary and the tests. Every
// command is deterministic in (config, seeds); outputs are refused unless
// `force` is set or the file does not exist. Timing columns appear only
// when cfg.record_timings is on, so default outputs are byte-reproducible.

void cmd_gen_worlds(const RunConfig& cfg, const std::string& out_dir, bool force);
void cmd_harvest(const RunConfig& cfg, const std::string& out_path, bool force);
void cmd_train_judge(const RunConfig& cfg, const std::string& dataset_path, const std::string& out_path,
                     bool force);
void cmd_train_scar(const RunConfig& cfg, const std::string& out_dir, bool force);
void cmd_run(const RunConfig& cfg, const std::string& out_dir, bool force);
void cmd_profile(const RunConfig& cfg, const std::string& out_path, bool force);
void cmd_arch_search(const RunConfig& cfg, const std::string& out_path, bool force);

// Builds the agent arm a variant describes (loads judge/checkpoint files).
struct VariantRuntime {
    AgentConfig agent;
    std::unique_ptr<JudgeModel> judge;
    std::unique_ptr<ScarNetwork> net;
    std::string name;
};
VariantRuntime build_variant(const RunConfig& cfg, const VariantSection& variant);

ScarConfig resolve_scar_config(const std::string& name);

}  // namespace scarnav
