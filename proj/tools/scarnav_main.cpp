// scarnav: closed-loop object-goal navigation on synthetic indoor worlds
// with adaptive computation skipping and a hybrid sparse/dense predictor.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "scarnav/commands.hpp"

namespace {

scarnav::RunConfig load_with_env(const std::string& config_path, const std::string& out_override) {
    scarnav::RunConfig cfg = scarnav::load_config_file(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    if (const char* env = std::getenv("SCARNAV_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scarnav: efficiency-aware object-goal navigation testbed"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    bool force = false;
    app.add_option("-c,--config", config_path, "Run configuration JSON")->required();
    app.add_option("-o,--out", out_override, "Override the configured output directory");
    app.add_flag("-f,--force", force, "Overwrite existing outputs");

    std::string dataset_path;

    auto* gen = app.add_subcommand("gen-worlds", "Generate the suite's floorplan files");
    auto* hv = app.add_subcommand("harvest", "Exploration runs (skipping off) -> judge training CSV");
    auto* tj = app.add_subcommand("train-judge", "Train the forwarding-skip judge from a harvest CSV");
    tj->add_option("--dataset", dataset_path, "Harvest CSV path")->required();
    auto* ts = app.add_subcommand("train-scar", "Train the target-probability predictor");
    auto* run = app.add_subcommand("run", "Run the configured episode suite");
    auto* prof = app.add_subcommand("profile", "A/B comparison across the configured variants");
    auto* arch = app.add_subcommand("arch-search", "Seeded random architecture search (Pareto CSV)");

    CLI11_PARSE(app, argc, argv);

    try {
        const scarnav::RunConfig cfg = load_with_env(config_path, out_override);
        const std::string out = cfg.output_dir;
        if (gen->parsed()) scarnav::cmd_gen_worlds(cfg, out + "/worlds", force);
        if (hv->parsed()) scarnav::cmd_harvest(cfg, out + "/skip_dataset.csv", force);
        if (tj->parsed()) scarnav::cmd_train_judge(cfg, dataset_path, out + "/judge.json", force);
        if (ts->parsed()) scarnav::cmd_train_scar(cfg, out, force);
        if (run->parsed()) scarnav::cmd_run(cfg, out, force);
        if (prof->parsed()) scarnav::cmd_profile(cfg, out + "/profile.csv", force);
        if (arch->parsed()) scarnav::cmd_arch_search(cfg, out + "/pareto.csv", force);
    } catch (const scarnav::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const scarnav::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
