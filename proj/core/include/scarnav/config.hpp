#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "scarnav/harness.hpp"
#include "scarnav/mapping.hpp"
#include "scarnav/planner.hpp"
#include "scarnav/skip.hpp"
#include "scarnav/world.hpp"

namespace scarnav {

// Invalid or unknown configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Feasibility failures: unreachable targets, impossible placement,
// refusing to overwrite outputs (CLI exit code 3).
struct InfeasibleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SkipSection {
    std::string mode = "off";  // off | naive_forward | adaptive
    double threshold = 25.0;
    double revisit_radius = 0.1;
    int trees = 64;
    int max_depth = 12;
    int min_leaf = 3;
    double vote_threshold = 0.5;
    int bins = 50;
    std::string judge_path;
};

struct PredictorSection {
    std::string kind = "oracle";  // oracle | scar | dense_baseline
    std::string checkpoint;
    std::string scar_config = "scar_mini";  // preset used when no checkpoint is given
    std::uint64_t seed = 7;
};

struct PlannerSection {
    double lambda = 2.0;
    double stop_distance = 0.9;
    int obstacle_dilation = 2;
    int trap_patience = 3;
    int goal_interval = 10;
};

struct SuiteSection {
    int episodes = 20;
    std::uint64_t base_seed = 0;
    int max_steps = 500;
    double success_radius = 1.0;
};

struct HarvestSection {
    int episodes = 25;
    std::uint64_t base_seed = 10000;
    int max_steps = 300;
};

struct ScarTrainSection {
    std::string scar_config = "scar_mini";
    std::uint64_t seed = 7;
    int steps = 200;
    int batch = 4;
    double lr = 0.0005;
    double poly_power = 0.9;
    int episodes = 3;
    std::uint64_t base_seed = 500;
    int max_steps = 250;
    int snapshot_every = 25;
    int loss_ma_window = 500;
};

struct ArchSearchSection {
    int budget = 12;
    std::uint64_t seed = 3;
    int steps = 45;
    int batch = 2;
    double lr = 0.001;
    int episodes = 2;
    std::uint64_t base_seed = 900;
    int max_steps = 150;
    int snapshot_every = 30;
    int world_size = 48;
    int map_size = 96;
};

struct VariantSection {
    std::string name;
    std::string skip_mode = "off";
    std::string predictor = "oracle";
    double threshold = 25.0;
    double revisit_radius = 0.1;
    std::string judge_path;
    std::string checkpoint;
};

struct RunConfig {
    int version = 1;
    WorldConfig world;
    SensorConfig sensor;
    int map_height = 192;
    int map_width = 192;
    SkipSection skip;
    PredictorSection predictor;
    PlannerSection planner;
    SuiteSection suite;
    HarvestSection harvest;
    ScarTrainSection scar_train;
    ArchSearchSection arch_search;
    std::vector<VariantSection> variants;
    std::string output_dir = "out";
    bool record_timings = false;
    int jobs = 1;
};

// Parses and validates; unknown keys are rejected with their JSON path.
RunConfig load_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

// Canonical resolved form (all defaults materialized, keys sorted).
std::string resolved_config_json(const RunConfig& cfg);
std::uint64_t config_hash(const RunConfig& cfg);

MapConfig map_config(const RunConfig& cfg);
PlannerConfig planner_config(const RunConfig& cfg);

}  // namespace scarnav
