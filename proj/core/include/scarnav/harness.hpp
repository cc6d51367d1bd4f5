#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scarnav/mapping.hpp"
#include "scarnav/planner.hpp"
#include "scarnav/scar.hpp"
#include "scarnav/skip.hpp"
#include "scarnav/world.hpp"

namespace scarnav {

enum class SkipMode { Off, NaiveForward, Adaptive };
enum class PredictorKind { Oracle, Scar, DenseBaseline };

const char* skip_mode_name(SkipMode m);
const char* predictor_kind_name(PredictorKind k);

struct EpisodeSpec {
    std::uint64_t world_seed = 0;
    Pose start{};
    int target_category = 1;  // 1..C
    int max_steps = 500;
    double success_radius = 1.0;
};

struct AgentConfig {
    SkipMode skip_mode = SkipMode::Off;
    PredictorKind predictor = PredictorKind::Oracle;
    const JudgeModel* judge = nullptr;     // required for adaptive forward skips
    const ScarNetwork* net = nullptr;      // required for scar / dense_baseline
    double revisit_radius = 0.1;
    int n_bins = 50;
    int goal_interval = 10;                // prediction + goal refresh period
    PlannerConfig planner;
    SensorConfig sensor;
    MapConfig map;
    bool keep_final_map = false;
    bool keep_trajectory = true;
};

struct StageTimings {
    double mapping = 0, skip_classify = 0, predict = 0, goal_select = 0, local_plan = 0;
    long mapping_calls = 0, predict_calls = 0;
    double judge_time = 0;
    long judge_calls = 0;

    double step_total() const { return mapping + skip_classify + predict + goal_select + local_plan; }
};

struct StepRecord {
    Pose pose{};
    Action action = Action::Stop;
    SkipType skip = SkipType::None;
    bool collided = false;
};

struct EpisodeResult {
    bool valid = true;
    bool success = false;
    int steps = 0;
    double path_length = 0;       // p_i, meters actually travelled
    double shortest_length = 0;   // l_i, geodesic from start to nearest target
    double initial_geodesic = 0;  // d0 (== shortest_length)
    double final_geodesic = 0;
    long skip_lossless = 0, skip_revisit = 0, skip_forward = 0;
    std::uint64_t flops_total = 0;  // predictor conv FLOPs summed over invocations
    StageTimings timings;
    std::vector<StepRecord> trajectory;
    std::optional<SemanticMap> final_map;
};

EpisodeResult run_episode(const Floorplan& world, const EpisodeSpec& spec, const AgentConfig& agent);

struct SuiteConfig {
    WorldConfig world;          // seed field is the per-episode base
    int episodes = 100;
    std::uint64_t base_seed = 0;
    int max_steps = 500;
    double success_radius = 1.0;
    double min_start_distance = 2.0;  // reject trivially close targets
};

// Deterministic episode specs; infeasible draws (unreachable or trivially
// close targets) are regenerated, never counted.
std::vector<EpisodeSpec> build_suite(const SuiteConfig& cfg, std::vector<Floorplan>& worlds_out);

std::vector<EpisodeResult> run_suite(const std::vector<Floorplan>& worlds,
                                     const std::vector<EpisodeSpec>& specs, const AgentConfig& agent,
                                     int jobs = 1);

double spl(const std::vector<EpisodeResult>& results);
double soft_spl(const std::vector<EpisodeResult>& results);
double skip_ratio(const EpisodeResult& result);

struct SuiteMetrics {
    int episodes = 0;
    double sr = 0, spl = 0, soft_spl = 0;
    double mean_skip_ratio = 0;
    double mean_flops_per_step = 0;
    StageTimings mean_timings;  // per-step means
    double mean_step_seconds = 0;
};

SuiteMetrics aggregate(const std::vector<EpisodeResult>& results);

struct VariantResult {
    std::string name;
    SuiteMetrics metrics;
    std::uint64_t logical_memory_bytes = 0;
};

struct ProfileRow {
    std::string name;
    SuiteMetrics metrics;
    std::uint64_t logical_memory_bytes = 0;
    double rel_spl = 1.0, rel_soft_spl = 1.0;
    double rel_step_time = 1.0, rel_mapping_time = 1.0;
    double rel_flops = 1.0, rel_memory = 1.0;
};

// Ratios against the first variant (the baseline arm).
std::vector<ProfileRow> profile(const std::vector<VariantResult>& variants);

// Logical memory of one agent arm: map buffer + judge nodes + predictor
// accounting (params + peak activations).
std::uint64_t logical_memory_bytes(const AgentConfig& agent);

// Frontier-driven exploration with skipping disabled. on_forward fires for
// every executed MOVE_FORWARD with (current depth, previous depth, map
// delta); on_snapshot fires every snapshot_every steps.
void explore_episode(const Floorplan& world, const Pose& start, const AgentConfig& agent, int max_steps,
                     const std::function<void(const DepthScan&, const DepthScan&, double)>& on_forward,
                     const std::function<void(const SemanticMap&, int)>& on_snapshot = {},
                     int snapshot_every = 0);

// Exploration runs over a seeded suite of worlds, emitting judge-training
// rows.
SkipDataset harvest(const WorldConfig& world_base, int episodes, std::uint64_t base_seed,
                    const AgentConfig& agent, int max_steps, int n_bins);

// Same exploration, emitting (map, masked ground truth) training samples.
std::vector<TrainSample> harvest_train_samples(const WorldConfig& world_base, int episodes,
                                               std::uint64_t base_seed, const AgentConfig& agent,
                                               int max_steps, int snapshot_every);

}  // namespace scarnav
