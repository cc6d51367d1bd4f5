#include "scarnav/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace scarnav {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& path) {
    if (!j.is_object()) throw ConfigError("config: " + path + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) throw ConfigError("config: unknown key '" + path + key + "'");
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_world(const json& j, WorldConfig& w) {
    reject_unknown(j, {"size", "room_count", "categories", "targets", "object_density", "resolution", "seed"},
                   "world.");
    get_if(j, "size", w.size);
    get_if(j, "room_count", w.room_count);
    get_if(j, "categories", w.categories);
    get_if(j, "targets", w.targets);
    get_if(j, "object_density", w.object_density);
    get_if(j, "resolution", w.resolution);
    get_if(j, "seed", w.seed);
}

void parse_sensor(const json& j, SensorConfig& s) {
    reject_unknown(j, {"rays", "fov_deg", "max_range", "label_noise"}, "sensor.");
    get_if(j, "rays", s.rays);
    get_if(j, "fov_deg", s.fov_deg);
    get_if(j, "max_range", s.max_range);
    get_if(j, "label_noise", s.label_noise);
}

void parse_skip(const json& j, SkipSection& s) {
    reject_unknown(j, {"mode", "threshold", "revisit_radius", "trees", "max_depth", "min_leaf",
                       "vote_threshold", "bins", "judge_path"},
                   "skip.");
    get_if(j, "mode", s.mode);
    get_if(j, "threshold", s.threshold);
    get_if(j, "revisit_radius", s.revisit_radius);
    get_if(j, "trees", s.trees);
    get_if(j, "max_depth", s.max_depth);
    get_if(j, "min_leaf", s.min_leaf);
    get_if(j, "vote_threshold", s.vote_threshold);
    get_if(j, "bins", s.bins);
    get_if(j, "judge_path", s.judge_path);
    if (s.mode != "off" && s.mode != "naive_forward" && s.mode != "adaptive")
        throw ConfigError("config: skip.mode must be off|naive_forward|adaptive, got '" + s.mode + "'");
}

void parse_predictor(const json& j, PredictorSection& p) {
    reject_unknown(j, {"kind", "checkpoint", "scar_config", "seed"}, "predictor.");
    get_if(j, "kind", p.kind);
    get_if(j, "checkpoint", p.checkpoint);
    get_if(j, "scar_config", p.scar_config);
    get_if(j, "seed", p.seed);
    if (p.kind != "oracle" && p.kind != "scar" && p.kind != "dense_baseline")
        throw ConfigError("config: predictor.kind must be oracle|scar|dense_baseline, got '" + p.kind + "'");
}

void parse_planner(const json& j, PlannerSection& p) {
    reject_unknown(j, {"lambda", "stop_distance", "obstacle_dilation", "trap_patience", "goal_interval"},
                   "planner.");
    get_if(j, "lambda", p.lambda);
    get_if(j, "stop_distance", p.stop_distance);
    get_if(j, "obstacle_dilation", p.obstacle_dilation);
    get_if(j, "trap_patience", p.trap_patience);
    get_if(j, "goal_interval", p.goal_interval);
    if (p.lambda <= 0 || p.stop_distance <= 0 || p.trap_patience <= 0 || p.goal_interval <= 0)
        throw ConfigError("config: planner values must be positive");
}

void parse_suite(const json& j, SuiteSection& s) {
    reject_unknown(j, {"episodes", "base_seed", "max_steps", "success_radius"}, "suite.");
    get_if(j, "episodes", s.episodes);
    get_if(j, "base_seed", s.base_seed);
    get_if(j, "max_steps", s.max_steps);
    get_if(j, "success_radius", s.success_radius);
}

void parse_harvest(const json& j, HarvestSection& h) {
    reject_unknown(j, {"episodes", "base_seed", "max_steps"}, "harvest.");
    get_if(j, "episodes", h.episodes);
    get_if(j, "base_seed", h.base_seed);
    get_if(j, "max_steps", h.max_steps);
}

void parse_scar_train(const json& j, ScarTrainSection& s) {
    reject_unknown(j, {"scar_config", "seed", "steps", "batch", "lr", "poly_power", "episodes", "base_seed",
                       "max_steps", "snapshot_every", "loss_ma_window"},
                   "scar_train.");
    get_if(j, "scar_config", s.scar_config);
    get_if(j, "seed", s.seed);
    get_if(j, "steps", s.steps);
    get_if(j, "batch", s.batch);
    get_if(j, "lr", s.lr);
    get_if(j, "poly_power", s.poly_power);
    get_if(j, "episodes", s.episodes);
    get_if(j, "base_seed", s.base_seed);
    get_if(j, "max_steps", s.max_steps);
    get_if(j, "snapshot_every", s.snapshot_every);
    get_if(j, "loss_ma_window", s.loss_ma_window);
}

void parse_arch_search(const json& j, ArchSearchSection& a) {
    reject_unknown(j, {"budget", "seed", "steps", "batch", "lr", "episodes", "base_seed", "max_steps",
                       "snapshot_every", "world_size", "map_size"},
                   "arch_search.");
    get_if(j, "budget", a.budget);
    get_if(j, "seed", a.seed);
    get_if(j, "steps", a.steps);
    get_if(j, "batch", a.batch);
    get_if(j, "lr", a.lr);
    get_if(j, "episodes", a.episodes);
    get_if(j, "base_seed", a.base_seed);
    get_if(j, "max_steps", a.max_steps);
    get_if(j, "snapshot_every", a.snapshot_every);
    get_if(j, "world_size", a.world_size);
    get_if(j, "map_size", a.map_size);
}

void parse_variant(const json& j, VariantSection& v, int index) {
    const std::string path = "variants[" + std::to_string(index) + "].";
    reject_unknown(j, {"name", "skip_mode", "predictor", "threshold", "revisit_radius", "judge_path",
                       "checkpoint"},
                   path);
    get_if(j, "name", v.name);
    get_if(j, "skip_mode", v.skip_mode);
    get_if(j, "predictor", v.predictor);
    get_if(j, "threshold", v.threshold);
    get_if(j, "revisit_radius", v.revisit_radius);
    get_if(j, "judge_path", v.judge_path);
    get_if(j, "checkpoint", v.checkpoint);
    if (v.name.empty()) throw ConfigError("config: " + path + "name is required");
}

}  // namespace

RunConfig load_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"version", "world", "sensor", "map", "skip", "predictor", "planner", "suite", "harvest",
                    "scar_train", "arch_search", "variants", "output_dir", "record_timings", "jobs"},
                   "");
    RunConfig cfg;
    get_if(j, "version", cfg.version);
    if (cfg.version != 1) throw ConfigError("config: unsupported version " + std::to_string(cfg.version));
    if (j.contains("world")) parse_world(j.at("world"), cfg.world);
    if (j.contains("sensor")) parse_sensor(j.at("sensor"), cfg.sensor);
    if (j.contains("map")) {
        reject_unknown(j.at("map"), {"height", "width"}, "map.");
        get_if(j.at("map"), "height", cfg.map_height);
        get_if(j.at("map"), "width", cfg.map_width);
    }
    if (j.contains("skip")) parse_skip(j.at("skip"), cfg.skip);
    if (j.contains("predictor")) parse_predictor(j.at("predictor"), cfg.predictor);
    if (j.contains("planner")) parse_planner(j.at("planner"), cfg.planner);
    if (j.contains("suite")) parse_suite(j.at("suite"), cfg.suite);
    if (j.contains("harvest")) parse_harvest(j.at("harvest"), cfg.harvest);
    if (j.contains("scar_train")) parse_scar_train(j.at("scar_train"), cfg.scar_train);
    if (j.contains("arch_search")) parse_arch_search(j.at("arch_search"), cfg.arch_search);
    if (j.contains("variants")) {
        if (!j.at("variants").is_array()) throw ConfigError("config: variants must be an array");
        int i = 0;
        for (const auto& vj : j.at("variants")) {
            VariantSection v;
            parse_variant(vj, v, i++);
            cfg.variants.push_back(std::move(v));
        }
    }
    get_if(j, "output_dir", cfg.output_dir);
    get_if(j, "record_timings", cfg.record_timings);
    get_if(j, "jobs", cfg.jobs);

    if (cfg.world.size > cfg.map_height || cfg.world.size > cfg.map_width)
        throw ConfigError("config: world.size must fit inside the map");
    if (cfg.jobs < 1) throw ConfigError("config: jobs must be >= 1");
    return cfg;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config(ss.str());
}

std::string resolved_config_json(const RunConfig& cfg) {
    json j;
    j["version"] = cfg.version;
    j["world"] = {{"size", cfg.world.size},
                  {"room_count", cfg.world.room_count},
                  {"categories", cfg.world.categories},
                  {"targets", cfg.world.targets},
                  {"object_density", cfg.world.object_density},
                  {"resolution", cfg.world.resolution},
                  {"seed", cfg.world.seed}};
    j["sensor"] = {{"rays", cfg.sensor.rays},
                   {"fov_deg", cfg.sensor.fov_deg},
                   {"max_range", cfg.sensor.max_range},
                   {"label_noise", cfg.sensor.label_noise}};
    j["map"] = {{"height", cfg.map_height}, {"width", cfg.map_width}};
    j["skip"] = {{"mode", cfg.skip.mode},
                 {"threshold", cfg.skip.threshold},
                 {"revisit_radius", cfg.skip.revisit_radius},
                 {"trees", cfg.skip.trees},
                 {"max_depth", cfg.skip.max_depth},
                 {"min_leaf", cfg.skip.min_leaf},
                 {"vote_threshold", cfg.skip.vote_threshold},
                 {"bins", cfg.skip.bins},
                 {"judge_path", cfg.skip.judge_path}};
    j["predictor"] = {{"kind", cfg.predictor.kind},
                      {"checkpoint", cfg.predictor.checkpoint},
                      {"scar_config", cfg.predictor.scar_config},
                      {"seed", cfg.predictor.seed}};
    j["planner"] = {{"lambda", cfg.planner.lambda},
                    {"stop_distance", cfg.planner.stop_distance},
                    {"obstacle_dilation", cfg.planner.obstacle_dilation},
                    {"trap_patience", cfg.planner.trap_patience},
                    {"goal_interval", cfg.planner.goal_interval}};
    j["suite"] = {{"episodes", cfg.suite.episodes},
                  {"base_seed", cfg.suite.base_seed},
                  {"max_steps", cfg.suite.max_steps},
                  {"success_radius", cfg.suite.success_radius}};
    j["harvest"] = {{"episodes", cfg.harvest.episodes},
                    {"base_seed", cfg.harvest.base_seed},
                    {"max_steps", cfg.harvest.max_steps}};
    j["scar_train"] = {{"scar_config", cfg.scar_train.scar_config},
                       {"seed", cfg.scar_train.seed},
                       {"steps", cfg.scar_train.steps},
                       {"batch", cfg.scar_train.batch},
                       {"lr", cfg.scar_train.lr},
                       {"poly_power", cfg.scar_train.poly_power},
                       {"episodes", cfg.scar_train.episodes},
                       {"base_seed", cfg.scar_train.base_seed},
                       {"max_steps", cfg.scar_train.max_steps},
                       {"snapshot_every", cfg.scar_train.snapshot_every},
                       {"loss_ma_window", cfg.scar_train.loss_ma_window}};
    j["arch_search"] = {{"budget", cfg.arch_search.budget},
                        {"seed", cfg.arch_search.seed},
                        {"steps", cfg.arch_search.steps},
                        {"batch", cfg.arch_search.batch},
                        {"lr", cfg.arch_search.lr},
                        {"episodes", cfg.arch_search.episodes},
                        {"base_seed", cfg.arch_search.base_seed},
                        {"max_steps", cfg.arch_search.max_steps},
                        {"snapshot_every", cfg.arch_search.snapshot_every},
                        {"world_size", cfg.arch_search.world_size},
                        {"map_size", cfg.arch_search.map_size}};
    json variants = json::array();
    for (const auto& v : cfg.variants)
        variants.push_back({{"name", v.name},
                            {"skip_mode", v.skip_mode},
                            {"predictor", v.predictor},
                            {"threshold", v.threshold},
                            {"revisit_radius", v.revisit_radius},
                            {"judge_path", v.judge_path},
                            {"checkpoint", v.checkpoint}});
    j["variants"] = std::move(variants);
    j["output_dir"] = cfg.output_dir;
    j["record_timings"] = cfg.record_timings;
    j["jobs"] = cfg.jobs;
    return j.dump();
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(resolved_config_json(cfg)); }

MapConfig map_config(const RunConfig& cfg) {
    MapConfig m;
    m.height = cfg.map_height;
    m.width = cfg.map_width;
    m.resolution = cfg.world.resolution;
    m.categories = cfg.world.categories;
    return m;
}

PlannerConfig planner_config(const RunConfig& cfg) {
    PlannerConfig p;
    p.lambda = cfg.planner.lambda;
    p.stop_distance = cfg.planner.stop_distance;
    p.obstacle_dilation = cfg.planner.obstacle_dilation;
    p.trap_patience = cfg.planner.trap_patience;
    return p;
}

}  // namespace scarnav
