#include "scarnav/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "scarnav/scar.hpp"

namespace scarnav {

namespace fs = std::filesystem;

namespace {

std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << h;
    return os.str();
}

void ensure_writable(const std::string& path, bool force) {
    if (!force && fs::exists(path))
        throw InfeasibleError("output '" + path + "' exists; pass --force to overwrite");
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void write_text(const std::string& path, const std::string& text, bool force) {
    ensure_writable(path, force);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InfeasibleError("cannot write '" + path + "'");
    out << text;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes, bool force) {
    ensure_writable(path, force);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InfeasibleError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

std::string meta_comment(const RunConfig& cfg) {
    return "# scarnav " + std::string(kToolVersion) + " config_hash=" + hash_hex(config_hash(cfg)) + "\n";
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

AgentConfig base_agent(const RunConfig& cfg) {
    AgentConfig agent;
    agent.sensor = cfg.sensor;
    agent.map = map_config(cfg);
    agent.planner = planner_config(cfg);
    agent.goal_interval = cfg.planner.goal_interval;
    agent.n_bins = cfg.skip.bins;
    agent.revisit_radius = cfg.skip.revisit_radius;
    return agent;
}

SkipMode parse_skip_mode(const std::string& s) {
    if (s == "off") return SkipMode::Off;
    if (s == "naive_forward") return SkipMode::NaiveForward;
    if (s == "adaptive") return SkipMode::Adaptive;
    throw ConfigError("unknown skip mode '" + s + "'");
}

PredictorKind parse_predictor_kind(const std::string& s) {
    if (s == "oracle") return PredictorKind::Oracle;
    if (s == "scar") return PredictorKind::Scar;
    if (s == "dense_baseline") return PredictorKind::DenseBaseline;
    throw ConfigError("unknown predictor '" + s + "'");
}

std::string episodes_jsonl(const RunConfig& cfg, const std::vector<EpisodeSpec>& specs,
                           const std::vector<EpisodeResult>& results) {
    nlohmann::json meta;
    meta["tool_version"] = std::string(kToolVersion);
    meta["config_hash"] = hash_hex(config_hash(cfg));
    meta["config"] = nlohmann::json::parse(resolved_config_json(cfg));
    std::string out = meta.dump() + "\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        nlohmann::json j;
        j["episode"] = i;
        j["world_seed"] = specs[i].world_seed;
        j["target_category"] = specs[i].target_category;
        j["success"] = r.success;
        j["steps"] = r.steps;
        j["path_length"] = r.path_length;
        j["shortest_length"] = r.shortest_length;
        j["final_geodesic"] = r.final_geodesic;
        j["skip_counts"] = {{"lossless", r.skip_lossless},
                            {"aggr_revisit", r.skip_revisit},
                            {"skip_forward", r.skip_forward}};
        j["skip_ratio"] = skip_ratio(r);
        j["flops_total"] = r.flops_total;
        if (cfg.record_timings) {
            j["stage_seconds"] = {{"mapping", r.timings.mapping},
                                  {"skip_classify", r.timings.skip_classify},
                                  {"predict", r.timings.predict},
                                  {"goal_select", r.timings.goal_select},
                                  {"local_plan", r.timings.local_plan}};
        }
        out += j.dump() + "\n";
    }
    return out;
}

std::string suite_csv(const RunConfig& cfg, const SuiteMetrics& m) {
    std::string out = meta_comment(cfg);
    out += "episodes,sr,spl,soft_spl,mean_skip_ratio,mean_flops_per_step";
    if (cfg.record_timings) out += ",mean_step_seconds,mean_mapping_seconds";
    out += "\n";
    out += std::to_string(m.episodes) + "," + fmt(m.sr) + "," + fmt(m.spl) + "," + fmt(m.soft_spl) + "," +
           fmt(m.mean_skip_ratio) + "," + fmt(m.mean_flops_per_step);
    if (cfg.record_timings) out += "," + fmt(m.mean_step_seconds) + "," + fmt(m.mean_timings.mapping);
    out += "\n";
    return out;
}

}  // namespace

ScarConfig resolve_scar_config(const std::string& name) {
    if (name == "scar_mini") return ScarConfig::scar_mini();
    if (name == "dense_baseline") return ScarConfig::dense_baseline();
    if (name == "tiny") return ScarConfig::tiny_test();
    // Inline JSON object is also accepted.
    if (!name.empty() && name.front() == '{') return scar_config_from_json(name);
    throw ConfigError("unknown scar config '" + name + "' (expected scar_mini|dense_baseline|tiny|inline JSON)");
}

VariantRuntime build_variant(const RunConfig& cfg, const VariantSection& variant) {
    VariantRuntime rt;
    rt.name = variant.name;
    rt.agent = base_agent(cfg);
    rt.agent.skip_mode = parse_skip_mode(variant.skip_mode);
    rt.agent.predictor = parse_predictor_kind(variant.predictor);
    rt.agent.revisit_radius = variant.revisit_radius;
    if (!variant.judge_path.empty()) {
        rt.judge = std::make_unique<JudgeModel>(judge_from_json(read_text(variant.judge_path)));
        rt.agent.judge = rt.judge.get();
        rt.agent.n_bins = rt.judge->n_bins;
    }
    if (rt.agent.predictor != PredictorKind::Oracle) {
        if (!variant.checkpoint.empty()) {
            rt.net = std::make_unique<ScarNetwork>(ScarNetwork::from_checkpoint(read_bytes(variant.checkpoint)));
        } else {
            const ScarConfig sc = rt.agent.predictor == PredictorKind::Scar
                                      ? resolve_scar_config(cfg.predictor.scar_config)
                                      : ScarConfig::dense_baseline();
            rt.net = std::make_unique<ScarNetwork>(sc, 4 + cfg.world.categories, cfg.world.targets,
                                                   cfg.map_height, cfg.map_width, cfg.predictor.seed);
        }
        rt.agent.net = rt.net.get();
    }
    return rt;
}

void cmd_gen_worlds(const RunConfig& cfg, const std::string& out_dir, bool force) {
    fs::create_directories(out_dir);
    std::vector<Floorplan> worlds;
    const std::vector<EpisodeSpec> specs = [&] {
        SuiteConfig sc;
        sc.world = cfg.world;
        sc.episodes = cfg.suite.episodes;
        sc.base_seed = cfg.suite.base_seed;
        sc.max_steps = cfg.suite.max_steps;
        sc.success_radius = cfg.suite.success_radius;
        return build_suite(sc, worlds);
    }();
    for (std::size_t i = 0; i < worlds.size(); ++i) {
        std::ostringstream name;
        name << out_dir << "/world_" << std::setw(4) << std::setfill('0') << i << ".json";
        write_text(name.str(), floorplan_to_json(worlds[i]) + "\n", force);
    }
    nlohmann::json index;
    index["tool_version"] = std::string(kToolVersion);
    index["config_hash"] = hash_hex(config_hash(cfg));
    index["episodes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        index["episodes"].push_back({{"world_seed", specs[i].world_seed},
                                     {"start", {specs[i].start.x, specs[i].start.y, specs[i].start.theta_deg}},
                                     {"target_category", specs[i].target_category}});
    }
    write_text(out_dir + "/index.json", index.dump() + "\n", force);
}

void cmd_harvest(const RunConfig& cfg, const std::string& out_path, bool force) {
    AgentConfig agent = base_agent(cfg);
    agent.skip_mode = SkipMode::Off;  // harvest observes every true map delta
    const SkipDataset data =
        harvest(cfg.world, cfg.harvest.episodes, cfg.harvest.base_seed, agent, cfg.harvest.max_steps,
                cfg.skip.bins);
    if (data.rows.empty()) throw InfeasibleError("harvest produced no forward steps");
    write_text(out_path, meta_comment(cfg) + skip_dataset_to_csv(data), force);
}

void cmd_train_judge(const RunConfig& cfg, const std::string& dataset_path, const std::string& out_path,
                     bool force) {
    std::string text = read_text(dataset_path);
    if (!text.empty() && text[0] == '#') text = text.substr(text.find('\n') + 1);
    const SkipDataset data = skip_dataset_from_csv(text);
    JudgeParams params;
    params.threshold = cfg.skip.threshold;
    params.trees = cfg.skip.trees;
    params.max_depth = cfg.skip.max_depth;
    params.min_leaf = cfg.skip.min_leaf;
    params.vote_threshold = cfg.skip.vote_threshold;
    params.seed = cfg.world.seed ^ 0x6a756467ULL;
    const JudgeModel model = train_judge(data, params);
    write_text(out_path, judge_to_json(model) + "\n", force);
}

void cmd_train_scar(const RunConfig& cfg, const std::string& out_dir, bool force) {
    fs::create_directories(out_dir);
    AgentConfig agent = base_agent(cfg);
    agent.skip_mode = SkipMode::Off;
    const std::vector<TrainSample> samples =
        harvest_train_samples(cfg.world, cfg.scar_train.episodes, cfg.scar_train.base_seed, agent,
                              cfg.scar_train.max_steps, cfg.scar_train.snapshot_every);
    if (samples.empty()) throw InfeasibleError("train_scar: no training samples harvested");

    const ScarConfig sc = resolve_scar_config(cfg.scar_train.scar_config);
    ScarNetwork net(sc, 4 + cfg.world.categories, cfg.world.targets, cfg.map_height, cfg.map_width,
                    cfg.scar_train.seed);

    Rng batch_rng(cfg.scar_train.seed ^ 0x7363617274ULL);
    std::string curve = meta_comment(cfg) + "step,loss,loss_ma\n";
    std::vector<double> losses;
    for (int step = 0; step < cfg.scar_train.steps; ++step) {
        std::vector<const TrainSample*> batch;
        for (int b = 0; b < cfg.scar_train.batch; ++b)
            batch.push_back(&samples[batch_rng.index(samples.size())]);
        const double frac = cfg.scar_train.steps > 1
                                ? static_cast<double>(step) / static_cast<double>(cfg.scar_train.steps)
                                : 0.0;
        const double lr = cfg.scar_train.lr * std::pow(1.0 - frac, cfg.scar_train.poly_power);
        losses.push_back(net.train_step(batch, lr));
        const int win = std::min<int>(cfg.scar_train.loss_ma_window, static_cast<int>(losses.size()));
        double ma = 0.0;
        for (int i = static_cast<int>(losses.size()) - win; i < static_cast<int>(losses.size()); ++i)
            ma += losses[i];
        ma /= win;
        curve += std::to_string(step) + "," + fmt(losses.back()) + "," + fmt(ma) + "\n";
    }
    write_text(out_dir + "/loss_curve.csv", curve, force);
    write_bytes(out_dir + "/scar.ckpt", net.to_checkpoint(), force);
}

void cmd_run(const RunConfig& cfg, const std::string& out_dir, bool force) {
    fs::create_directories(out_dir);
    SuiteConfig sc;
    sc.world = cfg.world;
    sc.episodes = cfg.suite.episodes;
    sc.base_seed = cfg.suite.base_seed;
    sc.max_steps = cfg.suite.max_steps;
    sc.success_radius = cfg.suite.success_radius;
    std::vector<Floorplan> worlds;
    const std::vector<EpisodeSpec> specs = build_suite(sc, worlds);

    VariantSection v;
    v.name = "run";
    v.skip_mode = cfg.skip.mode;
    v.predictor = cfg.predictor.kind;
    v.revisit_radius = cfg.skip.revisit_radius;
    v.judge_path = cfg.skip.judge_path;
    v.checkpoint = cfg.predictor.checkpoint;
    VariantRuntime rt = build_variant(cfg, v);
    if (rt.agent.skip_mode == SkipMode::Adaptive && !rt.agent.judge && cfg.skip.judge_path.empty() &&
        cfg.skip.revisit_radius <= 0)
        throw ConfigError("run: adaptive mode without judge or revisit radius never skips");

    const std::vector<EpisodeResult> results = run_suite(worlds, specs, rt.agent, cfg.jobs);
    write_text(out_dir + "/episodes.jsonl", episodes_jsonl(cfg, specs, results), force);
    write_text(out_dir + "/suite.csv", suite_csv(cfg, aggregate(results)), force);
}

void cmd_profile(const RunConfig& cfg, const std::string& out_path, bool force) {
    if (cfg.variants.size() < 2)
        throw ConfigError("profile: need at least two variants (first is the baseline)");
    SuiteConfig sc;
    sc.world = cfg.world;
    sc.episodes = cfg.suite.episodes;
    sc.base_seed = cfg.suite.base_seed;
    sc.max_steps = cfg.suite.max_steps;
    sc.success_radius = cfg.suite.success_radius;
    std::vector<Floorplan> worlds;
    const std::vector<EpisodeSpec> specs = build_suite(sc, worlds);

    std::vector<VariantResult> variant_results;
    for (const auto& v : cfg.variants) {
        VariantRuntime rt = build_variant(cfg, v);
        const std::vector<EpisodeResult> results = run_suite(worlds, specs, rt.agent, cfg.jobs);
        VariantResult vr;
        vr.name = rt.name;
        vr.metrics = aggregate(results);
        vr.logical_memory_bytes = logical_memory_bytes(rt.agent);
        variant_results.push_back(std::move(vr));
    }
    const std::vector<ProfileRow> rows = profile(variant_results);

    std::string out = meta_comment(cfg);
    out += "variant,episodes,sr,spl,soft_spl,skip_ratio,mean_flops_per_step,logical_memory_bytes,"
           "rel_spl,rel_soft_spl,rel_flops,rel_memory";
    if (cfg.record_timings) out += ",rel_step_time,rel_mapping_time";
    out += "\n";
    for (const auto& row : rows) {
        out += row.name + "," + std::to_string(row.metrics.episodes) + "," + fmt(row.metrics.sr) + "," +
               fmt(row.metrics.spl) + "," + fmt(row.metrics.soft_spl) + "," +
               fmt(row.metrics.mean_skip_ratio) + "," + fmt(row.metrics.mean_flops_per_step) + "," +
               std::to_string(row.logical_memory_bytes) + "," + fmt(row.rel_spl) + "," +
               fmt(row.rel_soft_spl) + "," + fmt(row.rel_flops) + "," + fmt(row.rel_memory);
        if (cfg.record_timings) out += "," + fmt(row.rel_step_time) + "," + fmt(row.rel_mapping_time);
        out += "\n";
    }
    write_text(out_path, out, force);
}

void cmd_arch_search(const RunConfig& cfg, const std::string& out_path, bool force) {
    AgentConfig agent = base_agent(cfg);
    agent.skip_mode = SkipMode::Off;
    WorldConfig wc = cfg.world;
    wc.size = cfg.arch_search.world_size;
    agent.map.height = cfg.arch_search.map_size;
    agent.map.width = cfg.arch_search.map_size;
    const std::vector<TrainSample> samples =
        harvest_train_samples(wc, cfg.arch_search.episodes, cfg.arch_search.base_seed, agent,
                              cfg.arch_search.max_steps, cfg.arch_search.snapshot_every);
    if (samples.empty()) throw InfeasibleError("arch_search: no training samples harvested");

    ArchSearchSpace space;
    ArchTrainSettings settings;
    settings.steps = cfg.arch_search.steps;
    settings.batch = cfg.arch_search.batch;
    settings.lr = cfg.arch_search.lr;
    const ArchSearchResult result =
        arch_search(space, cfg.arch_search.budget, cfg.arch_search.seed, samples, settings);

    std::string out = meta_comment(cfg);
    out += "rank,pareto,avg_train_loss,memory_bytes,config\n";
    int rank = 0;
    for (const auto& ev : result.evaluated) {
        bool in_pareto = false;
        for (const auto& p : result.pareto)
            if (p.avg_train_loss == ev.avg_train_loss && p.memory_bytes == ev.memory_bytes &&
                scar_config_to_json(p.cfg) == scar_config_to_json(ev.cfg))
                in_pareto = true;
        out += std::to_string(rank++) + "," + (in_pareto ? "1" : "0") + "," + fmt(ev.avg_train_loss) + "," +
               std::to_string(ev.memory_bytes) + ",\"" + scar_config_to_json(ev.cfg) + "\"\n";
    }
    write_text(out_path, out, force);
}

}  // namespace scarnav
