#include "scarnav/scar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace scarnav {

int ScarConfig::sparse_stride() const {
    int s = 1;
    for (const auto& st : sparse_stages)
        if (st.strided) s *= 2;
    return s;
}

int ScarConfig::dense_stride() const {
    int s = 1;
    for (const auto& st : dense_stages)
        if (st.strided) s *= 2;
    return s;
}

int ScarConfig::dense_input_downsample() const { return sparse_stride() / dense_stride(); }

void ScarConfig::validate(int in_h, int in_w) const {
    if (sparse_stages.empty() || dense_stages.empty())
        throw std::invalid_argument("ScarConfig: both branches need at least one stage");
    for (const auto& st : sparse_stages)
        if (st.blocks < 1 || st.channels < 1) throw std::invalid_argument("ScarConfig: bad sparse stage");
    for (const auto& st : dense_stages)
        if (st.blocks < 1 || st.channels < 1) throw std::invalid_argument("ScarConfig: bad dense stage");
    if (sparse_expansion < 1 || dense_expansion < 1)
        throw std::invalid_argument("ScarConfig: expansion must be >= 1");
    if (decode_channels < 1) throw std::invalid_argument("ScarConfig: decode_channels must be >= 1");
    if (aux_weight < 0) throw std::invalid_argument("ScarConfig: aux_weight must be >= 0");
    const int ss = sparse_stride(), ds = dense_stride();
    if (ss % ds != 0)
        throw std::invalid_argument("ScarConfig: sparse stride must be a multiple of dense stride");
    if (in_h % ss != 0 || in_w % ss != 0)
        throw std::invalid_argument("ScarConfig: input dims must be divisible by the sparse stride");
}

ScarConfig ScarConfig::scar_mini() {
    ScarConfig cfg;
    cfg.sparse_stages = {{2, 16, false}, {2, 32, true}, {2, 64, true}, {2, 64, true}};
    cfg.dense_stages = {{1, 8, false}, {1, 16, true}, {1, 32, true}};
    cfg.sparse_expansion = 1;
    cfg.dense_expansion = 1;
    cfg.decode_channels = 32;
    cfg.fuse_mode = FuseMode::Add;
    cfg.aux_head = true;
    cfg.aux_weight = 0.4;
    return cfg;
}

ScarConfig ScarConfig::dense_baseline() {
    // Dense-heavy reference arm: a deep full-resolution dense trunk with a
    // minimal sparse appendix so the fusion contract still holds.
    ScarConfig cfg;
    cfg.sparse_stages = {{1, 4, false}, {1, 4, true}, {1, 4, true}, {1, 4, true}};
    cfg.dense_stages = {{2, 32, false}, {2, 64, true}, {2, 128, true}, {2, 128, true}};
    cfg.sparse_expansion = 1;
    cfg.dense_expansion = 1;
    cfg.decode_channels = 32;
    cfg.fuse_mode = FuseMode::Add;
    cfg.aux_head = true;
    cfg.aux_weight = 0.4;
    return cfg;
}

ScarConfig ScarConfig::tiny_test() {
    ScarConfig cfg;
    cfg.sparse_stages = {{1, 4, false}, {1, 6, true}};
    cfg.dense_stages = {{1, 4, false}, {1, 6, true}};
    cfg.sparse_expansion = 1;
    cfg.dense_expansion = 1;
    cfg.decode_channels = 6;
    cfg.fuse_mode = FuseMode::Add;
    cfg.aux_head = true;
    cfg.aux_weight = 0.4;
    return cfg;
}

namespace {

nlohmann::json stages_to_json(const std::vector<ScarStage>& stages) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& st : stages) arr.push_back({{"blocks", st.blocks}, {"channels", st.channels}, {"strided", st.strided}});
    return arr;
}

std::vector<ScarStage> stages_from_json(const nlohmann::json& arr) {
    std::vector<ScarStage> out;
    for (const auto& j : arr)
        out.push_back({j.at("blocks").get<int>(), j.at("channels").get<int>(), j.at("strided").get<bool>()});
    return out;
}

}  // namespace

std::string scar_config_to_json(const ScarConfig& cfg) {
    nlohmann::json j;
    j["sparse_stages"] = stages_to_json(cfg.sparse_stages);
    j["dense_stages"] = stages_to_json(cfg.dense_stages);
    j["sparse_expansion"] = cfg.sparse_expansion;
    j["dense_expansion"] = cfg.dense_expansion;
    j["decode_channels"] = cfg.decode_channels;
    j["fuse_mode"] = cfg.fuse_mode == FuseMode::Add ? "add" : "concat";
    j["aux_head"] = cfg.aux_head;
    j["aux_weight"] = cfg.aux_weight;
    return j.dump();
}

ScarConfig scar_config_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    ScarConfig cfg;
    cfg.sparse_stages = stages_from_json(j.at("sparse_stages"));
    cfg.dense_stages = stages_from_json(j.at("dense_stages"));
    cfg.sparse_expansion = j.at("sparse_expansion").get<int>();
    cfg.dense_expansion = j.at("dense_expansion").get<int>();
    cfg.decode_channels = j.at("decode_channels").get<int>();
    const std::string fuse = j.at("fuse_mode").get<std::string>();
    if (fuse == "add")
        cfg.fuse_mode = FuseMode::Add;
    else if (fuse == "concat")
        cfg.fuse_mode = FuseMode::Concat;
    else
        throw std::runtime_error("scar_config_from_json: unknown fuse_mode " + fuse);
    cfg.aux_head = j.at("aux_head").get<bool>();
    cfg.aux_weight = j.at("aux_weight").get<double>();
    return cfg;
}

Tensor ground_truth_map(const Floorplan& world, const MapConfig& map_cfg) {
    if (std::abs(world.resolution - map_cfg.resolution) > 1e-12)
        throw std::invalid_argument("ground_truth_map: world and map resolutions must match");
    Tensor gt(world.targets, map_cfg.height, map_cfg.width);
    for (int r = 0; r < world.h && r < map_cfg.height; ++r) {
        for (int c = 0; c < world.w && c < map_cfg.width; ++c) {
            const int cat = world.cell(r, c);
            if (cat >= 1 && cat <= world.targets) gt.at(cat - 1, r, c) = 1.0;
        }
    }
    return gt;
}

Tensor masked_targets(const Tensor& gt, const std::vector<double>& explored) {
    if (explored.size() != gt.plane()) throw std::invalid_argument("masked_targets: mask shape mismatch");
    Tensor out = gt;
    for (int c = 0; c < gt.c; ++c) {
        double* plane = &out.v[static_cast<std::size_t>(c) * gt.plane()];
        for (std::size_t i = 0; i < gt.plane(); ++i) plane[i] *= (1.0 - explored[i]);
    }
    return out;
}

double bce_loss(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("bce_loss: shape mismatch");
    constexpr double eps = 1e-7;
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const double p = pred.v[i];
        const double t = target.v[i];
        sum += t * std::log(std::max(p, eps)) + (1.0 - t) * std::log(std::max(1.0 - p, eps));
    }
    return -sum / static_cast<double>(pred.v.size());
}

PredictionMap oracle_predictor(const Floorplan& world, const SemanticMap& m, int blur_radius) {
    MapConfig cfg;
    cfg.height = m.data.h;
    cfg.width = m.data.w;
    cfg.resolution = m.resolution;
    cfg.categories = m.categories();
    const Tensor gt = ground_truth_map(world, cfg);

    std::vector<double> explored(m.data.plane());
    const double* e = &m.data.v[static_cast<std::size_t>(kChanExplored) * m.data.plane()];
    for (std::size_t i = 0; i < explored.size(); ++i) explored[i] = e[i];
    Tensor masked = masked_targets(gt, explored);

    // Normalized box filter (zero padding), separable passes.
    if (blur_radius > 0) {
        const int win = 2 * blur_radius + 1;
        Tensor tmp(masked.c, masked.h, masked.w);
        for (int c = 0; c < masked.c; ++c) {
            for (int y = 0; y < masked.h; ++y) {
                double acc = 0.0;
                for (int x = 0; x < std::min(masked.w, blur_radius); ++x) acc += masked.at(c, y, x);
                for (int x = 0; x < masked.w; ++x) {
                    const int enter = x + blur_radius;
                    if (enter < masked.w) acc += masked.at(c, y, enter);
                    tmp.at(c, y, x) = acc;
                    const int leave = x - blur_radius;
                    if (leave >= 0) acc -= masked.at(c, y, leave);
                }
            }
        }
        for (int c = 0; c < masked.c; ++c) {
            for (int x = 0; x < masked.w; ++x) {
                double acc = 0.0;
                for (int y = 0; y < std::min(masked.h, blur_radius); ++y) acc += tmp.at(c, y, x);
                for (int y = 0; y < masked.h; ++y) {
                    const int enter = y + blur_radius;
                    if (enter < masked.h) acc += tmp.at(c, enter, x);
                    const int leave = y - blur_radius;
                    masked.at(c, y, x) = acc / (win * win);
                    if (leave >= 0) acc -= tmp.at(c, leave, x);
                }
            }
        }
    }

    PredictionMap out;
    out.y = Tensor(masked.c, masked.h, masked.w);
    constexpr double lo = 0.01, hi = 0.99;
    for (std::size_t i = 0; i < masked.v.size(); ++i)
        out.y.v[i] = lo + (hi - lo) * std::clamp(masked.v[i], 0.0, 1.0);
    return out;
}

namespace {

bool dominates(const EvaluatedArch& a, const EvaluatedArch& b) {
    const bool le = a.avg_train_loss <= b.avg_train_loss && a.memory_bytes <= b.memory_bytes;
    const bool lt = a.avg_train_loss < b.avg_train_loss || a.memory_bytes < b.memory_bytes;
    return le && lt;
}

template <typename T>
T pick(const std::vector<T>& opts, Rng& rng) {
    return opts[rng.index(opts.size())];
}

}  // namespace

ArchSearchResult arch_search(const ArchSearchSpace& space, int budget, std::uint64_t seed,
                             const std::vector<TrainSample>& subset, const ArchTrainSettings& settings) {
    if (budget < 1) throw std::invalid_argument("arch_search: budget must be >= 1");
    if (subset.empty()) throw std::invalid_argument("arch_search: empty training subset");
    const int in_c = subset[0].map.c;
    const int targets = subset[0].target.c;
    const int in_h = subset[0].map.h, in_w = subset[0].map.w;

    Rng rng(seed);
    ArchSearchResult result;
    for (int trial = 0; trial < budget; ++trial) {
        ScarConfig cfg;
        const int n_sparse = pick(space.sparse_stage_counts, rng);
        int n_dense = pick(space.dense_stage_counts, rng);
        n_dense = std::min(n_dense, n_sparse);  // keep dense stride <= sparse stride
        const int sb = pick(space.sparse_blocks, rng);
        const int db = pick(space.dense_blocks, rng);
        const int sc = pick(space.sparse_base_channels, rng);
        const int dc = pick(space.dense_base_channels, rng);
        cfg.sparse_expansion = pick(space.expansions, rng);
        cfg.dense_expansion = pick(space.expansions, rng);
        cfg.decode_channels = pick(space.decode_channels, rng);
        cfg.fuse_mode = rng.index(2) == 0 ? FuseMode::Add : FuseMode::Concat;
        for (int s = 0; s < n_sparse; ++s)
            cfg.sparse_stages.push_back({sb, std::min(64, sc << std::min(s, 2)), s > 0});
        for (int s = 0; s < n_dense; ++s)
            cfg.dense_stages.push_back({db, std::min(64, dc << std::min(s, 2)), s > 0});
        cfg.validate(in_h, in_w);

        ScarNetwork net(cfg, in_c, targets, in_h, in_w, rng.next_u64());
        std::vector<double> losses;
        Rng batch_rng = rng.derive(0xba7c00ULL + trial);
        for (int step = 0; step < settings.steps; ++step) {
            std::vector<const TrainSample*> batch;
            for (int b = 0; b < settings.batch; ++b) batch.push_back(&subset[batch_rng.index(subset.size())]);
            losses.push_back(net.train_step(batch, settings.lr));
        }
        const std::size_t tail_start = losses.size() - losses.size() / 3;
        double tail = 0.0;
        for (std::size_t i = tail_start; i < losses.size(); ++i) tail += losses[i];
        tail /= static_cast<double>(losses.size() - tail_start);

        EvaluatedArch ev;
        ev.cfg = cfg;
        ev.avg_train_loss = tail;
        ev.memory_bytes = net.count_memory().total();
        result.evaluated.push_back(std::move(ev));
    }

    for (const auto& cand : result.evaluated) {
        bool dominated = false;
        for (const auto& other : result.evaluated) {
            if (&other != &cand && dominates(other, cand)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) result.pareto.push_back(cand);
    }
    return result;
}

}  // namespace scarnav
