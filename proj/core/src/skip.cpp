#include "scarnav/skip.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace scarnav {

const char* skip_type_name(SkipType t) {
    switch (t) {
        case SkipType::None: return "none";
        case SkipType::Lossless: return "lossless";
        case SkipType::AggrRevisit: return "aggr_revisit";
        case SkipType::SkipForward: return "skip_forward";
    }
    return "unknown";
}

HistogramFeature depth_histogram(const DepthScan& scan, int n, double max_range) {
    if (n < 1) throw std::invalid_argument("depth_histogram: need n >= 1");
    if (max_range <= 0) throw std::invalid_argument("depth_histogram: max_range must be positive");
    if (scan.ranges.empty()) throw std::invalid_argument("depth_histogram: empty scan");
    HistogramFeature f;
    f.bins.assign(n, 0.0);
    const double inv_width = n / max_range;
    for (double r : scan.ranges) {
        int b = static_cast<int>(r * inv_width);
        if (b >= n) b = n - 1;  // last bin closed above
        if (b < 0) b = 0;
        f.bins[b] += 1.0;
    }
    const double inv_count = 1.0 / static_cast<double>(scan.ranges.size());
    for (double& b : f.bins) b *= inv_count;
    return f;
}

std::string skip_dataset_to_csv(const SkipDataset& data) {
    std::ostringstream os;
    os.precision(17);
    for (int i = 0; i < 2 * data.n_bins; ++i) os << 'f' << i << ',';
    os << "l_m\n";
    for (const auto& row : data.rows) {
        for (double v : row.features) os << v << ',';
        os << row.l_m << '\n';
    }
    return os.str();
}

SkipDataset skip_dataset_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("skip dataset: empty file");
    const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
    if (cols < 3 || (cols - 1) % 2 != 0) throw std::runtime_error("skip dataset: bad header");
    SkipDataset data;
    data.n_bins = (cols - 1) / 2;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        SkipRow row;
        row.features.reserve(cols - 1);
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) row.features.push_back(std::stod(tok));
        if (static_cast<int>(row.features.size()) != cols)
            throw std::runtime_error("skip dataset: ragged row");
        row.l_m = row.features.back();
        row.features.pop_back();
        data.rows.push_back(std::move(row));
    }
    return data;
}

namespace {

struct TreeBuilder {
    const std::vector<SkipRow>& rows;
    const std::vector<std::uint8_t>& labels;
    int n_features;
    int max_depth, min_leaf;
    int mtry;
    Rng& rng;
    std::vector<TreeNode> nodes;

    static double gini(int pos, int total) {
        if (total == 0) return 0.0;
        const double p = static_cast<double>(pos) / total;
        return 2.0 * p * (1.0 - p);
    }

    int build(std::vector<int>& idx, int depth) {
        int pos = 0;
        for (int i : idx) pos += labels[i];
        const int node_id = static_cast<int>(nodes.size());
        nodes.push_back({});
        TreeNode& placeholder = nodes.back();
        placeholder.label = static_cast<std::uint8_t>(2 * pos >= static_cast<int>(idx.size()) ? 1 : 0);
        if (depth >= max_depth || pos == 0 || pos == static_cast<int>(idx.size()) ||
            static_cast<int>(idx.size()) < 2 * min_leaf) {
            return node_id;
        }

        // Random feature subset, then exhaustive threshold search per feature.
        std::vector<int> feats(n_features);
        for (int i = 0; i < n_features; ++i) feats[i] = i;
        rng.shuffle(feats);
        feats.resize(mtry);
        std::sort(feats.begin(), feats.end());

        double best_impurity = gini(pos, static_cast<int>(idx.size()));
        int best_feat = -1;
        double best_thr = 0.0;
        std::vector<std::pair<double, int>> vals;
        for (int f : feats) {
            vals.clear();
            vals.reserve(idx.size());
            for (int i : idx) vals.emplace_back(rows[i].features[f], labels[i]);
            std::sort(vals.begin(), vals.end());
            int left_pos = 0;
            const int total = static_cast<int>(vals.size());
            for (int split = 1; split < total; ++split) {
                left_pos += vals[split - 1].second;
                if (vals[split].first == vals[split - 1].first) continue;
                if (split < min_leaf || total - split < min_leaf) continue;
                const double imp = (split * gini(left_pos, split) +
                                    (total - split) * gini(pos - left_pos, total - split)) /
                                   total;
                if (imp + 1e-12 < best_impurity) {
                    best_impurity = imp;
                    best_feat = f;
                    best_thr = 0.5 * (vals[split].first + vals[split - 1].first);
                }
            }
        }
        if (best_feat < 0) return node_id;

        std::vector<int> left_idx, right_idx;
        for (int i : idx) {
            if (rows[i].features[best_feat] < best_thr)
                left_idx.push_back(i);
            else
                right_idx.push_back(i);
        }
        if (left_idx.empty() || right_idx.empty()) return node_id;
        idx.clear();
        idx.shrink_to_fit();

        const int left = build(left_idx, depth + 1);
        const int right = build(right_idx, depth + 1);
        nodes[node_id].feature = best_feat;
        nodes[node_id].threshold = best_thr;
        nodes[node_id].left = left;
        nodes[node_id].right = right;
        return node_id;
    }
};

std::uint8_t tree_predict(const DecisionTree& tree, const std::vector<double>& x) {
    int node = 0;
    while (tree.nodes[node].feature >= 0) {
        const TreeNode& n = tree.nodes[node];
        node = x[n.feature] < n.threshold ? n.left : n.right;
    }
    return tree.nodes[node].label;
}

}  // namespace

JudgeModel train_judge(const SkipDataset& data, const JudgeParams& params) {
    if (params.trees < 1) throw std::invalid_argument("train_judge: need >= 1 tree");
    if (data.rows.empty()) throw std::invalid_argument("train_judge: empty dataset");
    const int n_features = 2 * data.n_bins;
    std::vector<std::uint8_t> labels(data.rows.size());
    std::vector<int> pos_idx, neg_idx;
    for (std::size_t i = 0; i < data.rows.size(); ++i) {
        if (static_cast<int>(data.rows[i].features.size()) != n_features)
            throw std::invalid_argument("train_judge: feature width mismatch");
        labels[i] = data.rows[i].l_m < params.threshold ? 1 : 0;
        (labels[i] ? pos_idx : neg_idx).push_back(static_cast<int>(i));
    }
    if (pos_idx.empty() || neg_idx.empty())
        throw std::invalid_argument("train_judge: both classes must be present at threshold " +
                                    std::to_string(params.threshold));

    JudgeModel model;
    model.n_bins = data.n_bins;
    model.threshold = params.threshold;
    model.vote_threshold = params.vote_threshold;
    model.seed = params.seed;

    const int per_class = static_cast<int>(std::min(pos_idx.size(), neg_idx.size()));
    const int mtry = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features)))));
    Rng forest_rng(params.seed);
    for (int t = 0; t < params.trees; ++t) {
        Rng tree_rng = forest_rng.derive(0x7265650000ULL + t);
        std::vector<int> sample;
        sample.reserve(2 * per_class);
        for (int i = 0; i < per_class; ++i) sample.push_back(pos_idx[tree_rng.index(pos_idx.size())]);
        for (int i = 0; i < per_class; ++i) sample.push_back(neg_idx[tree_rng.index(neg_idx.size())]);

        TreeBuilder builder{data.rows, labels, n_features, params.max_depth, params.min_leaf, mtry, tree_rng, {}};
        builder.build(sample, 0);
        model.trees.push_back({std::move(builder.nodes)});
    }
    return model;
}

bool judge_predict_features(const JudgeModel& model, const std::vector<double>& features) {
    if (static_cast<int>(features.size()) != 2 * model.n_bins)
        throw std::invalid_argument("judge_predict: feature dimension mismatch");
    int votes = 0;
    for (const auto& tree : model.trees) votes += tree_predict(tree, features);
    return votes >= model.vote_threshold * static_cast<double>(model.trees.size());
}

bool judge_predict(const JudgeModel& model, const HistogramFeature& d_hist,
                   const HistogramFeature& d_prev_hist) {
    std::vector<double> features;
    features.reserve(d_hist.bins.size() + d_prev_hist.bins.size());
    features.insert(features.end(), d_hist.bins.begin(), d_hist.bins.end());
    features.insert(features.end(), d_prev_hist.bins.begin(), d_prev_hist.bins.end());
    return judge_predict_features(model, features);
}

SkipType classify_skip(const PoseHistory& history, const Pose& pose, std::optional<Action> last_action,
                       const DepthScan& depth, const DepthScan* depth_prev, const JudgeModel* model,
                       double revisit_radius, int n_bins) {
    for (const Pose& prev : history.poses())
        if (prev == pose) return SkipType::Lossless;
    for (const Pose& prev : history.poses()) {
        if (prev.theta_deg != pose.theta_deg) continue;
        const double dx = prev.x - pose.x, dy = prev.y - pose.y;
        if (std::sqrt(dx * dx + dy * dy) < revisit_radius) return SkipType::AggrRevisit;
    }
    if (!last_action || *last_action != Action::MoveForward) return SkipType::None;
    if (!model || !depth_prev) return SkipType::None;
    const HistogramFeature d = depth_histogram(depth, n_bins, depth.max_range);
    const HistogramFeature d_prev = depth_histogram(*depth_prev, n_bins, depth_prev->max_range);
    return judge_predict(*model, d, d_prev) ? SkipType::SkipForward : SkipType::None;
}

std::string judge_to_json(const JudgeModel& model) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["n_bins"] = model.n_bins;
    j["threshold"] = model.threshold;
    j["vote_threshold"] = model.vote_threshold;
    j["seed"] = model.seed;
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : tree.nodes)
            nodes.push_back({n.feature, n.threshold, n.left, n.right, static_cast<int>(n.label)});
        trees.push_back(std::move(nodes));
    }
    j["trees"] = std::move(trees);
    return j.dump();
}

JudgeModel judge_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("judge_from_json: unsupported format_version");
    JudgeModel model;
    model.n_bins = j.at("n_bins").get<int>();
    model.threshold = j.at("threshold").get<double>();
    model.vote_threshold = j.at("vote_threshold").get<double>();
    model.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& tj : j.at("trees")) {
        DecisionTree tree;
        for (const auto& nj : tj) {
            TreeNode n;
            n.feature = nj[0].get<int>();
            n.threshold = nj[1].get<double>();
            n.left = nj[2].get<int>();
            n.right = nj[3].get<int>();
            n.label = static_cast<std::uint8_t>(nj[4].get<int>());
            tree.nodes.push_back(n);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace scarnav
