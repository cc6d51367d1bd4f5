#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "scarnav/common.hpp"
#include "scarnav/world.hpp"

namespace scarnav {

enum class SkipType { None, Lossless, AggrRevisit, SkipForward };

const char* skip_type_name(SkipType t);

// Normalized depth histogram over [0, max_range].
struct HistogramFeature {
    std::vector<double> bins;
};

HistogramFeature depth_histogram(const DepthScan& scan, int n, double max_range);

// Last-20 poses, most recent first.
class PoseHistory {
  public:
    static constexpr std::size_t kCapacity = 20;

    void push(const Pose& p) {
        poses_.push_front(p);
        if (poses_.size() > kCapacity) poses_.pop_back();
    }
    const std::deque<Pose>& poses() const { return poses_; }
    void clear() { poses_.clear(); }

  private:
    std::deque<Pose> poses_;
};

struct SkipRow {
    std::vector<double> features;  // [D_n || D_n'], 2n values
    double l_m = 0.0;
};

struct SkipDataset {
    int n_bins = 50;
    std::vector<SkipRow> rows;
};

std::string skip_dataset_to_csv(const SkipDataset& data);
SkipDataset skip_dataset_from_csv(const std::string& text);

struct JudgeParams {
    double threshold = 25.0;  // label is (l_m < threshold)
    int trees = 64;
    int max_depth = 12;
    int min_leaf = 3;
    double vote_threshold = 0.5;
    std::uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;         // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    std::uint8_t label = 0;   // leaf class: 1 = skip
};

struct DecisionTree {
    std::vector<TreeNode> nodes;  // root at 0
};

struct JudgeModel {
    int n_bins = 50;
    double threshold = 25.0;
    double vote_threshold = 0.5;
    std::uint64_t seed = 0;
    std::vector<DecisionTree> trees;
};

// Balanced random forest: each tree trains on a class-balanced bootstrap
// (both classes resampled with replacement to the minority count) and grows
// a Gini CART with sqrt-feature subsampling.
JudgeModel train_judge(const SkipDataset& data, const JudgeParams& params);

bool judge_predict(const JudgeModel& model, const HistogramFeature& d_hist,
                   const HistogramFeature& d_prev_hist);
bool judge_predict_features(const JudgeModel& model, const std::vector<double>& features);

std::string judge_to_json(const JudgeModel& model);
JudgeModel judge_from_json(const std::string& text);

// Algorithm-1 style classification. Exact pose repetition anywhere in the
// window wins over a radius match; both precede the forward-skip check.
SkipType classify_skip(const PoseHistory& history, const Pose& pose, std::optional<Action> last_action,
                       const DepthScan& depth, const DepthScan* depth_prev, const JudgeModel* model,
                       double revisit_radius, int n_bins);

}  // namespace scarnav
