#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scarnav/mapping.hpp"
#include "scarnav/sparse.hpp"
#include "scarnav/tensor.hpp"
#include "scarnav/world.hpp"

namespace scarnav {

enum class FuseMode { Add, Concat };

struct ScarStage {
    int blocks = 1;
    int channels = 16;
    bool strided = false;
};

// Hybrid predictor layout: a deep sparse residual branch over the raw map
// plus a shallow dense branch over a max-pooled copy, 1x1 compression on
// both, fusion, then a two-conv decode head upsampled back to map size.
struct ScarConfig {
    std::vector<ScarStage> sparse_stages;
    std::vector<ScarStage> dense_stages;
    int sparse_expansion = 1;
    int dense_expansion = 1;
    int decode_channels = 32;
    FuseMode fuse_mode = FuseMode::Add;
    bool aux_head = true;
    double aux_weight = 0.4;

    int sparse_stride() const;
    int dense_stride() const;
    int dense_input_downsample() const;  // sparse_stride / dense_stride
    void validate(int in_h, int in_w) const;

    static ScarConfig scar_mini();
    static ScarConfig dense_baseline();
    static ScarConfig tiny_test();  // small config used by gradient checks
};

std::string scar_config_to_json(const ScarConfig& cfg);
ScarConfig scar_config_from_json(const std::string& text);

struct PredictionMap {
    Tensor y;  // C x H x W, open-interval probabilities

    std::vector<double> channel(int c) const {
        std::vector<double> out(y.plane());
        const std::size_t base = static_cast<std::size_t>(c) * y.plane();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = y.v[base + i];
        return out;
    }
};

// Binary map of true object locations per target category, on the semantic
// map grid.
Tensor ground_truth_map(const Floorplan& world, const MapConfig& map_cfg);

// Zero explored cells out of the label: y[c,i,j] = (1 - e[i,j]) * M[c,i,j].
Tensor masked_targets(const Tensor& gt, const std::vector<double>& explored);

// Binary cross-entropy averaged over C*H*W, log arguments clamped at 1e-7.
double bce_loss(const Tensor& pred, const Tensor& target);

struct TrainSample {
    Tensor map;       // (4+N) x H x W input
    Tensor target;    // C x H x W masked ground truth
};

struct FlopReport {
    std::uint64_t sparse_branch = 0;
    std::uint64_t dense_branch = 0;
    std::uint64_t compression = 0;
    std::uint64_t decode = 0;
    std::uint64_t total() const { return sparse_branch + dense_branch + compression + decode; }
};

struct MemoryReport {
    std::uint64_t params_bytes = 0;
    std::uint64_t peak_activation_bytes = 0;
    std::uint64_t total() const { return params_bytes + peak_activation_bytes; }
};

class ScarNetwork {
  public:
    ScarNetwork(const ScarConfig& cfg, int in_channels, int targets, int in_h, int in_w,
                std::uint64_t seed);
    ~ScarNetwork();
    ScarNetwork(ScarNetwork&&) noexcept;
    ScarNetwork& operator=(ScarNetwork&&) noexcept;

    const ScarConfig& config() const;
    int targets() const;
    int in_channels() const;
    int in_h() const;
    int in_w() const;

    PredictionMap forward(const Tensor& m) const;

    // One Adam update from exact gradients through both branches. Returns
    // the mean total loss (decode + aux_weight * aux) over the batch.
    double train_step(const std::vector<const TrainSample*>& batch, double lr);
    double train_step(const std::vector<TrainSample>& batch, double lr);

    // Conv FLOPs of one inference on this input; sparse layers use the
    // rulebooks the input actually induces.
    FlopReport count_flops(const Tensor& m) const;

    // 4 bytes per parameter; activations follow the inference schedule with
    // every sparse tensor counted at full occupancy (12 bytes per
    // coordinate plus 4 bytes per feature value).
    MemoryReport count_memory() const;

    std::size_t param_count() const;
    std::vector<double> parameters_flat() const;
    void set_parameters_flat(const std::vector<double>& flat);

    // Sizes of each parameter group (conv weights, biases, affine scales and
    // shifts) in flat order; lets tests cover every parameter class.
    std::vector<std::size_t> parameter_slot_sizes() const;

    enum class SlotKind { ConvWeight, ConvBias, AffineScale, AffineShift };
    std::vector<SlotKind> parameter_slot_kinds() const;

    // Batch loss without gradients or updates.
    double evaluate_loss(const std::vector<const TrainSample*>& batch);

    // Gradient of the batch loss w.r.t. every parameter, in flat order
    // (no optimizer update). Used by the finite-difference checks.
    std::vector<double> parameter_gradients(const std::vector<const TrainSample*>& batch);

    std::vector<std::uint8_t> to_checkpoint() const;
    static ScarNetwork from_checkpoint(const std::vector<std::uint8_t>& bytes);

    struct Impl;

  private:
    std::unique_ptr<Impl> impl_;
};

// Ground-truth stand-in predictor: masked targets blurred with a normalized
// box filter and rescaled into (0,1).
PredictionMap oracle_predictor(const Floorplan& world, const SemanticMap& m, int blur_radius = 3);

struct ArchSearchSpace {
    std::vector<int> sparse_stage_counts{3, 4};
    std::vector<int> dense_stage_counts{2, 3};
    std::vector<int> sparse_blocks{1, 2};
    std::vector<int> dense_blocks{1};
    std::vector<int> sparse_base_channels{8, 16};
    std::vector<int> dense_base_channels{8, 16};
    std::vector<int> expansions{1, 2};
    std::vector<int> decode_channels{16, 32};
};

struct ArchTrainSettings {
    int steps = 60;
    int batch = 2;
    double lr = 0.001;
};

struct EvaluatedArch {
    ScarConfig cfg;
    double avg_train_loss = 0.0;       // mean over the final third of steps
    std::uint64_t memory_bytes = 0;
};

struct ArchSearchResult {
    std::vector<EvaluatedArch> evaluated;  // in evaluation order
    std::vector<EvaluatedArch> pareto;     // non-dominated (loss, memory)
};

ArchSearchResult arch_search(const ArchSearchSpace& space, int budget, std::uint64_t seed,
                             const std::vector<TrainSample>& subset, const ArchTrainSettings& settings);

}  // namespace scarnav
