#pragma once

#include <array>
#include <string>
#include <vector>

#include "scarnav/tensor.hpp"
#include "scarnav/world.hpp"

namespace scarnav {

// Channel layout of the (4+N) x H x W semantic map.
inline constexpr int kChanObstacle = 0;
inline constexpr int kChanExplored = 1;
inline constexpr int kChanAgent = 2;   // transient current location
inline constexpr int kChanVisited = 3;
inline constexpr int kCategoryChanBase = 4;

struct MapConfig {
    int height = 192;
    int width = 192;
    double resolution = 0.05;
    int categories = 16;  // N
};

struct SemanticMap {
    Tensor data;            // (4+N) x H x W, values in [0,1]
    double resolution = 0.05;
    double origin_x = 0.0, origin_y = 0.0;  // world coordinate of cell (0,0)

    SemanticMap() = default;
    explicit SemanticMap(const MapConfig& cfg)
        : data(4 + cfg.categories, cfg.height, cfg.width), resolution(cfg.resolution) {}

    int categories() const { return data.c - 4; }
    int cell_row(double y) const { return static_cast<int>((y - origin_y) / resolution); }
    int cell_col(double x) const { return static_cast<int>((x - origin_x) / resolution); }
    bool in_bounds(int r, int c) const { return r >= 0 && r < data.h && c >= 0 && c < data.w; }
};

// Egocentric patch, agent at the center cell facing +y. Touched cells are
// tracked so callers can reuse one buffer across steps.
struct LocalMap {
    Tensor data;  // (4+N) x P x P, P = 2*radius_cells + 1
    int radius_cells = 0;
    std::vector<std::array<int, 2>> touched;

    void reset(int channels, int radius) {
        if (data.c != channels || radius_cells != radius) {
            radius_cells = radius;
            data = Tensor(channels, 2 * radius + 1, 2 * radius + 1);
            touched.clear();
            return;
        }
        for (const auto& [r, c] : touched)
            for (int ch = 0; ch < data.c; ++ch) data.at(ch, r, c) = 0.0;
        touched.clear();
    }
};

// Rasterize one paired scan into the egocentric patch. `categories` is N;
// the patch carries 4+N channels.
void scan_to_local(const DepthScan& depth, const SemanticScan& sem, const SensorConfig& sensor,
                   double map_resolution, int categories, LocalMap& local);

LocalMap scan_to_local(const DepthScan& depth, const SemanticScan& sem, const SensorConfig& sensor,
                       double map_resolution, int categories);

// Fuse the local patch into the allocentric map at `pose` (max fusion on
// channels 0,1,4..; channel 2 rewritten; channel 3 accumulates). Returns the
// L1 change over all channels except the transient agent channel. Patch
// cells falling outside the map are dropped; *dropped_cells (optional)
// counts them.
double integrate(SemanticMap& map, const LocalMap& local, const Pose& pose, long* dropped_cells = nullptr);

// Odometry-only update used on skipped steps: rewrites the agent disc and
// marks the visited trail without touching observation channels.
void update_agent_channels(SemanticMap& map, const Pose& pose);

// Sum of |m - m_prev| over all channels except the agent channel.
double map_l1(const SemanticMap& m, const SemanticMap& m_prev);

// Fraction of cells with any nonzero channel (spatial occupancy of the
// map the encoder sees).
double map_active_fraction(const SemanticMap& m);

std::vector<std::uint8_t> map_to_bytes(const SemanticMap& m);
SemanticMap map_from_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace scarnav
