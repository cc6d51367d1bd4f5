#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "scarnav/common.hpp"

namespace scarnav {

// Cell encoding: kWall, kFree, or an object category id in [1, categories-1].
// Category ids 1..targets are goal categories; the last id (== categories)
// is reserved for walls as seen by the semantic sensor.
inline constexpr std::int16_t kWall = -1;
inline constexpr std::int16_t kFree = 0;

struct WorldConfig {
    int size = 96;            // square grid, cells
    int room_count = 5;
    int categories = 16;      // N, includes the wall pseudo-category
    int targets = 6;          // C
    double object_density = 0.01;
    double resolution = 0.05;  // meters per cell
    std::uint64_t seed = 0;
};

struct Floorplan {
    int h = 0, w = 0;
    double resolution = 0.05;
    int categories = 16;
    int targets = 6;
    std::vector<std::int16_t> cells;            // row-major
    std::vector<std::array<int, 2>> spawn_candidates;  // free cells with free 8-neighborhood

    std::int16_t cell(int r, int c) const { return cells[static_cast<std::size_t>(r) * w + c]; }
    std::int16_t& cell(int r, int c) { return cells[static_cast<std::size_t>(r) * w + c]; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < h && c >= 0 && c < w; }
    bool is_free(int r, int c) const { return in_bounds(r, c) && cell(r, c) == kFree; }

    int cell_row(double y) const { return static_cast<int>(y / resolution); }
    int cell_col(double x) const { return static_cast<int>(x / resolution); }
    double wall_category() const { return categories; }
};

// Heading is restricted to multiples of 30 degrees so turn sequences close
// exactly.
struct Pose {
    double x = 0.0, y = 0.0;
    int theta_deg = 0;

    bool operator==(const Pose& o) const { return x == o.x && y == o.y && theta_deg == o.theta_deg; }
};

enum class Action { MoveForward, TurnLeft, TurnRight, Stop };

struct DepthScan {
    std::vector<double> ranges;
    double fov_deg = 79.0;
    double max_range = 5.0;
};

struct SemanticScan {
    std::vector<std::int16_t> labels;  // 0 = none, else category id 1..N
};

struct SensorConfig {
    int rays = 64;
    double fov_deg = 79.0;
    double max_range = 5.0;
    double label_noise = 0.0;  // probability a hit label is replaced uniformly
};

inline constexpr double kStepMeters = 0.25;
inline constexpr int kTurnDeg = 30;

// Exact displacement table for the 12 headings; avoids trig drift so that
// revisited poses compare bitwise equal where geometry allows.
const std::array<double, 12>& heading_cos_table();
const std::array<double, 12>& heading_sin_table();
double heading_cos(int theta_deg);
double heading_sin(int theta_deg);

Floorplan generate_world(const WorldConfig& cfg);

// Ray-cast depth + semantic labels. label_noise draws from `noise_rng` when
// provided; with label_noise == 0 the function is pure.
void observe(const Floorplan& world, const Pose& pose, const SensorConfig& sensor,
             DepthScan& depth, SemanticScan& sem, Rng* noise_rng = nullptr);

// Returns the new pose and whether a forward move was blocked.
std::pair<Pose, bool> step(const Floorplan& world, const Pose& pose, Action action);

// Shortest obstacle-avoiding path length between two free points, Dijkstra
// on the 8-connected cell grid; +inf if disconnected.
double geodesic_distance(const Floorplan& world, double ax, double ay, double bx, double by);

// Multi-source Dijkstra distance-to-category field over free cells; object
// cells of the category act as zero-cost sources. +inf where unreachable.
std::vector<double> target_distance_field(const Floorplan& world, int category);

std::string floorplan_to_json(const Floorplan& world);
Floorplan floorplan_from_json(const std::string& text);

}  // namespace scarnav
