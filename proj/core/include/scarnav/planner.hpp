#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "scarnav/mapping.hpp"
#include "scarnav/world.hpp"

namespace scarnav {

struct DistanceField {
    int h = 0, w = 0;
    double resolution = 0.05;
    std::vector<double> d;  // +inf on obstacles / unreachable cells

    double at(int r, int c) const { return d[static_cast<std::size_t>(r) * w + c]; }
    double& at(int r, int c) { return d[static_cast<std::size_t>(r) * w + c]; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < h && c >= 0 && c < w; }
};

struct PlannerConfig {
    double lambda = 2.0;          // goal-selection distance scale, meters
    double stop_distance = 0.9;   // meters
    int obstacle_dilation = 2;    // cells
    int trap_patience = 3;        // consecutive collisions before stamping
    double step_meters = 0.25;
    int fmm_exact_init_radius = 3;  // cells given exact line-of-sight distances
};

// First-order eikonal solve (speed 1) over traversible cells using a
// min-heap narrow band. Updates consider the eight axis/diagonal one-sided
// hops plus triangle (axis, diagonal) pairs, which keeps the field between
// the Euclidean and 8-connected-Dijkstra bounds. Cells within
// exact_init_radius of a source that have line of sight get exact values.
DistanceField fmm(const std::vector<std::uint8_t>& traversible, int h, int w,
                  const std::vector<std::array<int, 2>>& sources, double resolution,
                  int exact_init_radius = 3);

// argmax over cells of exp(-d/lambda) * z; ties by smaller d, then
// row-major. Throws when no cell is reachable.
std::array<int, 2> select_goal(const std::vector<double>& z, const DistanceField& d,
                               const PlannerConfig& cfg);

// Steepest-descent walk on a goal-sourced field until the accumulated arc
// length reaches step_meters (or the goal). Returns world coordinates, or
// nullopt when the agent sits on an unreachable cell.
std::optional<std::array<double, 2>> extract_waypoint(const DistanceField& d_goal, const Pose& pose,
                                                      double step_meters, double origin_x,
                                                      double origin_y);

Action waypoint_to_action(const Pose& pose, double wx, double wy);

// True iff a mapped cell of the target category lies within stop_distance
// of the agent through currently-known free space.
bool should_stop(const SemanticMap& map, const Pose& pose, int target_category,
                 const PlannerConfig& cfg);

// Obstacle mask dilated by `dilation_cells` (Chebyshev), with a clearance
// disc forced around the agent so the planner never starts inside an
// inflated obstacle.
std::vector<std::uint8_t> traversible_from_map(const SemanticMap& map, int dilation_cells,
                                               const Pose& agent);

// Stamps the blocked cell ahead after `patience` consecutive collisions at
// one pose; resets on any successful move.
class TrapHandler {
  public:
    explicit TrapHandler(int patience) : patience_(patience) {}

    // Returns the stamped cell when an intervention happened (the caller
    // must then replan).
    std::optional<std::array<int, 2>> on_step(SemanticMap& map, const Pose& pose, bool collided);

    int consecutive() const { return consecutive_; }

  private:
    int patience_;
    int consecutive_ = 0;
    Pose last_pose_{};
    bool has_last_ = false;
};

}  // namespace scarnav
