#include "scarnav/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

namespace scarnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr int kAxisDr[4] = {0, 0, -1, 1};
constexpr int kAxisDc[4] = {1, -1, 0, 0};
constexpr int kDiagDr[4] = {-1, -1, 1, 1};
constexpr int kDiagDc[4] = {1, -1, 1, -1};
// Triangles: each axis direction with its two angularly adjacent diagonals.
constexpr int kTriangles[8][2] = {{0, 0}, {0, 2}, {1, 1}, {1, 3}, {2, 0}, {2, 1}, {3, 2}, {3, 3}};

struct HeapEntry {
    double d;
    int cell;
    bool operator>(const HeapEntry& o) const { return d > o.d || (d == o.d && cell > o.cell); }
};

using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>>;

bool line_of_sight(const std::vector<std::uint8_t>& trav, int h, int w, int r0, int c0, int r1, int c1) {
    // March between cell centers; every visited cell must be traversible.
    const double u0 = c0 + 0.5, v0 = r0 + 0.5;
    const double dx = (c1 - c0), dy = (r1 - r0);
    const double len = std::sqrt(dx * dx + dy * dy);
    if (len == 0.0) return true;
    const double ux = dx / len, uy = dy / len;
    int cc = c0, cr = r0;
    const int step_c = ux > 0 ? 1 : (ux < 0 ? -1 : 0);
    const int step_r = uy > 0 ? 1 : (uy < 0 ? -1 : 0);
    const double inv_dx = ux != 0 ? 1.0 / std::abs(ux) : kInf;
    const double inv_dy = uy != 0 ? 1.0 / std::abs(uy) : kInf;
    double t_max_x = ux > 0 ? (cc + 1 - u0) * inv_dx : (ux < 0 ? (u0 - cc) * inv_dx : kInf);
    double t_max_y = uy > 0 ? (cr + 1 - v0) * inv_dy : (uy < 0 ? (v0 - cr) * inv_dy : kInf);
    while (true) {
        double t;
        if (t_max_x < t_max_y) {
            t = t_max_x;
            t_max_x += inv_dx;
            cc += step_c;
        } else {
            t = t_max_y;
            t_max_y += inv_dy;
            cr += step_r;
        }
        if (t >= len - 1e-9) return true;
        if (cr < 0 || cr >= h || cc < 0 || cc >= w) return false;
        if (!trav[static_cast<std::size_t>(cr) * w + cc]) return false;
    }
}

}  // namespace

DistanceField fmm(const std::vector<std::uint8_t>& traversible, int h, int w,
                  const std::vector<std::array<int, 2>>& sources, double resolution,
                  int exact_init_radius) {
    if (sources.empty()) throw std::invalid_argument("fmm: empty source set");
    if (traversible.size() != static_cast<std::size_t>(h) * w)
        throw std::invalid_argument("fmm: traversibility size mismatch");

    DistanceField field;
    field.h = h;
    field.w = w;
    field.resolution = resolution;
    field.d.assign(static_cast<std::size_t>(h) * w, kInf);

    std::vector<std::uint8_t> accepted(field.d.size(), 0);
    MinHeap heap;
    auto push = [&](int r, int c, double v) {
        double& cur = field.at(r, c);
        if (v < cur) {
            cur = v;
            heap.push({v, r * w + c});
        }
    };

    for (const auto& [sr, sc] : sources) {
        if (!field.in_bounds(sr, sc) || !traversible[static_cast<std::size_t>(sr) * w + sc])
            throw std::invalid_argument("fmm: source not traversible");
        push(sr, sc, 0.0);
        // Exact near-field where a straight segment to the source is clear.
        for (int dr = -exact_init_radius; dr <= exact_init_radius; ++dr) {
            for (int dc = -exact_init_radius; dc <= exact_init_radius; ++dc) {
                if (!dr && !dc) continue;
                const int r = sr + dr, c = sc + dc;
                if (!field.in_bounds(r, c) || !traversible[static_cast<std::size_t>(r) * w + c]) continue;
                const double e = std::sqrt(static_cast<double>(dr) * dr + static_cast<double>(dc) * dc);
                if (e > exact_init_radius + 1e-9) continue;
                if (line_of_sight(traversible, h, w, sr, sc, r, c)) push(r, c, e * resolution);
            }
        }
    }

    const double hstep = resolution;
    const double diag = std::sqrt(2.0) * resolution;
    const double half = hstep / std::sqrt(2.0);

    auto update_candidate = [&](int r, int c) -> double {
        double axis_v[4], diag_v[4];
        for (int a = 0; a < 4; ++a) {
            const int nr = r + kAxisDr[a], nc = c + kAxisDc[a];
            axis_v[a] = (field.in_bounds(nr, nc) && accepted[static_cast<std::size_t>(nr) * w + nc])
                            ? field.at(nr, nc)
                            : kInf;
        }
        for (int g = 0; g < 4; ++g) {
            const int nr = r + kDiagDr[g], nc = c + kDiagDc[g];
            diag_v[g] = (field.in_bounds(nr, nc) && accepted[static_cast<std::size_t>(nr) * w + nc])
                            ? field.at(nr, nc)
                            : kInf;
        }
        double best = kInf;
        for (int a = 0; a < 4; ++a)
            if (axis_v[a] < kInf) best = std::min(best, axis_v[a] + hstep);
        for (int g = 0; g < 4; ++g)
            if (diag_v[g] < kInf) best = std::min(best, diag_v[g] + diag);
        for (const auto& [a, g] : kTriangles) {
            const double ua = axis_v[a], ud = diag_v[g];
            if (ua == kInf || ud == kInf) continue;
            const double delta = ua - ud;
            // Characteristic containment: descent direction must lie inside
            // the (axis, diagonal) cone.
            if (delta < 0.0 || delta > half) continue;
            best = std::min(best, ua + std::sqrt(hstep * hstep - delta * delta));
        }
        return best;
    };

    while (!heap.empty()) {
        const auto [dv, cell] = heap.top();
        heap.pop();
        if (accepted[cell] || dv > field.d[cell]) continue;
        accepted[cell] = 1;
        const int r = cell / w, c = cell % w;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (!dr && !dc) continue;
                const int nr = r + dr, nc = c + dc;
                if (!field.in_bounds(nr, nc)) continue;
                const std::size_t ni = static_cast<std::size_t>(nr) * w + nc;
                if (accepted[ni] || !traversible[ni]) continue;
                const double cand = update_candidate(nr, nc);
                if (cand < field.d[ni]) {
                    field.d[ni] = cand;
                    heap.push({cand, nr * w + nc});
                }
            }
        }
    }
    return field;
}

std::array<int, 2> select_goal(const std::vector<double>& z, const DistanceField& d,
                               const PlannerConfig& cfg) {
    if (z.size() != d.d.size()) throw std::invalid_argument("select_goal: shape mismatch");
    double best_score = -1.0;
    double best_d = kInf;
    int best = -1;
    for (int cell = 0; cell < static_cast<int>(z.size()); ++cell) {
        const double dist = d.d[cell];
        if (!std::isfinite(dist)) continue;
        const double score = std::exp(-dist / cfg.lambda) * z[cell];
        if (score > best_score || (score == best_score && dist < best_d)) {
            best_score = score;
            best_d = dist;
            best = cell;
        }
    }
    if (best < 0) throw std::runtime_error("select_goal: no reachable cell");
    return {best / d.w, best % d.w};
}

std::optional<std::array<double, 2>> extract_waypoint(const DistanceField& d_goal, const Pose& pose,
                                                      double step_meters, double origin_x,
                                                      double origin_y) {
    const double res = d_goal.resolution;
    int r = static_cast<int>((pose.y - origin_y) / res);
    int c = static_cast<int>((pose.x - origin_x) / res);
    if (!d_goal.in_bounds(r, c) || !std::isfinite(d_goal.at(r, c))) return std::nullopt;
    if (d_goal.at(r, c) == 0.0) return std::array<double, 2>{pose.x, pose.y};

    double travelled = 0.0;
    while (travelled < step_meters && d_goal.at(r, c) > 0.0) {
        int next_r = r, next_c = c;
        double best = d_goal.at(r, c);
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (!dr && !dc) continue;
                const int nr = r + dr, nc = c + dc;
                if (!d_goal.in_bounds(nr, nc)) continue;
                const double nd = d_goal.at(nr, nc);
                if (nd < best) {
                    best = nd;
                    next_r = nr;
                    next_c = nc;
                }
            }
        }
        if (next_r == r && next_c == c) break;  // flat spot, bail out
        travelled += ((next_r != r && next_c != c) ? std::sqrt(2.0) : 1.0) * res;
        r = next_r;
        c = next_c;
    }
    return std::array<double, 2>{origin_x + (c + 0.5) * res, origin_y + (r + 0.5) * res};
}

Action waypoint_to_action(const Pose& pose, double wx, double wy) {
    const double bearing = std::atan2(wy - pose.y, wx - pose.x) * 180.0 / kPi;
    const double delta = wrap_deg(bearing - pose.theta_deg);
    if (std::abs(delta) <= 15.0) return Action::MoveForward;
    return delta > 0 ? Action::TurnLeft : Action::TurnRight;
}

bool should_stop(const SemanticMap& map, const Pose& pose, int target_category,
                 const PlannerConfig& cfg) {
    const double res = map.resolution;
    const int ar = map.cell_row(pose.y);
    const int ac = map.cell_col(pose.x);
    if (!map.in_bounds(ar, ac)) return false;

    const int radius = static_cast<int>(std::ceil(cfg.stop_distance / res)) + 2;
    const int r0 = std::max(0, ar - radius), r1 = std::min(map.data.h - 1, ar + radius);
    const int c0 = std::max(0, ac - radius), c1 = std::min(map.data.w - 1, ac + radius);
    const int wh = r1 - r0 + 1, ww = c1 - c0 + 1;

    const int chan = kCategoryChanBase + target_category - 1;
    if (chan < 0 || chan >= map.data.c) throw std::invalid_argument("should_stop: bad target category");

    std::vector<std::array<int, 2>> sources;
    std::vector<std::uint8_t> trav(static_cast<std::size_t>(wh) * ww, 0);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const std::size_t li = static_cast<std::size_t>(r - r0) * ww + (c - c0);
            trav[li] = map.data.at(kChanObstacle, r, c) < 0.5 ? 1 : 0;
            if (map.data.at(chan, r, c) >= 0.5) {
                sources.push_back({r - r0, c - c0});
                trav[li] = 1;  // targets are obstacle cells; allow marching out of them
            }
        }
    }
    if (sources.empty()) return false;
    trav[static_cast<std::size_t>(ar - r0) * ww + (ac - c0)] = 1;

    const DistanceField d = fmm(trav, wh, ww, sources, res, cfg.fmm_exact_init_radius);
    return d.at(ar - r0, ac - c0) <= cfg.stop_distance;
}

std::vector<std::uint8_t> traversible_from_map(const SemanticMap& map, int dilation_cells,
                                               const Pose& agent) {
    const int h = map.data.h, w = map.data.w;
    std::vector<std::uint8_t> trav(static_cast<std::size_t>(h) * w, 1);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (map.data.at(kChanObstacle, r, c) < 0.5) continue;
            for (int dr = -dilation_cells; dr <= dilation_cells; ++dr) {
                for (int dc = -dilation_cells; dc <= dilation_cells; ++dc) {
                    const int nr = r + dr, nc = c + dc;
                    if (nr >= 0 && nr < h && nc >= 0 && nc < w)
                        trav[static_cast<std::size_t>(nr) * w + nc] = 0;
                }
            }
        }
    }
    const int ar = map.cell_row(agent.y), ac = map.cell_col(agent.x);
    const int clear = dilation_cells + 1;
    for (int dr = -clear; dr <= clear; ++dr) {
        for (int dc = -clear; dc <= clear; ++dc) {
            const int nr = ar + dr, nc = ac + dc;
            if (nr >= 0 && nr < h && nc >= 0 && nc < w &&
                map.data.at(kChanObstacle, nr, nc) < 0.5)
                trav[static_cast<std::size_t>(nr) * w + nc] = 1;
        }
    }
    // The agent's cell is traversible by definition; near-wall rasterization
    // can spuriously paint it as an obstacle.
    if (ar >= 0 && ar < h && ac >= 0 && ac < w) trav[static_cast<std::size_t>(ar) * w + ac] = 1;
    return trav;
}

std::optional<std::array<int, 2>> TrapHandler::on_step(SemanticMap& map, const Pose& pose, bool collided) {
    if (!collided) {
        consecutive_ = 0;
        has_last_ = false;
        return std::nullopt;
    }
    if (has_last_ && pose == last_pose_) {
        ++consecutive_;
    } else {
        consecutive_ = 1;
        last_pose_ = pose;
        has_last_ = true;
    }
    if (consecutive_ < patience_) return std::nullopt;
    consecutive_ = 0;
    has_last_ = false;

    // Stamp the nearest not-yet-blocked cell ahead of the agent; repeated
    // interventions at one pose wall the direction off progressively.
    const double res = map.resolution;
    const int ar = map.cell_row(pose.y), ac = map.cell_col(pose.x);
    const double dx = heading_cos(pose.theta_deg), dy = heading_sin(pose.theta_deg);
    for (double t = 0.5; t <= 5.01; t += 0.5) {
        const int r = map.cell_row(pose.y + dy * t * res);
        const int c = map.cell_col(pose.x + dx * t * res);
        if (!map.in_bounds(r, c)) break;
        if (r == ar && c == ac) continue;
        if (map.data.at(kChanObstacle, r, c) >= 0.5) continue;
        map.data.at(kChanObstacle, r, c) = 1.0;
        map.data.at(kChanExplored, r, c) = 1.0;
        return std::array<int, 2>{r, c};
    }
    return std::nullopt;
}

}  // namespace scarnav
