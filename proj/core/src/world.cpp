#include "scarnav/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace scarnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Flood fill over free cells, 4-connected. Returns number of reached cells.
int flood_free(const Floorplan& fp, int r0, int c0, std::vector<std::uint8_t>& seen) {
    seen.assign(static_cast<std::size_t>(fp.h) * fp.w, 0);
    if (!fp.is_free(r0, c0)) return 0;
    std::vector<std::array<int, 2>> stack{{r0, c0}};
    seen[static_cast<std::size_t>(r0) * fp.w + c0] = 1;
    int count = 0;
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        ++count;
        constexpr int dr[4] = {1, -1, 0, 0};
        constexpr int dc[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            int nr = r + dr[d], nc = c + dc[d];
            if (!fp.is_free(nr, nc)) continue;
            auto& s = seen[static_cast<std::size_t>(nr) * fp.w + nc];
            if (s) continue;
            s = 1;
            stack.push_back({nr, nc});
        }
    }
    return count;
}

int count_free(const Floorplan& fp) {
    int n = 0;
    for (auto c : fp.cells)
        if (c == kFree) ++n;
    return n;
}

bool fully_connected(const Floorplan& fp, std::vector<std::uint8_t>& scratch) {
    int total = count_free(fp);
    if (total == 0) return false;
    for (int r = 0; r < fp.h; ++r)
        for (int c = 0; c < fp.w; ++c)
            if (fp.cell(r, c) == kFree) return flood_free(fp, r, c, scratch) == total;
    return false;
}

void carve_corridor(Floorplan& fp, int r1, int c1, int r2, int c2) {
    // Corridors are four cells (0.2 m) wide so the planner's inflated
    // obstacle map keeps them traversible.
    auto carve = [&](int r, int c) {
        for (int dr = -1; dr < 3; ++dr) {
            for (int dc = -1; dc < 3; ++dc) {
                int rr = std::clamp(r + dr, 1, fp.h - 2);
                int cc = std::clamp(c + dc, 1, fp.w - 2);
                fp.cell(rr, cc) = kFree;
            }
        }
    };
    int c = c1;
    while (c != c2) {
        carve(r1, c);
        c += (c2 > c) ? 1 : -1;
    }
    int r = r1;
    while (r != r2) {
        carve(r, c2);
        r += (r2 > r) ? 1 : -1;
    }
    carve(r2, c2);
}

bool has_free_8_neighbor(const Floorplan& fp, int r, int c) {
    for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc)
            if ((dr || dc) && fp.is_free(r + dr, c + dc)) return true;
    return false;
}

// Place one object of `category` on a free cell that keeps the free space
// connected. Returns false when no candidate works.
bool place_object(Floorplan& fp, int category, Rng& rng, std::vector<std::uint8_t>& scratch) {
    std::vector<std::array<int, 2>> free_cells;
    for (int r = 1; r < fp.h - 1; ++r)
        for (int c = 1; c < fp.w - 1; ++c)
            if (fp.cell(r, c) == kFree) free_cells.push_back({r, c});
    if (free_cells.size() < 2) return false;
    rng.shuffle(free_cells);
    const int attempts = std::min<int>(64, static_cast<int>(free_cells.size()));
    for (int a = 0; a < attempts; ++a) {
        auto [r, c] = free_cells[a];
        fp.cell(r, c) = static_cast<std::int16_t>(category);
        if (has_free_8_neighbor(fp, r, c) && fully_connected(fp, scratch)) return true;
        fp.cell(r, c) = kFree;
    }
    return false;
}

}  // namespace

const std::array<double, 12>& heading_cos_table() {
    // cos of 0,30,...,330 degrees from exact surd values.
    static const double h = std::sqrt(3.0) / 2.0;
    static const std::array<double, 12> t = {1.0, h, 0.5, 0.0, -0.5, -h, -1.0, -h, -0.5, 0.0, 0.5, h};
    return t;
}

const std::array<double, 12>& heading_sin_table() {
    static const double h = std::sqrt(3.0) / 2.0;
    static const std::array<double, 12> t = {0.0, 0.5, h, 1.0, h, 0.5, 0.0, -0.5, -h, -1.0, -h, -0.5};
    return t;
}

double heading_cos(int theta_deg) { return heading_cos_table()[(theta_deg / 30) % 12]; }
double heading_sin(int theta_deg) { return heading_sin_table()[(theta_deg / 30) % 12]; }

Floorplan generate_world(const WorldConfig& cfg) {
    if (cfg.size < 32) throw std::invalid_argument("generate_world: size must be >= 32");
    if (cfg.room_count < 1) throw std::invalid_argument("generate_world: room_count must be >= 1");
    if (cfg.targets > cfg.categories) throw std::invalid_argument("generate_world: targets must be <= categories");
    if (cfg.targets < 1 || cfg.categories < 2)
        throw std::invalid_argument("generate_world: need >= 1 target and >= 2 categories");

    Floorplan fp;
    fp.h = fp.w = cfg.size;
    fp.resolution = cfg.resolution;
    fp.categories = cfg.categories;
    fp.targets = cfg.targets;
    fp.cells.assign(static_cast<std::size_t>(fp.h) * fp.w, kWall);

    Rng rng(cfg.seed);
    std::vector<std::array<int, 2>> centers;
    // Rooms must hold several 0.25 m strides (5 cells each at the default
    // resolution) or the action space cannot traverse them.
    const int min_room = std::max(12, cfg.size / 5);
    const int max_room = std::max(min_room + 2, cfg.size / 2);
    for (int i = 0; i < cfg.room_count; ++i) {
        int rh = rng.uniform_int(min_room, max_room);
        int rw = rng.uniform_int(min_room, max_room);
        int r0 = rng.uniform_int(1, std::max(1, fp.h - rh - 1));
        int c0 = rng.uniform_int(1, std::max(1, fp.w - rw - 1));
        for (int r = r0; r < std::min(fp.h - 1, r0 + rh); ++r)
            for (int c = c0; c < std::min(fp.w - 1, c0 + rw); ++c) fp.cell(r, c) = kFree;
        centers.push_back({r0 + rh / 2, c0 + rw / 2});
    }
    for (std::size_t i = 1; i < centers.size(); ++i)
        carve_corridor(fp, centers[i - 1][0], centers[i - 1][1], centers[i][0], centers[i][1]);

    std::vector<std::uint8_t> scratch;
    if (!fully_connected(fp, scratch)) {
        // Connect any stragglers to the first room center.
        for (int r = 1; r < fp.h - 1; ++r) {
            for (int c = 1; c < fp.w - 1; ++c) {
                if (fp.cell(r, c) != kFree) continue;
                flood_free(fp, centers[0][0], centers[0][1], scratch);
                if (!scratch[static_cast<std::size_t>(r) * fp.w + c])
                    carve_corridor(fp, r, c, centers[0][0], centers[0][1]);
            }
        }
    }

    // Forced target instances, then density-driven clutter.
    for (int cat = 1; cat <= cfg.targets; ++cat) {
        if (!place_object(fp, cat, rng, scratch))
            throw std::runtime_error("generate_world: could not place target category " + std::to_string(cat) +
                                     " without disconnecting free space (density too high or rooms too small)");
    }
    const int extra = static_cast<int>(cfg.object_density * count_free(fp));
    int failures = 0;
    for (int i = 0; i < extra; ++i) {
        int cat = rng.uniform_int(1, cfg.categories - 1);
        if (!place_object(fp, cat, rng, scratch) && ++failures > 8)
            throw std::runtime_error("generate_world: object placement infeasible at requested density " +
                                     std::to_string(cfg.object_density));
    }

    for (int r = 1; r < fp.h - 1; ++r) {
        for (int c = 1; c < fp.w - 1; ++c) {
            if (fp.cell(r, c) != kFree) continue;
            bool clear = true;
            for (int dr = -1; dr <= 1 && clear; ++dr)
                for (int dc = -1; dc <= 1 && clear; ++dc)
                    if (!fp.is_free(r + dr, c + dc)) clear = false;
            if (clear) fp.spawn_candidates.push_back({r, c});
        }
    }
    if (fp.spawn_candidates.empty())
        throw std::runtime_error("generate_world: no spawnable interior cells; increase size or lower density");
    return fp;
}

namespace {

// DDA grid traversal. Calls visit(r, c, t_enter_cells) for every cell the
// ray enters after the start cell; stops when visit returns false or
// t exceeds t_max (in cell units).
template <typename Visit>
void traverse(double u, double v, double dx, double dy, double t_max, Visit&& visit) {
    int cc = static_cast<int>(std::floor(u));
    int cr = static_cast<int>(std::floor(v));
    const int step_c = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
    const int step_r = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
    const double inv_dx = dx != 0 ? 1.0 / std::abs(dx) : kInf;
    const double inv_dy = dy != 0 ? 1.0 / std::abs(dy) : kInf;
    double t_max_x = dx > 0 ? (cc + 1 - u) * inv_dx : (dx < 0 ? (u - cc) * inv_dx : kInf);
    double t_max_y = dy > 0 ? (cr + 1 - v) * inv_dy : (dy < 0 ? (v - cr) * inv_dy : kInf);
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
        if (t > t_max) return;
        if (!visit(cr, cc, t)) return;
    }
}

}  // namespace

void observe(const Floorplan& world, const Pose& pose, const SensorConfig& sensor,
             DepthScan& depth, SemanticScan& sem, Rng* noise_rng) {
    if (sensor.rays < 1) throw std::invalid_argument("observe: need at least one ray");
    depth.ranges.assign(sensor.rays, sensor.max_range);
    depth.fov_deg = sensor.fov_deg;
    depth.max_range = sensor.max_range;
    sem.labels.assign(sensor.rays, 0);

    const double res = world.resolution;
    const double u0 = pose.x / res;
    const double v0 = pose.y / res;
    const double t_max_cells = sensor.max_range / res;
    for (int i = 0; i < sensor.rays; ++i) {
        const double phi = sensor.rays == 1
                               ? static_cast<double>(pose.theta_deg)
                               : pose.theta_deg - sensor.fov_deg / 2.0 + i * sensor.fov_deg / (sensor.rays - 1);
        const double dx = std::cos(deg_to_rad(phi));
        const double dy = std::sin(deg_to_rad(phi));
        traverse(u0, v0, dx, dy, t_max_cells, [&](int r, int c, double t) {
            if (!world.in_bounds(r, c)) return false;
            const std::int16_t cell = world.cell(r, c);
            if (cell == kFree) return true;
            depth.ranges[i] = t * res;
            sem.labels[i] = cell == kWall ? static_cast<std::int16_t>(world.categories) : cell;
            return false;
        });
        if (sensor.label_noise > 0.0 && noise_rng && sem.labels[i] != 0 &&
            noise_rng->uniform() < sensor.label_noise) {
            sem.labels[i] = static_cast<std::int16_t>(noise_rng->uniform_int(1, world.categories));
        }
    }
}

std::pair<Pose, bool> step(const Floorplan& world, const Pose& pose, Action action) {
    Pose p = pose;
    switch (action) {
        case Action::TurnLeft:
            p.theta_deg = (p.theta_deg + kTurnDeg) % 360;
            return {p, false};
        case Action::TurnRight:
            p.theta_deg = (p.theta_deg - kTurnDeg + 360) % 360;
            return {p, false};
        case Action::Stop:
            return {p, false};
        case Action::MoveForward:
            break;
    }
    const double dx = heading_cos(p.theta_deg);
    const double dy = heading_sin(p.theta_deg);
    const double res = world.resolution;
    bool blocked = false;
    traverse(p.x / res, p.y / res, dx, dy, kStepMeters / res, [&](int r, int c, double) {
        if (!world.is_free(r, c)) {
            blocked = true;
            return false;
        }
        return true;
    });
    if (blocked) return {p, true};
    p.x += kStepMeters * dx;
    p.y += kStepMeters * dy;
    return {p, false};
}

namespace {

struct HeapEntry {
    double d;
    int cell;
    bool operator>(const HeapEntry& o) const { return d > o.d || (d == o.d && cell > o.cell); }
};

using MinHeap = std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>>;

void dijkstra_free(const Floorplan& world, std::vector<double>& dist, MinHeap& heap) {
    const double res = world.resolution;
    const double diag = std::sqrt(2.0) * res;
    while (!heap.empty()) {
        auto [d, cell] = heap.top();
        heap.pop();
        if (d > dist[cell]) continue;
        const int r = cell / world.w, c = cell % world.w;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (!dr && !dc) continue;
                const int nr = r + dr, nc = c + dc;
                if (!world.is_free(nr, nc)) continue;
                const double nd = d + ((dr && dc) ? diag : res);
                const int ncell = nr * world.w + nc;
                if (nd < dist[ncell]) {
                    dist[ncell] = nd;
                    heap.push({nd, ncell});
                }
            }
        }
    }
}

}  // namespace

double geodesic_distance(const Floorplan& world, double ax, double ay, double bx, double by) {
    const int ar = world.cell_row(ay), ac = world.cell_col(ax);
    const int br = world.cell_row(by), bc = world.cell_col(bx);
    if (!world.is_free(ar, ac) || !world.is_free(br, bc))
        throw std::invalid_argument("geodesic_distance: endpoints must lie on free cells");
    if (ar == br && ac == bc) return 0.0;
    std::vector<double> dist(static_cast<std::size_t>(world.h) * world.w, kInf);
    MinHeap heap;
    dist[static_cast<std::size_t>(ar) * world.w + ac] = 0.0;
    heap.push({0.0, ar * world.w + ac});
    dijkstra_free(world, dist, heap);
    return dist[static_cast<std::size_t>(br) * world.w + bc];
}

std::vector<double> target_distance_field(const Floorplan& world, int category) {
    std::vector<double> dist(static_cast<std::size_t>(world.h) * world.w, kInf);
    MinHeap heap;
    for (int r = 0; r < world.h; ++r) {
        for (int c = 0; c < world.w; ++c) {
            if (world.cell(r, c) == category) {
                dist[static_cast<std::size_t>(r) * world.w + c] = 0.0;
                heap.push({0.0, r * world.w + c});
            }
        }
    }
    // Sources are object cells; march out through free space only.
    const double res = world.resolution;
    const double diag = std::sqrt(2.0) * res;
    while (!heap.empty()) {
        auto [d, cell] = heap.top();
        heap.pop();
        if (d > dist[cell]) continue;
        const int r = cell / world.w, c = cell % world.w;
        for (int dr = -1; dr <= 1; ++dr) {
            for (int dc = -1; dc <= 1; ++dc) {
                if (!dr && !dc) continue;
                const int nr = r + dr, nc = c + dc;
                if (!world.is_free(nr, nc)) continue;
                const double nd = d + ((dr && dc) ? diag : res);
                const int ncell = nr * world.w + nc;
                if (nd < dist[ncell]) {
                    dist[ncell] = nd;
                    heap.push({nd, ncell});
                }
            }
        }
    }
    return dist;
}

std::string floorplan_to_json(const Floorplan& world) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["h"] = world.h;
    j["w"] = world.w;
    j["resolution"] = world.resolution;
    j["categories"] = world.categories;
    j["targets"] = world.targets;
    j["cells"] = world.cells;
    return j.dump();
}

Floorplan floorplan_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("floorplan_from_json: unsupported format_version");
    Floorplan fp;
    fp.h = j.at("h").get<int>();
    fp.w = j.at("w").get<int>();
    fp.resolution = j.at("resolution").get<double>();
    fp.categories = j.at("categories").get<int>();
    fp.targets = j.at("targets").get<int>();
    fp.cells = j.at("cells").get<std::vector<std::int16_t>>();
    if (fp.cells.size() != static_cast<std::size_t>(fp.h) * fp.w)
        throw std::runtime_error("floorplan_from_json: cell count mismatch");
    for (int r = 1; r < fp.h - 1; ++r) {
        for (int c = 1; c < fp.w - 1; ++c) {
            if (fp.cell(r, c) != kFree) continue;
            bool clear = true;
            for (int dr = -1; dr <= 1 && clear; ++dr)
                for (int dc = -1; dc <= 1 && clear; ++dc)
                    if (!fp.is_free(r + dr, c + dc)) clear = false;
            if (clear) fp.spawn_candidates.push_back({r, c});
        }
    }
    return fp;
}

}  // namespace scarnav
