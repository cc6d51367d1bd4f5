#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "scarnav/world.hpp"

using namespace scarnav;

namespace {

// Independent connectivity oracle: plain flood fill over free cells.
int flood_count(const Floorplan& fp) {
    std::vector<std::uint8_t> seen(fp.cells.size(), 0);
    int start = -1;
    for (std::size_t i = 0; i < fp.cells.size(); ++i)
        if (fp.cells[i] == kFree) {
            start = static_cast<int>(i);
            break;
        }
    if (start < 0) return 0;
    std::vector<int> stack{start};
    seen[start] = 1;
    int count = 0;
    while (!stack.empty()) {
        const int cell = stack.back();
        stack.pop_back();
        ++count;
        const int r = cell / fp.w, c = cell % fp.w;
        const int dr[4] = {1, -1, 0, 0}, dc[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
            const int nr = r + dr[d], nc = c + dc[d];
            if (!fp.is_free(nr, nc)) continue;
            const int ni = nr * fp.w + nc;
            if (!seen[ni]) {
                seen[ni] = 1;
                stack.push_back(ni);
            }
        }
    }
    return count;
}

int free_count(const Floorplan& fp) {
    int n = 0;
    for (auto c : fp.cells)
        if (c == kFree) ++n;
    return n;
}

// Independent shortest-path oracle: relaxation sweeps over the 8-connected
// grid until a fixpoint.
double relaxation_distance(const Floorplan& fp, int ar, int ac, int br, int bc) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> d(fp.cells.size(), inf);
    d[static_cast<std::size_t>(ar) * fp.w + ac] = 0.0;
    const double res = fp.resolution, diag = std::sqrt(2.0) * res;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < fp.h; ++r) {
            for (int c = 0; c < fp.w; ++c) {
                if (!fp.is_free(r, c)) continue;
                const double cur = d[static_cast<std::size_t>(r) * fp.w + c];
                if (cur == inf) continue;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (!dr && !dc) continue;
                        const int nr = r + dr, nc = c + dc;
                        if (!fp.is_free(nr, nc)) continue;
                        const double nd = cur + ((dr && dc) ? diag : res);
                        double& slot = d[static_cast<std::size_t>(nr) * fp.w + nc];
                        if (nd < slot - 1e-15) {
                            slot = nd;
                            changed = true;
                        }
                    }
            }
        }
    }
    return d[static_cast<std::size_t>(br) * fp.w + bc];
}

}  // namespace

TEST_CASE("generate_world determinism and structure") {
    WorldConfig cfg;
    cfg.size = 64;
    cfg.room_count = 4;
    cfg.seed = 7;
    const Floorplan a = generate_world(cfg);
    const Floorplan b = generate_world(cfg);
    CHECK(a.cells == b.cells);  // bit-identical for equal seeds

    for (int c = 0; c < a.w; ++c) {
        CHECK(a.cell(0, c) == kWall);
        CHECK(a.cell(a.h - 1, c) == kWall);
    }
    CHECK(flood_count(a) == free_count(a));

    // Every target category appears; every object touches free space.
    std::set<int> seen_targets;
    for (int r = 0; r < a.h; ++r)
        for (int c = 0; c < a.w; ++c) {
            const int cat = a.cell(r, c);
            if (cat <= 0) continue;
            if (cat <= a.targets) seen_targets.insert(cat);
            bool touch = false;
            for (int dr = -1; dr <= 1 && !touch; ++dr)
                for (int dc = -1; dc <= 1 && !touch; ++dc)
                    if ((dr || dc) && a.is_free(r + dr, c + dc)) touch = true;
            CHECK(touch);
        }
    CHECK(static_cast<int>(seen_targets.size()) == a.targets);
}

TEST_CASE("generate_world degenerate single empty room") {
    WorldConfig cfg;
    cfg.size = 40;
    cfg.room_count = 1;
    cfg.object_density = 0.0;
    cfg.seed = 3;
    const Floorplan fp = generate_world(cfg);
    int objects = 0;
    for (auto c : fp.cells)
        if (c > 0) ++objects;
    CHECK(objects == cfg.targets);  // only the forced target instances
}

TEST_CASE("generate_world rejects bad configs") {
    WorldConfig cfg;
    cfg.size = 16;
    CHECK_THROWS(generate_world(cfg));
    cfg.size = 48;
    cfg.targets = 20;
    cfg.categories = 16;
    CHECK_THROWS(generate_world(cfg));
}

TEST_CASE("floorplan json round trip") {
    WorldConfig cfg;
    cfg.size = 48;
    cfg.seed = 21;
    const Floorplan fp = generate_world(cfg);
    const Floorplan rt = floorplan_from_json(floorplan_to_json(fp));
    CHECK(rt.cells == fp.cells);
    CHECK(rt.resolution == fp.resolution);
    CHECK(rt.spawn_candidates == fp.spawn_candidates);
}

TEST_CASE("observe geometry against a flat wall") {
    // Open arena with a vertical wall; agent exactly 1 m from the wall
    // face, looking straight at it.
    Floorplan fp;
    fp.h = fp.w = 40;
    fp.resolution = 0.05;
    fp.categories = 16;
    fp.targets = 6;
    fp.cells.assign(40 * 40, kFree);
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c)
            if (r == 0 || r == 39 || c == 0 || c == 39) fp.cell(r, c) = kWall;
    for (int r = 1; r < 39; ++r) fp.cell(r, 30) = kWall;  // wall face at x = 1.5

    SensorConfig sensor;
    sensor.rays = 5;
    Pose pose{0.5, 1.0, 0};
    DepthScan depth;
    SemanticScan sem;
    observe(fp, pose, sensor, depth, sem);
    CHECK(depth.ranges[2] == doctest::Approx(1.0).epsilon(0.03));
    CHECK(sem.labels[2] == fp.categories);  // wall pseudo-category

    // Analytic oracle: range = 1.0 / cos(bearing) for a flat wall.
    for (int i = 0; i < sensor.rays; ++i) {
        const double rel = -sensor.fov_deg / 2.0 + i * sensor.fov_deg / (sensor.rays - 1);
        const double expect = 1.0 / std::cos(deg_to_rad(rel));
        CHECK(depth.ranges[i] == doctest::Approx(expect).epsilon(0.05));
    }
}

TEST_CASE("observe in an open arena clamps to max range") {
    Floorplan fp;
    fp.h = fp.w = 220;
    fp.resolution = 0.05;
    fp.cells.assign(220 * 220, kFree);
    SensorConfig sensor;
    Pose pose{5.5, 5.5, 90};
    DepthScan depth;
    SemanticScan sem;
    observe(fp, pose, sensor, depth, sem);
    for (int i = 0; i < sensor.rays; ++i) {
        CHECK(depth.ranges[i] == sensor.max_range);
        CHECK(sem.labels[i] == 0);
    }
}

TEST_CASE("observe determinism and sensor soundness") {
    WorldConfig cfg;
    cfg.size = 48;
    cfg.seed = 5;
    const Floorplan fp = generate_world(cfg);
    const auto& cand = fp.spawn_candidates.front();
    Pose pose{(cand[1] + 0.5) * fp.resolution, (cand[0] + 0.5) * fp.resolution, 60};
    SensorConfig sensor;
    DepthScan d1, d2;
    SemanticScan s1, s2;
    observe(fp, pose, sensor, d1, s1);
    observe(fp, pose, sensor, d2, s2);
    CHECK(d1.ranges == d2.ranges);
    CHECK(s1.labels == s2.labels);

    // The labelled cell sits just past the reported range along the ray.
    for (int i = 0; i < sensor.rays; ++i) {
        if (s1.labels[i] == 0) continue;
        const double phi = pose.theta_deg - sensor.fov_deg / 2.0 + i * sensor.fov_deg / (sensor.rays - 1);
        const double eps = 1e-6;
        const double px = pose.x + (d1.ranges[i] + eps) * std::cos(deg_to_rad(phi));
        const double py = pose.y + (d1.ranges[i] + eps) * std::sin(deg_to_rad(phi));
        const int cat = fp.cell(fp.cell_row(py), fp.cell_col(px));
        const int expect = cat == kWall ? fp.categories : cat;
        CHECK(s1.labels[i] == expect);
    }
}

TEST_CASE("step kinematics") {
    Floorplan fp;
    fp.h = fp.w = 40;
    fp.resolution = 0.05;
    fp.cells.assign(40 * 40, kFree);
    for (int r = 0; r < 40; ++r)
        for (int c = 0; c < 40; ++c)
            if (r == 0 || r == 39 || c == 0 || c == 39) fp.cell(r, c) = kWall;

    Pose pose{1.0, 1.0, 0};
    SUBCASE("turns close over twelve steps") {
        auto [p, col] = step(fp, pose, Action::TurnLeft);
        CHECK(p.theta_deg == 30);
        CHECK(!col);
        Pose q = pose;
        for (int i = 0; i < 12; ++i) q = step(fp, q, Action::TurnLeft).first;
        CHECK(q == pose);
        for (int i = 0; i < 12; ++i) q = step(fp, q, Action::TurnRight).first;
        CHECK(q == pose);
    }
    SUBCASE("forward moves exactly 0.25 m") {
        auto [p, col] = step(fp, pose, Action::MoveForward);
        CHECK(!col);
        CHECK(p.x == doctest::Approx(1.25));
        CHECK(p.y == 1.0);
    }
    SUBCASE("forward into a wall is blocked") {
        Pose near_wall{1.9, 1.0, 0};  // wall face at x = 1.95
        auto [p, col] = step(fp, near_wall, Action::MoveForward);
        CHECK(col);
        CHECK(p == near_wall);
    }
    SUBCASE("stop leaves the pose unchanged") {
        auto [p, col] = step(fp, pose, Action::Stop);
        CHECK(p == pose);
        CHECK(!col);
    }
}

TEST_CASE("geodesic_distance against the relaxation oracle") {
    SUBCASE("trivial cases") {
        Floorplan fp;
        fp.h = fp.w = 32;
        fp.resolution = 0.05;
        fp.cells.assign(32 * 32, kFree);
        CHECK(geodesic_distance(fp, 1.0, 1.0, 1.0, 1.0) == 0.0);
        const double d = geodesic_distance(fp, 0.525, 0.525, 0.525 + 10 * 0.05, 0.525);
        CHECK(d == doctest::Approx(10 * 0.05));
    }
    SUBCASE("random maps") {
        WorldConfig cfg;
        cfg.size = 48;
        for (std::uint64_t seed = 0; seed < 4; ++seed) {
            cfg.seed = seed;
            const Floorplan fp = generate_world(cfg);
            const auto& a = fp.spawn_candidates.front();
            const auto& b = fp.spawn_candidates.back();
            const double ax = (a[1] + 0.5) * fp.resolution, ay = (a[0] + 0.5) * fp.resolution;
            const double bx = (b[1] + 0.5) * fp.resolution, by = (b[0] + 0.5) * fp.resolution;
            const double got = geodesic_distance(fp, ax, ay, bx, by);
            const double expect = relaxation_distance(fp, a[0], a[1], b[0], b[1]);
            CHECK(got == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("metric properties on sampled pairs") {
        WorldConfig cfg;
        cfg.size = 48;
        cfg.seed = 9;
        const Floorplan fp = generate_world(cfg);
        Rng rng(4);
        for (int trial = 0; trial < 10; ++trial) {
            const auto& a = fp.spawn_candidates[rng.index(fp.spawn_candidates.size())];
            const auto& b = fp.spawn_candidates[rng.index(fp.spawn_candidates.size())];
            const auto& c = fp.spawn_candidates[rng.index(fp.spawn_candidates.size())];
            auto pt = [&](const std::array<int, 2>& cell) {
                return std::array<double, 2>{(cell[1] + 0.5) * fp.resolution, (cell[0] + 0.5) * fp.resolution};
            };
            const auto pa = pt(a), pb = pt(b), pc = pt(c);
            const double ab = geodesic_distance(fp, pa[0], pa[1], pb[0], pb[1]);
            const double ba = geodesic_distance(fp, pb[0], pb[1], pa[0], pa[1]);
            const double ac = geodesic_distance(fp, pa[0], pa[1], pc[0], pc[1]);
            const double cb = geodesic_distance(fp, pc[0], pc[1], pb[0], pb[1]);
            CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
            CHECK(ab <= ac + cb + 1e-9);
        }
    }
}
