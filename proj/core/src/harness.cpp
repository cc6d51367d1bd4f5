#include "scarnav/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace scarnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct EpisodeState {
    SemanticMap map;
    PoseHistory history;
    LocalMap local;
    std::optional<DepthScan> depth_prev;
    std::optional<Action> last_action;
    std::optional<Pose> prev_pose;
    bool force_refresh = false;
    int turn_commit = 0;  // +1 left, -1 right while escaping a blocked cone
    int commit_steps = 0;
    int gate_cooldown = 0;  // steps with the forward gate suspended
    std::optional<std::array<double, 2>> waypoint;
    std::array<int, 2> goal{-1, -1};
    std::optional<DistanceField> d_goal;
    std::vector<double> z;  // target-channel probabilities at the last refresh
};

// Nearest mapped target cell by Euclidean distance to the agent; the goal
// field handles actual reachability. Mapped instances take priority over
// the prediction so the agent homes in once the target is seen.
std::optional<std::array<int, 2>> nearest_mapped_target(const SemanticMap& map, int chan, int ar, int ac) {
    std::optional<std::array<int, 2>> best;
    double best_d2 = kInf;
    for (int r = 0; r < map.data.h; ++r) {
        for (int c = 0; c < map.data.w; ++c) {
            if (map.data.at(chan, r, c) < 0.5) continue;
            const double d2 = static_cast<double>(r - ar) * (r - ar) + static_cast<double>(c - ac) * (c - ac);
            if (d2 < best_d2) {
                best_d2 = d2;
                best = {{r, c}};
            }
        }
    }
    return best;
}

// Nearest explored free cell bordering unexplored space, by field
// distance. Returns {-1,-1} when the map has no frontier left.
std::array<int, 2> nearest_frontier(const SemanticMap& map, const DistanceField& d_agent) {
    double best = kInf;
    std::array<int, 2> goal{-1, -1};
    for (int r = 1; r < map.data.h - 1; ++r) {
        for (int c = 1; c < map.data.w - 1; ++c) {
            if (map.data.at(kChanExplored, r, c) < 0.5) continue;
            if (map.data.at(kChanObstacle, r, c) >= 0.5) continue;
            const bool frontier = map.data.at(kChanExplored, r - 1, c) < 0.5 ||
                                  map.data.at(kChanExplored, r + 1, c) < 0.5 ||
                                  map.data.at(kChanExplored, r, c - 1) < 0.5 ||
                                  map.data.at(kChanExplored, r, c + 1) < 0.5;
            if (!frontier) continue;
            const double d = d_agent.at(r, c);
            if (d < best) {
                best = d;
                goal = {r, c};
            }
        }
    }
    return goal;
}

// True when the straight 0.25 m sweep ahead crosses a mapped obstacle.
bool map_forward_blocked(const SemanticMap& map, const Pose& pose) {
    const double res = map.resolution;
    const double dx = heading_cos(pose.theta_deg), dy = heading_sin(pose.theta_deg);
    const int ar = map.cell_row(pose.y), ac = map.cell_col(pose.x);
    const int samples = static_cast<int>(std::ceil(kStepMeters / (0.5 * res)));
    for (int i = 1; i <= samples; ++i) {
        const double t = kStepMeters * i / samples;
        const int r = map.cell_row(pose.y + dy * t);
        const int c = map.cell_col(pose.x + dx * t);
        if (!map.in_bounds(r, c)) return true;
        if (r == ar && c == ac) continue;
        if (map.data.at(kChanObstacle, r, c) >= 0.5) return true;
    }
    return false;
}

// Goal-sourced distance field with the goal forced traversible.
DistanceField goal_field(const SemanticMap& map, const AgentConfig& agent, const Pose& pose,
                         const std::array<int, 2>& goal) {
    std::vector<std::uint8_t> trav = traversible_from_map(map, agent.planner.obstacle_dilation, pose);
    trav[static_cast<std::size_t>(goal[0]) * map.data.w + goal[1]] = 1;
    return fmm(trav, map.data.h, map.data.w, {goal}, map.resolution, agent.planner.fmm_exact_init_radius);
}

}  // namespace

const char* skip_mode_name(SkipMode m) {
    switch (m) {
        case SkipMode::Off: return "off";
        case SkipMode::NaiveForward: return "naive_forward";
        case SkipMode::Adaptive: return "adaptive";
    }
    return "unknown";
}

const char* predictor_kind_name(PredictorKind k) {
    switch (k) {
        case PredictorKind::Oracle: return "oracle";
        case PredictorKind::Scar: return "scar";
        case PredictorKind::DenseBaseline: return "dense_baseline";
    }
    return "unknown";
}

EpisodeResult run_episode(const Floorplan& world, const EpisodeSpec& spec, const AgentConfig& agent) {
    if ((agent.predictor == PredictorKind::Scar || agent.predictor == PredictorKind::DenseBaseline) &&
        agent.net == nullptr)
        throw std::invalid_argument("run_episode: predictor network missing");
    if (agent.judge && agent.judge->n_bins != agent.n_bins)
        throw std::invalid_argument("run_episode: judge bin count mismatch");

    EpisodeResult result;
    const std::vector<double> target_field = target_distance_field(world, spec.target_category);
    const int sr0 = world.cell_row(spec.start.y), sc0 = world.cell_col(spec.start.x);
    result.shortest_length = target_field[static_cast<std::size_t>(sr0) * world.w + sc0];
    result.initial_geodesic = result.shortest_length;
    if (!std::isfinite(result.shortest_length) || result.shortest_length <= 0) {
        result.valid = false;
        return result;
    }

    EpisodeState st;
    st.map = SemanticMap(agent.map);
    if (world.h > agent.map.height || world.w > agent.map.width)
        throw std::invalid_argument("run_episode: world does not fit the map");
    TrapHandler trap(agent.planner.trap_patience);
    Rng noise_rng(spec.world_seed ^ 0x6e6f697365ULL);

    Pose pose = spec.start;
    DepthScan depth;
    SemanticScan sem;
    const int c_t = spec.target_category;

    bool stopped = false;
    for (int t = 0; t < spec.max_steps && !stopped; ++t) {
        // --- skip classification ------------------------------------------
        SkipType skip = SkipType::None;
        {
            const auto t0 = Clock::now();
            observe(world, pose, agent.sensor, depth, sem, &noise_rng);
            switch (agent.skip_mode) {
                case SkipMode::Off:
                    break;
                case SkipMode::NaiveForward:
                    if (st.last_action && *st.last_action == Action::MoveForward) skip = SkipType::SkipForward;
                    break;
                case SkipMode::Adaptive: {
                    const auto j0 = Clock::now();
                    skip = classify_skip(st.history, pose, st.last_action, depth,
                                         st.depth_prev ? &*st.depth_prev : nullptr, agent.judge,
                                         agent.revisit_radius, agent.n_bins);
                    if (st.last_action && *st.last_action == Action::MoveForward && skip != SkipType::Lossless &&
                        skip != SkipType::AggrRevisit) {
                        result.timings.judge_time += seconds_since(j0);
                        ++result.timings.judge_calls;
                    }
                    break;
                }
            }
            result.timings.skip_classify += seconds_since(t0);
        }

        // --- semantic mapping ---------------------------------------------
        if (skip == SkipType::None) {
            const auto t0 = Clock::now();
            scan_to_local(depth, sem, agent.sensor, st.map.resolution, agent.map.categories, st.local);
            integrate(st.map, st.local, pose);
            result.timings.mapping += seconds_since(t0);
            ++result.timings.mapping_calls;
        } else {
            update_agent_channels(st.map, pose);
            switch (skip) {
                case SkipType::Lossless: ++result.skip_lossless; break;
                case SkipType::AggrRevisit: ++result.skip_revisit; break;
                case SkipType::SkipForward: ++result.skip_forward; break;
                default: break;
            }
        }
        st.history.push(pose);

        // --- prediction + goal refresh -------------------------------------
        // Prediction runs on the fixed cadence; a forced refresh (dead-ended
        // local plan) re-selects the goal from the existing prediction so
        // the invocation count stays ceil(steps / interval).
        auto refresh_goal = [&](bool rerun_predictor) {
            if (rerun_predictor) {
                const auto t0 = Clock::now();
                switch (agent.predictor) {
                    case PredictorKind::Oracle:
                        st.z = oracle_predictor(world, st.map).channel(c_t - 1);
                        break;
                    case PredictorKind::Scar:
                    case PredictorKind::DenseBaseline:
                        st.z = agent.net->forward(st.map.data).channel(c_t - 1);
                        result.flops_total += agent.net->count_flops(st.map.data).total();
                        break;
                }
                result.timings.predict += seconds_since(t0);
                ++result.timings.predict_calls;
            }
            {
                const auto t0 = Clock::now();
                const int ar = st.map.cell_row(pose.y), ac = st.map.cell_col(pose.x);
                const auto mapped = nearest_mapped_target(st.map, kCategoryChanBase + c_t - 1, ar, ac);
                if (mapped) {
                    st.goal = *mapped;
                } else {
                    std::vector<std::uint8_t> trav =
                        traversible_from_map(st.map, agent.planner.obstacle_dilation, pose);
                    const DistanceField d_agent = fmm(trav, st.map.data.h, st.map.data.w, {{ar, ac}},
                                                      st.map.resolution, agent.planner.fmm_exact_init_radius);
                    st.goal = select_goal(st.z, d_agent, agent.planner);
                    // A flat prediction collapses the score onto the agent's
                    // cell; explore the nearest frontier instead. Narrow
                    // passages can vanish under dilation, so relax it when
                    // no frontier is reachable.
                    if (d_agent.at(st.goal[0], st.goal[1]) <= agent.planner.step_meters) {
                        auto frontier = nearest_frontier(st.map, d_agent);
                        if (frontier[0] < 0) {
                            const std::vector<std::uint8_t> trav0 = traversible_from_map(st.map, 0, pose);
                            const DistanceField d0 = fmm(trav0, st.map.data.h, st.map.data.w, {{ar, ac}},
                                                         st.map.resolution, agent.planner.fmm_exact_init_radius);
                            frontier = nearest_frontier(st.map, d0);
                        }
                        if (frontier[0] >= 0) st.goal = frontier;
                    }
                }
                st.d_goal = goal_field(st.map, agent, pose, st.goal);
                st.waypoint.reset();  // cache tied to the old field
                result.timings.goal_select += seconds_since(t0);
            }
        };
        if (t % agent.goal_interval == 0) {
            st.force_refresh = false;
            refresh_goal(true);
        } else if (st.force_refresh) {
            st.force_refresh = false;
            refresh_goal(false);
        }

        // --- local planning -------------------------------------------------
        Action action;
        {
            const auto t0 = Clock::now();
            if (should_stop(st.map, pose, c_t, agent.planner)) {
                action = Action::Stop;
            } else {
                const bool same_position =
                    st.prev_pose && st.prev_pose->x == pose.x && st.prev_pose->y == pose.y;
                if (skip != SkipType::Lossless || !st.waypoint || !same_position) {
                    auto wp = extract_waypoint(*st.d_goal, pose, agent.planner.step_meters,
                                               st.map.origin_x, st.map.origin_y);
                    if (!wp) {
                        // Agent fell off the cached field (trap stamp or fresh
                        // dilation); rebuild once without dilation.
                        std::vector<std::uint8_t> trav = traversible_from_map(st.map, 0, pose);
                        trav[static_cast<std::size_t>(st.goal[0]) * st.map.data.w + st.goal[1]] = 1;
                        st.d_goal = fmm(trav, st.map.data.h, st.map.data.w, {st.goal}, st.map.resolution,
                                        agent.planner.fmm_exact_init_radius);
                        wp = extract_waypoint(*st.d_goal, pose, agent.planner.step_meters, st.map.origin_x,
                                              st.map.origin_y);
                        if (!wp) st.force_refresh = true;  // goal sealed off, re-select next step
                    }
                    st.waypoint = wp;
                }
                const bool at_waypoint =
                    st.waypoint && std::abs((*st.waypoint)[0] - pose.x) < st.map.resolution &&
                    std::abs((*st.waypoint)[1] - pose.y) < st.map.resolution;
                action = (st.waypoint && !at_waypoint)
                             ? waypoint_to_action(pose, (*st.waypoint)[0], (*st.waypoint)[1])
                             : Action::TurnLeft;
                // Gate forwards against obstacles the map already knows;
                // commit to a turn direction until a clear heading roughly
                // toward the waypoint appears.
                const double delta =
                    st.waypoint ? wrap_deg(std::atan2((*st.waypoint)[1] - pose.y, (*st.waypoint)[0] - pose.x) *
                                               180.0 / kPi -
                                           pose.theta_deg)
                                : 0.0;
                if (st.gate_cooldown > 0) {
                    --st.gate_cooldown;
                } else if (st.turn_commit != 0) {
                    if (!map_forward_blocked(st.map, pose) && std::abs(delta) <= 45.0) {
                        action = Action::MoveForward;
                        st.turn_commit = 0;
                    } else if (++st.commit_steps > 12) {
                        // Full rotation without a clear cone: suspend the gate
                        // and push through; phantom obstacles clear, real
                        // walls collide and get stamped.
                        st.turn_commit = 0;
                        st.gate_cooldown = 4;
                    } else {
                        action = st.turn_commit > 0 ? Action::TurnLeft : Action::TurnRight;
                    }
                } else if (action == Action::MoveForward && map_forward_blocked(st.map, pose)) {
                    st.turn_commit = delta >= 0 ? 1 : -1;
                    st.commit_steps = 0;
                    action = st.turn_commit > 0 ? Action::TurnLeft : Action::TurnRight;
                }
            }
            result.timings.local_plan += seconds_since(t0);
        }

        // --- execution -------------------------------------------------------
        const auto [next_pose, collided] = step(world, pose, action);
        ++result.steps;
        if (agent.keep_trajectory) result.trajectory.push_back({pose, action, skip, collided});
        if (next_pose.x != pose.x || next_pose.y != pose.y) result.path_length += kStepMeters;

        if (auto stamped = trap.on_step(st.map, pose, collided)) {
            (void)stamped;
            const auto t0 = Clock::now();
            st.d_goal = goal_field(st.map, agent, pose, st.goal);
            st.waypoint.reset();
            result.timings.goal_select += seconds_since(t0);
        }

        if (action == Action::Stop) stopped = true;
        st.last_action = action;
        st.depth_prev = depth;
        st.prev_pose = pose;
        pose = next_pose;
    }

    const int fr = world.cell_row(pose.y), fc = world.cell_col(pose.x);
    result.final_geodesic = target_field[static_cast<std::size_t>(fr) * world.w + fc];
    result.success = stopped && result.final_geodesic <= spec.success_radius;
    if (agent.keep_final_map) result.final_map = std::move(st.map);
    return result;
}

std::vector<EpisodeSpec> build_suite(const SuiteConfig& cfg, std::vector<Floorplan>& worlds_out) {
    std::vector<EpisodeSpec> specs;
    worlds_out.clear();
    for (int i = 0; i < cfg.episodes; ++i) {
        std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(i);
        for (int attempt = 0;; ++attempt) {
            if (attempt > 64)
                throw std::runtime_error("build_suite: cannot find a feasible episode for index " +
                                         std::to_string(i));
            WorldConfig wc = cfg.world;
            wc.seed = seed;
            Floorplan world;
            try {
                world = generate_world(wc);
            } catch (const std::exception&) {
                seed += 0x10000ULL;
                continue;
            }
            Rng rng(seed ^ 0x657069ULL);
            bool placed = false;
            EpisodeSpec spec;
            for (int draw = 0; draw < 32 && !placed; ++draw) {
                const auto& cand = world.spawn_candidates[rng.index(world.spawn_candidates.size())];
                spec.world_seed = seed;
                spec.start.x = (cand[1] + 0.5) * world.resolution;
                spec.start.y = (cand[0] + 0.5) * world.resolution;
                spec.start.theta_deg = kTurnDeg * rng.uniform_int(0, 11);
                spec.target_category = rng.uniform_int(1, world.targets);
                spec.max_steps = cfg.max_steps;
                spec.success_radius = cfg.success_radius;
                const auto field = target_distance_field(world, spec.target_category);
                const double d0 = field[static_cast<std::size_t>(cand[0]) * world.w + cand[1]];
                if (std::isfinite(d0) && d0 > std::max(cfg.success_radius, cfg.min_start_distance))
                    placed = true;
            }
            if (placed) {
                specs.push_back(spec);
                worlds_out.push_back(std::move(world));
                break;
            }
            seed += 0x10000ULL;
        }
    }
    return specs;
}

std::vector<EpisodeResult> run_suite(const std::vector<Floorplan>& worlds,
                                     const std::vector<EpisodeSpec>& specs, const AgentConfig& agent,
                                     int jobs) {
    if (worlds.size() != specs.size()) throw std::invalid_argument("run_suite: worlds/specs size mismatch");
    std::vector<EpisodeResult> results(specs.size());
    if (jobs <= 1) {
        for (std::size_t i = 0; i < specs.size(); ++i) results[i] = run_episode(worlds[i], specs[i], agent);
        return results;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            results[i] = run_episode(worlds[i], specs[i], agent);
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    return results;
}

double spl(const std::vector<EpisodeResult>& results) {
    if (results.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : results) {
        if (!r.success) continue;
        sum += r.shortest_length / std::max(r.path_length, r.shortest_length);
    }
    return sum / static_cast<double>(results.size());
}

double soft_spl(const std::vector<EpisodeResult>& results) {
    if (results.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& r : results) {
        if (r.initial_geodesic <= 0) continue;
        const double progress = std::clamp(1.0 - r.final_geodesic / r.initial_geodesic, 0.0, 1.0);
        sum += progress * r.shortest_length / std::max(r.path_length, r.shortest_length);
    }
    return sum / static_cast<double>(results.size());
}

double skip_ratio(const EpisodeResult& result) {
    if (result.steps <= 0) throw std::invalid_argument("skip_ratio: episode has no steps");
    return static_cast<double>(result.skip_lossless + result.skip_revisit + result.skip_forward) /
           static_cast<double>(result.steps);
}

SuiteMetrics aggregate(const std::vector<EpisodeResult>& results) {
    SuiteMetrics m;
    m.episodes = static_cast<int>(results.size());
    if (results.empty()) return m;
    long total_steps = 0;
    std::uint64_t total_flops = 0;
    for (const auto& r : results) {
        m.sr += r.success ? 1.0 : 0.0;
        m.mean_skip_ratio += skip_ratio(r);
        total_steps += r.steps;
        total_flops += r.flops_total;
        m.mean_timings.mapping += r.timings.mapping;
        m.mean_timings.skip_classify += r.timings.skip_classify;
        m.mean_timings.predict += r.timings.predict;
        m.mean_timings.goal_select += r.timings.goal_select;
        m.mean_timings.local_plan += r.timings.local_plan;
        m.mean_timings.mapping_calls += r.timings.mapping_calls;
        m.mean_timings.predict_calls += r.timings.predict_calls;
        m.mean_timings.judge_time += r.timings.judge_time;
        m.mean_timings.judge_calls += r.timings.judge_calls;
    }
    m.sr /= results.size();
    m.mean_skip_ratio /= results.size();
    m.spl = spl(results);
    m.soft_spl = soft_spl(results);
    if (total_steps > 0) {
        m.mean_flops_per_step = static_cast<double>(total_flops) / static_cast<double>(total_steps);
        const double inv = 1.0 / static_cast<double>(total_steps);
        m.mean_step_seconds = (m.mean_timings.mapping + m.mean_timings.skip_classify + m.mean_timings.predict +
                               m.mean_timings.goal_select + m.mean_timings.local_plan) *
                              inv;
        m.mean_timings.mapping *= inv;
        m.mean_timings.skip_classify *= inv;
        m.mean_timings.predict *= inv;
        m.mean_timings.goal_select *= inv;
        m.mean_timings.local_plan *= inv;
    }
    return m;
}

std::vector<ProfileRow> profile(const std::vector<VariantResult>& variants) {
    if (variants.size() < 2) throw std::invalid_argument("profile: need at least two variants");
    for (const auto& v : variants)
        if (v.metrics.episodes != variants[0].metrics.episodes)
            throw std::invalid_argument("profile: episode sets differ");
    const auto& base = variants[0];
    auto ratio = [](double v, double b) { return b != 0.0 ? v / b : 1.0; };
    std::vector<ProfileRow> rows;
    for (const auto& v : variants) {
        ProfileRow row;
        row.name = v.name;
        row.metrics = v.metrics;
        row.logical_memory_bytes = v.logical_memory_bytes;
        row.rel_spl = ratio(v.metrics.spl, base.metrics.spl);
        row.rel_soft_spl = ratio(v.metrics.soft_spl, base.metrics.soft_spl);
        row.rel_step_time = ratio(v.metrics.mean_step_seconds, base.metrics.mean_step_seconds);
        row.rel_mapping_time = ratio(v.metrics.mean_timings.mapping, base.metrics.mean_timings.mapping);
        row.rel_flops = ratio(v.metrics.mean_flops_per_step, base.metrics.mean_flops_per_step);
        row.rel_memory = ratio(static_cast<double>(v.logical_memory_bytes),
                               static_cast<double>(base.logical_memory_bytes));
        rows.push_back(row);
    }
    return rows;
}

std::uint64_t logical_memory_bytes(const AgentConfig& agent) {
    std::uint64_t bytes = 4ULL * (4 + agent.map.categories) * agent.map.height * agent.map.width;
    if (agent.judge) {
        std::uint64_t nodes = 0;
        for (const auto& t : agent.judge->trees) nodes += t.nodes.size();
        bytes += nodes * 24ULL;  // feature, threshold, children, label
    }
    if (agent.net) bytes += agent.net->count_memory().total();
    return bytes;
}

void explore_episode(const Floorplan& world, const Pose& start, const AgentConfig& agent, int max_steps,
                     const std::function<void(const DepthScan&, const DepthScan&, double)>& on_forward,
                     const std::function<void(const SemanticMap&, int)>& on_snapshot, int snapshot_every) {
    EpisodeState st;
    st.map = SemanticMap(agent.map);
    Rng noise_rng(0x6578706cULL);
    TrapHandler trap(agent.planner.trap_patience);

    Pose pose = start;
    DepthScan depth;
    SemanticScan sem;

    for (int t = 0; t < max_steps; ++t) {
        observe(world, pose, agent.sensor, depth, sem, &noise_rng);
        scan_to_local(depth, sem, agent.sensor, st.map.resolution, agent.map.categories, st.local);
        const double delta = integrate(st.map, st.local, pose);
        if (st.last_action && *st.last_action == Action::MoveForward && st.depth_prev && on_forward)
            on_forward(depth, *st.depth_prev, delta);
        if (on_snapshot && snapshot_every > 0 && t % snapshot_every == 0) on_snapshot(st.map, t);

        if (t % agent.goal_interval == 0 || !st.d_goal) {
            // Frontier goal: nearest explored free cell bordering unexplored
            // space.
            const int ar = st.map.cell_row(pose.y), ac = st.map.cell_col(pose.x);
            std::vector<std::uint8_t> trav = traversible_from_map(st.map, agent.planner.obstacle_dilation, pose);
            const DistanceField d_agent = fmm(trav, st.map.data.h, st.map.data.w, {{ar, ac}},
                                              st.map.resolution, agent.planner.fmm_exact_init_radius);
            const auto goal = nearest_frontier(st.map, d_agent);
            if (goal[0] < 0) return;  // fully explored
            st.goal = goal;
            st.d_goal = goal_field(st.map, agent, pose, st.goal);
        }

        auto wp = extract_waypoint(*st.d_goal, pose, agent.planner.step_meters, st.map.origin_x,
                                   st.map.origin_y);
        const bool at_waypoint = wp && std::abs((*wp)[0] - pose.x) < st.map.resolution &&
                                 std::abs((*wp)[1] - pose.y) < st.map.resolution;
        Action action =
            (wp && !at_waypoint) ? waypoint_to_action(pose, (*wp)[0], (*wp)[1]) : Action::TurnLeft;
        const double bearing_err =
            wp ? wrap_deg(std::atan2((*wp)[1] - pose.y, (*wp)[0] - pose.x) * 180.0 / kPi - pose.theta_deg)
               : 0.0;
        if (st.gate_cooldown > 0) {
            --st.gate_cooldown;
        } else if (st.turn_commit != 0) {
            if (!map_forward_blocked(st.map, pose) && std::abs(bearing_err) <= 45.0) {
                action = Action::MoveForward;
                st.turn_commit = 0;
            } else if (++st.commit_steps > 12) {
                st.turn_commit = 0;
                st.gate_cooldown = 4;
            } else {
                action = st.turn_commit > 0 ? Action::TurnLeft : Action::TurnRight;
            }
        } else if (action == Action::MoveForward && map_forward_blocked(st.map, pose)) {
            st.turn_commit = bearing_err >= 0 ? 1 : -1;
            st.commit_steps = 0;
            action = st.turn_commit > 0 ? Action::TurnLeft : Action::TurnRight;
        }
        const auto [next_pose, collided] = step(world, pose, action);
        if (trap.on_step(st.map, pose, collided)) {
            st.d_goal = goal_field(st.map, agent, pose, st.goal);
        }
        st.last_action = action;
        st.depth_prev = depth;
        pose = next_pose;
    }
}

SkipDataset harvest(const WorldConfig& world_base, int episodes, std::uint64_t base_seed,
                    const AgentConfig& agent, int max_steps, int n_bins) {
    SkipDataset data;
    data.n_bins = n_bins;
    for (int e = 0; e < episodes; ++e) {
        WorldConfig wc = world_base;
        wc.seed = base_seed + static_cast<std::uint64_t>(e);
        const Floorplan world = generate_world(wc);
        Rng rng(wc.seed ^ 0x686172ULL);
        const auto& cand = world.spawn_candidates[rng.index(world.spawn_candidates.size())];
        Pose start;
        start.x = (cand[1] + 0.5) * world.resolution;
        start.y = (cand[0] + 0.5) * world.resolution;
        start.theta_deg = kTurnDeg * rng.uniform_int(0, 11);

        explore_episode(world, start, agent, max_steps,
                        [&](const DepthScan& d, const DepthScan& d_prev, double l_m) {
                            SkipRow row;
                            const HistogramFeature h = depth_histogram(d, n_bins, d.max_range);
                            const HistogramFeature hp = depth_histogram(d_prev, n_bins, d_prev.max_range);
                            row.features.reserve(2 * n_bins);
                            row.features.insert(row.features.end(), h.bins.begin(), h.bins.end());
                            row.features.insert(row.features.end(), hp.bins.begin(), hp.bins.end());
                            row.l_m = l_m;
                            data.rows.push_back(std::move(row));
                        });
    }
    return data;
}

std::vector<TrainSample> harvest_train_samples(const WorldConfig& world_base, int episodes,
                                               std::uint64_t base_seed, const AgentConfig& agent,
                                               int max_steps, int snapshot_every) {
    std::vector<TrainSample> samples;
    for (int e = 0; e < episodes; ++e) {
        WorldConfig wc = world_base;
        wc.seed = base_seed + static_cast<std::uint64_t>(e);
        const Floorplan world = generate_world(wc);
        const Tensor gt = ground_truth_map(world, agent.map);
        Rng rng(wc.seed ^ 0x686172ULL);
        const auto& cand = world.spawn_candidates[rng.index(world.spawn_candidates.size())];
        Pose start;
        start.x = (cand[1] + 0.5) * world.resolution;
        start.y = (cand[0] + 0.5) * world.resolution;
        start.theta_deg = kTurnDeg * rng.uniform_int(0, 11);

        explore_episode(world, start, agent, max_steps, {},
                        [&](const SemanticMap& m, int) {
                            TrainSample s;
                            s.map = m.data;
                            std::vector<double> explored(m.data.plane());
                            const double* ep = &m.data.v[static_cast<std::size_t>(kChanExplored) * m.data.plane()];
                            for (std::size_t i = 0; i < explored.size(); ++i) explored[i] = ep[i];
                            s.target = masked_targets(gt, explored);
                            samples.push_back(std::move(s));
                        },
                        snapshot_every);
    }
    return samples;
}

}  // namespace scarnav
