#include "scarnav/mapping.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace scarnav {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Mark a patch cell and remember the first touch.
inline void touch(LocalMap& local, int r, int c) {
    bool any = false;
    for (int ch = 0; ch < local.data.c && !any; ++ch) any = local.data.at(ch, r, c) != 0.0;
    if (!any) local.touched.push_back({r, c});
}

}  // namespace

void scan_to_local(const DepthScan& depth, const SemanticScan& sem, const SensorConfig& sensor,
                   double map_resolution, int categories, LocalMap& local) {
    if (depth.ranges.empty()) throw std::invalid_argument("scan_to_local: empty scan");
    if (depth.ranges.size() != sem.labels.size())
        throw std::invalid_argument("scan_to_local: depth/semantic length mismatch");

    const int radius = static_cast<int>(std::ceil(sensor.max_range / map_resolution)) + 1;
    local.reset(4 + categories, radius);

    const int P = local.radius_cells;
    const double center = P + 0.5;  // ray origin in cell units

    // Agent's own cell is observed free.
    touch(local, P, P);
    local.data.at(kChanExplored, P, P) = 1.0;

    const int rays = static_cast<int>(depth.ranges.size());
    for (int i = 0; i < rays; ++i) {
        const double rel = rays == 1 ? 0.0 : -sensor.fov_deg / 2.0 + i * sensor.fov_deg / (rays - 1);
        // Ego frame: +y forward, +x right of heading.
        const double dx = -std::sin(deg_to_rad(rel));
        const double dy = std::cos(deg_to_rad(rel));
        const double range = std::min(depth.ranges[i], sensor.max_range);
        const double t_hit = range / map_resolution;
        const bool hit = depth.ranges[i] < sensor.max_range && sem.labels[i] != 0;

        int cc = P, cr = P;
        int last_r = P, last_c = P;
        bool left_patch = false;
        const int step_c = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
        const int step_r = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
        const double inv_dx = dx != 0 ? 1.0 / std::abs(dx) : kInf;
        const double inv_dy = dy != 0 ? 1.0 / std::abs(dy) : kInf;
        double t_max_x = dx > 0 ? (cc + 1 - center) * inv_dx : (dx < 0 ? (center - cc) * inv_dx : kInf);
        double t_max_y = dy > 0 ? (cr + 1 - center) * inv_dy : (dy < 0 ? (center - cr) * inv_dy : kInf);
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
            if (t > t_hit + 1e-12) break;  // ray ends inside the last cell
            if (cr < 0 || cr >= local.data.h || cc < 0 || cc >= local.data.w) {
                left_patch = true;
                break;
            }
            touch(local, cr, cc);
            local.data.at(kChanExplored, cr, cc) = 1.0;
            last_r = cr;
            last_c = cc;
        }
        if (hit && !left_patch) {
            local.data.at(kChanObstacle, last_r, last_c) = 1.0;
            const int cat = sem.labels[i];
            if (cat >= 1 && cat <= local.data.c - 4)
                local.data.at(kCategoryChanBase + cat - 1, last_r, last_c) = 1.0;
        }
    }
}

LocalMap scan_to_local(const DepthScan& depth, const SemanticScan& sem, const SensorConfig& sensor,
                       double map_resolution, int categories) {
    LocalMap local;
    scan_to_local(depth, sem, sensor, map_resolution, categories, local);
    return local;
}

double integrate(SemanticMap& map, const LocalMap& local, const Pose& pose, long* dropped_cells) {
    const int ar = map.cell_row(pose.y);
    const int ac = map.cell_col(pose.x);
    if (!map.in_bounds(ar, ac)) throw std::invalid_argument("integrate: pose outside map bounds");
    if (local.data.c != map.data.c) throw std::invalid_argument("integrate: channel count mismatch");

    const double fx = heading_cos(pose.theta_deg), fy = heading_sin(pose.theta_deg);
    const double rx = fy, ry = -fx;  // right of heading
    const int P = local.radius_cells;
    const double res = map.resolution;

    double delta = 0.0;
    long dropped = 0;
    for (const auto& [pr, pc] : local.touched) {
        const double ex = (pc - P) * res;
        const double ey = (pr - P) * res;
        const double wx = pose.x + ex * rx + ey * fx;
        const double wy = pose.y + ex * ry + ey * fy;
        const int mr = map.cell_row(wy);
        const int mc = map.cell_col(wx);
        if (!map.in_bounds(mr, mc)) {
            ++dropped;
            continue;
        }
        for (int ch = 0; ch < map.data.c; ++ch) {
            if (ch == kChanAgent || ch == kChanVisited) continue;
            const double lv = local.data.at(ch, pr, pc);
            if (lv == 0.0) continue;
            double& mv = map.data.at(ch, mr, mc);
            if (lv > mv) {
                delta += lv - mv;
                mv = lv;
            }
        }
    }
    if (dropped_cells) *dropped_cells += dropped;

    // Visited trail: permanent mark at the pose cell.
    {
        double& visited = map.data.at(kChanVisited, ar, ac);
        if (visited < 1.0) {
            delta += 1.0 - visited;
            visited = 1.0;
        }
    }
    update_agent_channels(map, pose);
    return delta;
}

void update_agent_channels(SemanticMap& map, const Pose& pose) {
    const int ar = map.cell_row(pose.y);
    const int ac = map.cell_col(pose.x);
    double* agent = &map.data.v[map.data.idx(kChanAgent, 0, 0)];
    std::memset(agent, 0, map.data.plane() * sizeof(double));
    if (map.in_bounds(ar, ac)) {
        map.data.at(kChanAgent, ar, ac) = 1.0;
        map.data.at(kChanVisited, ar, ac) = 1.0;
    }
}

double map_l1(const SemanticMap& m, const SemanticMap& m_prev) {
    if (!m.data.same_shape(m_prev.data)) throw std::invalid_argument("map_l1: shape mismatch");
    double sum = 0.0;
    const std::size_t plane = m.data.plane();
    for (int ch = 0; ch < m.data.c; ++ch) {
        if (ch == kChanAgent) continue;
        const double* a = &m.data.v[ch * plane];
        const double* b = &m_prev.data.v[ch * plane];
        for (std::size_t i = 0; i < plane; ++i) sum += std::abs(a[i] - b[i]);
    }
    return sum;
}

double map_active_fraction(const SemanticMap& m) {
    const std::size_t plane = m.data.plane();
    std::size_t active = 0;
    for (std::size_t i = 0; i < plane; ++i) {
        for (int ch = 0; ch < m.data.c; ++ch) {
            if (m.data.v[ch * plane + i] != 0.0) {
                ++active;
                break;
            }
        }
    }
    return static_cast<double>(active) / static_cast<double>(plane);
}

std::vector<std::uint8_t> map_to_bytes(const SemanticMap& m) {
    nlohmann::json header;
    header["format_version"] = 1;
    header["channels"] = m.data.c;
    header["H"] = m.data.h;
    header["W"] = m.data.w;
    header["resolution"] = m.resolution;
    header["origin"] = {m.origin_x, m.origin_y};
    const std::string hs = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(16 + hs.size() + m.data.size() * 4);
    const char magic[8] = {'S', 'C', 'N', 'V', 'M', 'A', 'P', '0'};
    out.insert(out.end(), magic, magic + 8);
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((hlen >> (8 * i)) & 0xFF));
    out.insert(out.end(), hs.begin(), hs.end());
    for (double d : m.data.v) append_f32_le(out, static_cast<float>(d));
    return out;
}

SemanticMap map_from_bytes(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "SCNVMAP0", 8) != 0)
        throw std::runtime_error("map_from_bytes: bad magic");
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<std::uint32_t>(bytes[8 + i]) << (8 * i);
    if (bytes.size() < 12 + hlen) throw std::runtime_error("map_from_bytes: truncated header");
    const nlohmann::json header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
    SemanticMap m;
    const int c = header.at("channels").get<int>();
    const int h = header.at("H").get<int>();
    const int w = header.at("W").get<int>();
    m.data = Tensor(c, h, w);
    m.resolution = header.at("resolution").get<double>();
    m.origin_x = header.at("origin")[0].get<double>();
    m.origin_y = header.at("origin")[1].get<double>();
    const std::size_t need = 12 + hlen + m.data.size() * 4;
    if (bytes.size() != need) throw std::runtime_error("map_from_bytes: payload size mismatch");
    for (std::size_t i = 0; i < m.data.size(); ++i) m.data.v[i] = read_f32_le(&bytes[12 + hlen + i * 4]);
    return m;
}

}  // namespace scarnav
