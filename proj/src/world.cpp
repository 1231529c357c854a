#include "ctnav/world.hpp"

#include <cmath>
#include <sstream>

#include "ctnav/rng.hpp"

namespace ctnav {
namespace {

Rect rect_from_json(const Json& a) {
    if (!a.is_array() || a.size() != 4) throw ConfigError("rect must be [x0,y0,x1,y1]");
    Rect r{a[0].get<double>(), a[1].get<double>(), a[2].get<double>(), a[3].get<double>()};
    if (r.x0 > r.x1 || r.y0 > r.y1) throw ConfigError("rect min corner exceeds max corner");
    return r;
}

Json rect_to_json(const Rect& r) { return Json::array({r.x0, r.y0, r.x1, r.y1}); }

// square of side 2h centered at c, rotated by psi, against an AABB (SAT over
// the two world axes and the two rotated axes)
bool rotated_square_hits_rect(Point2 c, double h, double psi, const Rect& r) {
    const double cs = std::cos(psi);
    const double sn = std::sin(psi);
    const double ext = h * (std::fabs(cs) + std::fabs(sn));

    if (c.x + ext < r.x0 || r.x1 < c.x - ext) return false;
    if (c.y + ext < r.y0 || r.y1 < c.y - ext) return false;

    const Point2 axes[2] = {{cs, sn}, {-sn, cs}};
    for (const Point2& u : axes) {
        const double cu = dot(c, u);
        const double rlo = std::min(u.x * r.x0, u.x * r.x1) + std::min(u.y * r.y0, u.y * r.y1);
        const double rhi = std::max(u.x * r.x0, u.x * r.x1) + std::max(u.y * r.y0, u.y * r.y1);
        if (cu + h < rlo || rhi < cu - h) return false;
    }
    return true;
}

// nearest forward intersection of a ray with an AABB; from inside the box the
// exit distance is returned
bool ray_rect_hit(Point2 o, Point2 d, const Rect& r, bool from_inside, double& t_hit) {
    double tmin = -1e300;
    double tmax = 1e300;
    const double os[2] = {o.x, o.y};
    const double ds[2] = {d.x, d.y};
    const double lo[2] = {r.x0, r.y0};
    const double hi[2] = {r.x1, r.y1};
    for (int k = 0; k < 2; ++k) {
        if (ds[k] == 0.0) {
            if (os[k] < lo[k] || os[k] > hi[k]) return false;
            continue;
        }
        double t0 = (lo[k] - os[k]) / ds[k];
        double t1 = (hi[k] - os[k]) / ds[k];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return false;
    }
    const double t = from_inside ? tmax : (tmin >= 0.0 ? tmin : tmax);
    if (t < 0.0) return false;
    t_hit = t;
    return true;
}

// cell index along one local axis; the center cell spans [-cell/2, cell/2)
int local_to_cell(double v, double cell) {
    return static_cast<int>(std::floor(v / cell + kOccGrid * 0.5));
}

}  // namespace

Json World::to_json() const {
    Json obs = Json::array();
    for (const Rect& r : obstacles) obs.push_back(rect_to_json(r));
    return Json{{"bounds", rect_to_json(bounds)}, {"obstacles", obs},
                {"seed", seed}};
}

World World::from_json(const Json& j) {
    World w;
    w.bounds = rect_from_json(j.at("bounds"));
    for (const Json& o : j.at("obstacles")) w.obstacles.push_back(rect_from_json(o));
    w.seed = j.value("seed", 0ull);
    for (const Rect& r : w.obstacles) {
        if (!r.intersects(w.bounds)) throw ConfigError("obstacle outside world bounds");
    }
    return w;
}

Json WorldTemplate::to_json() const {
    Json kp = Json::array();
    for (const Point2& p : keepout_points) kp.push_back(Json::array({p.x, p.y}));
    return Json{{"bounds", rect_to_json(bounds)},
                {"n_obstacles", Json::array({n_obstacles_min, n_obstacles_max})},
                {"width", Json::array({width_min, width_max})},
                {"keepout_points", kp},
                {"keepout_radius", keepout_radius}};
}

WorldTemplate WorldTemplate::from_json(const Json& j) {
    WorldTemplate t;
    t.bounds = rect_from_json(j.at("bounds"));
    t.n_obstacles_min = j.at("n_obstacles").at(0).get<int>();
    t.n_obstacles_max = j.at("n_obstacles").at(1).get<int>();
    t.width_min = j.at("width").at(0).get<double>();
    t.width_max = j.at("width").at(1).get<double>();
    if (j.contains("keepout_points")) {
        for (const Json& p : j["keepout_points"])
            t.keepout_points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    t.keepout_radius = j.value("keepout_radius", 0.0);
    if (t.n_obstacles_min < 0 || t.n_obstacles_max < t.n_obstacles_min)
        throw ConfigError("bad obstacle count range");
    if (t.width_min <= 0.0 || t.width_max < t.width_min)
        throw ConfigError("bad obstacle width range");
    return t;
}

bool point_free(const World& w, Point2 p, double radius) {
    if (p.x - radius < w.bounds.x0 || p.x + radius > w.bounds.x1 ||
        p.y - radius < w.bounds.y0 || p.y + radius > w.bounds.y1) {
        return false;
    }
    for (const Rect& r : w.obstacles) {
        if (disc_hits_rect(r, p, radius)) return false;
    }
    return true;
}

bool segment_free(const World& w, Point2 a, Point2 b, double radius, double step) {
    if (step <= 0.0) throw RuntimeFailure("segment_free: step must be positive");
    // canonical direction so the result is exactly symmetric in (a, b)
    if (b.x < a.x || (b.x == a.x && b.y < a.y)) std::swap(a, b);
    const double len = dist(a, b);
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 0; i <= n; ++i) {
        const double t = static_cast<double>(i) / n;
        if (!point_free(w, {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t}, radius))
            return false;
    }
    return true;
}

LidarScan raycast(const World& w, const Pose2& pose, int n_rays, double max_range) {
    if (n_rays <= 0) throw RuntimeFailure("raycast: n_rays must be positive");
    if (max_range <= 0.0) throw RuntimeFailure("raycast: max_range must be positive");
    LidarScan scan;
    scan.max_range = max_range;
    scan.ranges.resize(static_cast<std::size_t>(n_rays));
    const Point2 origin{pose.x, pose.y};
    for (int k = 0; k < n_rays; ++k) {
        const double ang = pose.psi + 2.0 * kPi * k / n_rays;
        const Point2 dir{std::cos(ang), std::sin(ang)};
        double best = max_range;
        double t = 0.0;
        if (ray_rect_hit(origin, dir, w.bounds, /*from_inside=*/true, t)) {
            best = std::min(best, t);
        }
        for (const Rect& r : w.obstacles) {
            if (ray_rect_hit(origin, dir, r, /*from_inside=*/false, t)) {
                best = std::min(best, t);
            }
        }
        scan.ranges[static_cast<std::size_t>(k)] = best;
    }
    return scan;
}

OccupancyMap occupancy_window(const World& w, const Pose2& pose, Point2 goal,
                              double window_side) {
    if (window_side <= 0.0) throw RuntimeFailure("occupancy_window: window_side must be positive");
    OccupancyMap m;
    m.window_side = window_side;
    m.center_pose = pose;
    const double cell = window_side / kOccGrid;
    const double h = 0.5 * cell;
    const double cs = std::cos(pose.psi);
    const double sn = std::sin(pose.psi);
    for (int iy = 0; iy < kOccGrid; ++iy) {
        for (int ix = 0; ix < kOccGrid; ++ix) {
            const double lx = (ix - kOccCenter) * cell;
            const double ly = (iy - kOccCenter) * cell;
            const Point2 c{pose.x + cs * lx - sn * ly, pose.y + sn * lx + cs * ly};
            for (const Rect& r : w.obstacles) {
                if (rotated_square_hits_rect(c, h, pose.psi, r)) {
                    m.obstacle[static_cast<std::size_t>(OccupancyMap::cell_index(ix, iy))] = 1.0f;
                    break;
                }
            }
        }
    }
    // goal channel in the robot frame
    const Point2 d = goal - Point2{pose.x, pose.y};
    const double gx = cs * d.x + sn * d.y;
    const double gy = -sn * d.x + cs * d.y;
    const int ix = local_to_cell(gx, cell);
    const int iy = local_to_cell(gy, cell);
    if (ix >= 0 && ix < kOccGrid && iy >= 0 && iy < kOccGrid) {
        m.goal[static_cast<std::size_t>(OccupancyMap::cell_index(ix, iy))] = 1.0f;
    }
    return m;
}

OccupancyMap occupancy_window(const LidarScan& scan, const Pose2& pose, Point2 goal,
                              double window_side) {
    if (window_side <= 0.0) throw RuntimeFailure("occupancy_window: window_side must be positive");
    OccupancyMap m;
    m.window_side = window_side;
    m.center_pose = pose;
    const double cell = window_side / kOccGrid;
    const int n = static_cast<int>(scan.ranges.size());
    for (int k = 0; k < n; ++k) {
        const double r = scan.ranges[static_cast<std::size_t>(k)];
        if (r >= scan.max_range) continue;  // no hit on this ray
        const double a = 2.0 * kPi * k / n;  // ray angle in the robot frame
        const double lx = r * std::cos(a);
        const double ly = r * std::sin(a);
        const int ix = local_to_cell(lx, cell);
        const int iy = local_to_cell(ly, cell);
        if (ix >= 0 && ix < kOccGrid && iy >= 0 && iy < kOccGrid) {
            m.obstacle[static_cast<std::size_t>(OccupancyMap::cell_index(ix, iy))] = 1.0f;
        }
    }
    const Point2 d = goal - Point2{pose.x, pose.y};
    const double cs = std::cos(pose.psi);
    const double sn = std::sin(pose.psi);
    const double gx = cs * d.x + sn * d.y;
    const double gy = -sn * d.x + cs * d.y;
    const int ix = local_to_cell(gx, cell);
    const int iy = local_to_cell(gy, cell);
    if (ix >= 0 && ix < kOccGrid && iy >= 0 && iy < kOccGrid) {
        m.goal[static_cast<std::size_t>(OccupancyMap::cell_index(ix, iy))] = 1.0f;
    }
    return m;
}

World randomize(const WorldTemplate& tmpl, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "world.randomize", 0));
    World w;
    w.bounds = tmpl.bounds;
    w.seed = seed;
    const int count =
        static_cast<int>(rng.uniform_int(tmpl.n_obstacles_min, tmpl.n_obstacles_max));
    const int budget_per_obstacle = 100;
    for (int i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < budget_per_obstacle; ++attempt) {
            const double ww = rng.uniform(tmpl.width_min, tmpl.width_max);
            const double hh = rng.uniform(tmpl.width_min, tmpl.width_max);
            if (ww > tmpl.bounds.width() || hh > tmpl.bounds.height()) continue;
            const double cx = rng.uniform(tmpl.bounds.x0 + ww * 0.5, tmpl.bounds.x1 - ww * 0.5);
            const double cy = rng.uniform(tmpl.bounds.y0 + hh * 0.5, tmpl.bounds.y1 - hh * 0.5);
            const Rect r{cx - ww * 0.5, cy - hh * 0.5, cx + ww * 0.5, cy + hh * 0.5};
            bool ok = true;
            for (const Point2& kp : tmpl.keepout_points) {
                if (disc_hits_rect(r, kp, tmpl.keepout_radius)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            w.obstacles.push_back(r);
            placed = true;
            break;
        }
        if (!placed) {
            throw RuntimeFailure(
                "randomize: rejection budget exhausted; template too dense for its keep-outs");
        }
    }
    return w;
}

World world_from_maze(const std::string& grid_text, double cell_size) {
    std::vector<std::string> rows;
    std::istringstream in(grid_text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.eof()) break;
        rows.push_back(line);
    }
    while (!rows.empty() && rows.back().empty()) rows.pop_back();
    if (rows.empty()) throw ConfigError("maze grid is empty");
    const std::size_t width = rows.front().size();
    for (const std::string& r : rows) {
        if (r.size() != width) throw ConfigError("maze grid rows must have equal length");
        for (char c : r) {
            if (c != '#' && c != '.') throw ConfigError("maze grid may contain only '#' and '.'");
        }
    }
    const int nrows = static_cast<int>(rows.size());
    const int ncols = static_cast<int>(width);
    World w;
    w.bounds = Rect{0.0, 0.0, ncols * cell_size, nrows * cell_size};
    // first text line is the top row; merge horizontal wall runs into one box
    for (int r = 0; r < nrows; ++r) {
        const double y1 = (nrows - r) * cell_size;
        const double y0 = y1 - cell_size;
        int c = 0;
        while (c < ncols) {
            if (rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] != '#') {
                ++c;
                continue;
            }
            int c2 = c;
            while (c2 + 1 < ncols &&
                   rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c2 + 1)] == '#') {
                ++c2;
            }
            w.obstacles.push_back(Rect{c * cell_size, y0, (c2 + 1) * cell_size, y1});
            c = c2 + 1;
        }
    }
    return w;
}

}  // namespace ctnav
