#include "ctnav/planner.hpp"

#include <algorithm>
#include <queue>

#include "ctnav/rng.hpp"

namespace ctnav {
namespace {

std::vector<int> reconstruct(const std::vector<int>& pred, int v) {
    std::vector<int> path;
    for (int cur = v; cur != -1; cur = pred[static_cast<std::size_t>(cur)]) path.push_back(cur);
    std::reverse(path.begin(), path.end());
    return path;
}

// candidate path (path to u, then v) against the incumbent path to v
bool candidate_is_lex_smaller(const std::vector<int>& pred, int u, int v) {
    std::vector<int> cand = reconstruct(pred, u);
    cand.push_back(v);
    const std::vector<int> inc = reconstruct(pred, v);
    return std::lexicographical_compare(cand.begin(), cand.end(), inc.begin(), inc.end());
}

}  // namespace

Json PrmConfig::to_json() const {
    return Json{{"n_samples", n_samples},
                {"connect_distance", connect_distance},
                {"sample_step", sample_step},
                {"radius", radius},
                {"seed", seed}};
}

PrmConfig PrmConfig::from_json(const Json& j) {
    PrmConfig c;
    c.n_samples = j.value("n_samples", c.n_samples);
    c.connect_distance = j.value("connect_distance", c.connect_distance);
    c.sample_step = j.value("sample_step", c.sample_step);
    c.radius = j.value("radius", c.radius);
    c.seed = j.value("seed", c.seed);
    if (c.n_samples <= 0) throw ConfigError("prm: n_samples must be positive");
    if (c.connect_distance <= 0.0) throw ConfigError("prm: connect_distance must be positive");
    if (c.sample_step <= 0.0) throw ConfigError("prm: sample_step must be positive");
    return c;
}

Json PrmGraph::to_json() const {
    Json verts = Json::array();
    for (const Point2& v : vertices) verts.push_back(Json::array({v.x, v.y}));
    Json edges = Json::array();
    for (int u = 0; u < size(); ++u) {
        for (const PrmEdge& e : adjacency[static_cast<std::size_t>(u)]) {
            if (e.to > u) edges.push_back(Json::array({u, e.to, e.weight}));
        }
    }
    return Json{{"vertices", verts},
                {"edges", edges},
                {"connect_distance", connect_distance},
                {"radius", radius},
                {"sample_step", sample_step}};
}

PrmGraph PrmGraph::from_json(const Json& j) {
    PrmGraph g;
    for (const Json& v : j.at("vertices"))
        g.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
    g.adjacency.resize(g.vertices.size());
    for (const Json& e : j.at("edges")) {
        const int u = e.at(0).get<int>();
        const int v = e.at(1).get<int>();
        const double w = e.at(2).get<double>();
        if (u < 0 || v < 0 || u >= g.size() || v >= g.size())
            throw ConfigError("graph edge references unknown vertex");
        g.adjacency[static_cast<std::size_t>(u)].push_back({v, w});
        g.adjacency[static_cast<std::size_t>(v)].push_back({u, w});
    }
    for (auto& adj : g.adjacency) {
        std::sort(adj.begin(), adj.end(),
                  [](const PrmEdge& a, const PrmEdge& b) { return a.to < b.to; });
    }
    g.connect_distance = j.value("connect_distance", 0.0);
    g.radius = j.value("radius", 0.0);
    g.sample_step = j.value("sample_step", 0.0);
    return g;
}

PrmGraph build_prm(const World& w, const PrmConfig& cfg) {
    PrmGraph g;
    g.connect_distance = cfg.connect_distance;
    g.radius = cfg.radius;
    g.sample_step = cfg.sample_step;

    Rng rng(derive_seed(cfg.seed, "prm.sample", 0));
    const long budget = 100L * cfg.n_samples;
    long attempts = 0;
    while (g.size() < cfg.n_samples) {
        if (attempts++ >= budget) {
            throw RuntimeFailure(
                "build_prm: rejection budget exhausted; world has too little free space");
        }
        const Point2 p{rng.uniform(w.bounds.x0, w.bounds.x1),
                       rng.uniform(w.bounds.y0, w.bounds.y1)};
        if (point_free(w, p, cfg.radius)) g.vertices.push_back(p);
    }

    g.adjacency.resize(g.vertices.size());
    // validating at radius + step/2 guarantees a clear corridor of the full
    // radius everywhere along the edge, so finer re-sampling cannot refute it
    const double edge_radius = cfg.radius + cfg.sample_step / 2.0;
    for (int i = 0; i < g.size(); ++i) {
        for (int j = i + 1; j < g.size(); ++j) {
            const std::size_t si = static_cast<std::size_t>(i);
            const std::size_t sj = static_cast<std::size_t>(j);
            const double d = dist(g.vertices[si], g.vertices[sj]);
            if (d > cfg.connect_distance) continue;
            if (!segment_free(w, g.vertices[si], g.vertices[sj], edge_radius, cfg.sample_step))
                continue;
            g.adjacency[si].push_back({j, d});
            g.adjacency[sj].push_back({i, d});
        }
    }
    for (auto& adj : g.adjacency) {
        std::sort(adj.begin(), adj.end(),
                  [](const PrmEdge& a, const PrmEdge& b) { return a.to < b.to; });
    }
    return g;
}

int nearest_vertex(const PrmGraph& g, Point2 p) {
    if (g.size() == 0) throw RuntimeFailure("nearest_vertex: graph is empty");
    int best = 0;
    double best_d = dist(g.vertices[0], p);
    for (int i = 1; i < g.size(); ++i) {
        const double d = dist(g.vertices[static_cast<std::size_t>(i)], p);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

std::optional<Plan> shortest_path(const PrmGraph& g, int s, int t) {
    const int n = g.size();
    if (s < 0 || s >= n || t < 0 || t >= n)
        throw RuntimeFailure("shortest_path: vertex id out of range");

    constexpr double kInf = 1e300;
    std::vector<double> dist_to(static_cast<std::size_t>(n), kInf);
    std::vector<int> pred(static_cast<std::size_t>(n), -1);
    dist_to[static_cast<std::size_t>(s)] = 0.0;

    using Entry = std::pair<double, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
    heap.push({0.0, s});
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist_to[static_cast<std::size_t>(u)]) continue;
        for (const PrmEdge& e : g.adjacency[static_cast<std::size_t>(u)]) {
            const double nd = d + e.weight;
            const std::size_t v = static_cast<std::size_t>(e.to);
            if (nd < dist_to[v]) {
                dist_to[v] = nd;
                pred[v] = u;
                heap.push({nd, e.to});
            } else if (nd == dist_to[v] && candidate_is_lex_smaller(pred, u, e.to)) {
                // equal cost, lexicographically smaller route; re-relax so the
                // improvement propagates downstream
                pred[v] = u;
                heap.push({nd, e.to});
            }
        }
    }

    if (dist_to[static_cast<std::size_t>(t)] >= kInf) return std::nullopt;
    Plan plan;
    plan.cost = dist_to[static_cast<std::size_t>(t)];
    for (int id : reconstruct(pred, t))
        plan.waypoints.push_back(g.vertices[static_cast<std::size_t>(id)]);
    return plan;
}

Point2 advance_plan(Plan& plan, Point2 x, double reach_eps) {
    if (plan.empty()) throw RuntimeFailure("advance_plan: plan is empty");
    while (!plan.at_last() && dist(plan.waypoints[plan.cursor], x) < reach_eps) {
        ++plan.cursor;
    }
    return plan.waypoints[plan.cursor];
}

std::optional<Plan> plan_route(const PrmGraph& g, Point2 start, Point2 goal) {
    const int vs = nearest_vertex(g, start);
    const int vt = nearest_vertex(g, goal);
    std::optional<Plan> plan = shortest_path(g, vs, vt);
    if (!plan) return std::nullopt;
    const Point2 last = plan->waypoints.back();
    if (last.x != goal.x || last.y != goal.y) {
        plan->cost += dist(last, goal);
        plan->waypoints.push_back(goal);
    }
    return plan;
}

}  // namespace ctnav
