#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ctnav/world.hpp"

namespace ctnav {

struct PrmConfig {
    int n_samples = 150;
    double connect_distance = 2.0;
    double sample_step = 0.055;   // edge validation spacing
    double radius = 0.19;         // clearance radius for vertices and edges
    std::uint64_t seed = 0;

    Json to_json() const;
    static PrmConfig from_json(const Json& j);
};

struct PrmEdge {
    int to = 0;
    double weight = 0.0;  // Euclidean length
};

// Roadmap over a World. Vertices are constraint-free points; edges connect
// pairs within connect_distance whose straight segment validates collision-free.
struct PrmGraph {
    std::vector<Point2> vertices;
    std::vector<std::vector<PrmEdge>> adjacency;  // symmetric, sorted by target id
    double connect_distance = 0.0;
    double radius = 0.0;
    double sample_step = 0.0;

    int size() const { return static_cast<int>(vertices.size()); }

    Json to_json() const;
    static PrmGraph from_json(const Json& j);
};

// Waypoint sequence from a shortest-path query; cursor marks the first
// unreached waypoint.
struct Plan {
    std::vector<Point2> waypoints;
    std::size_t cursor = 0;
    double cost = 0.0;

    bool empty() const { return waypoints.empty(); }
    bool at_last() const { return cursor + 1 >= waypoints.size(); }
};

PrmGraph build_prm(const World& w, const PrmConfig& cfg);

// argmin Euclidean distance, ties broken by lowest vertex index
int nearest_vertex(const PrmGraph& g, Point2 p);

// minimal-weight path; equal-cost ties resolved toward the lexicographically
// smallest vertex-id sequence; nullopt when t is unreachable from s
std::optional<Plan> shortest_path(const PrmGraph& g, int s, int t);

// advances the cursor past every waypoint within reach_eps of x (the final
// waypoint is never skipped) and returns the current target
Point2 advance_plan(Plan& plan, Point2 x, double reach_eps);

// full query: nearest vertices for start/goal, path between them, goal appended
// when it is not already the final waypoint
std::optional<Plan> plan_route(const PrmGraph& g, Point2 start, Point2 goal);

}  // namespace ctnav
