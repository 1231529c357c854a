#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ctnav/geom.hpp"
#include "ctnav/json_util.hpp"

namespace ctnav {

// 2D environment: axis-aligned bounds plus axis-aligned box obstacles.
// Immutable after construction; safe to share across rollout workers.
struct World {
    Rect bounds;
    std::vector<Rect> obstacles;
    std::uint64_t seed = 0;

    Json to_json() const;
    static World from_json(const Json& j);
};

struct LidarScan {
    std::vector<double> ranges;  // one per ray, angles uniform over [0, 2pi) in robot frame
    double max_range = 1.0;
};

inline constexpr int kOccGrid = 25;           // cells per side
inline constexpr int kOccCenter = 12;         // robot cell index (both axes)
inline constexpr int kOccCells = kOccGrid * kOccGrid;

// Robot-centered two-channel grid. Channel 0 marks obstacles, channel 1 the
// goal cell when the goal lies inside the window. Grid axes follow the robot
// heading; cell (kOccCenter, kOccCenter) is centered on the robot.
struct OccupancyMap {
    std::array<float, kOccCells> obstacle{};  // values in {0,1}
    std::array<float, kOccCells> goal{};      // at most one nonzero cell
    double window_side = 2.0;
    Pose2 center_pose;

    static int cell_index(int ix, int iy) { return iy * kOccGrid + ix; }
};

struct WorldTemplate {
    Rect bounds;
    int n_obstacles_min = 0;
    int n_obstacles_max = 0;
    double width_min = 0.1;   // obstacle side length range, both axes
    double width_max = 0.3;
    std::vector<Point2> keepout_points;
    double keepout_radius = 0.0;

    Json to_json() const;
    static WorldTemplate from_json(const Json& j);
};

// collision truth ----------------------------------------------------------

// disc of `radius` at p stays inside bounds and clear of every obstacle
bool point_free(const World& w, Point2 p, double radius);

// point_free holds at samples spaced <= step along [a,b], endpoints included
bool segment_free(const World& w, Point2 a, Point2 b, double radius, double step);

// sensing -------------------------------------------------------------------

// ranges to nearest obstacle-or-bounds hit, clamped to max_range
LidarScan raycast(const World& w, const Pose2& pose, int n_rays, double max_range);

// occupancy from ground-truth geometry: cell footprints tested against obstacles
OccupancyMap occupancy_window(const World& w, const Pose2& pose, Point2 goal,
                              double window_side);

// occupancy from a scan: cells containing lidar hit endpoints
OccupancyMap occupancy_window(const LidarScan& scan, const Pose2& pose, Point2 goal,
                              double window_side);

// generation ----------------------------------------------------------------

// deterministic in (template, seed); throws RuntimeFailure when the rejection
// budget is exhausted (over-dense template)
World randomize(const WorldTemplate& tmpl, std::uint64_t seed);

// UTF-8 grid, '#' = wall, '.' = free, one char per cell of size cell_size
World world_from_maze(const std::string& grid_text, double cell_size = 1.0);

}  // namespace ctnav
