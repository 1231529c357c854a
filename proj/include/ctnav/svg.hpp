#pragma once

#include <string>

#include "ctnav/ct/rollout.hpp"
#include "ctnav/world.hpp"

namespace ctnav {

// obstacles, start/goal markers, path polyline and collision markers
std::string render_trajectory_svg(const ct::RolloutReport& report, const World& w);

void render_trajectory(const ct::RolloutReport& report, const World& w, const std::string& path);

}  // namespace ctnav
