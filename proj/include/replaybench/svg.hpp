#pragma once

#include <string>
#include <vector>

#include "replaybench/env.hpp"

namespace rb {

// Overlay of the ground-truth path and a set of trajectories, points colored
// from dark to light by trajectory timestep.
void emit_traj_svg(const std::vector<Trajectory>& trajs, const TaskSpec& task,
                   const std::string& path);

}  // namespace rb
