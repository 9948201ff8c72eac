#include "replaybench/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace rb {

namespace {

// world [0,1]^2 -> 640x640 pixels, y flipped
double px(double x) { return 20.0 + 600.0 * x; }
double py(double y) { return 620.0 - 600.0 * y; }

std::string timestep_color(double frac) {
    // dark indigo to light gold
    const int r = static_cast<int>(40 + frac * (250 - 40));
    const int g = static_cast<int>(30 + frac * (200 - 30));
    const int b = static_cast<int>(90 + frac * (60 - 90));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

}  // namespace

void emit_traj_svg(const std::vector<Trajectory>& trajs, const TaskSpec& task,
                   const std::string& path) {
    if (trajs.empty()) throw std::invalid_argument("emit_traj_svg: empty trajectory list");
    int l_max = 1;
    for (const Trajectory& t : trajs)
        for (const TrajStep& s : t.steps) l_max = std::max(l_max, s.timestep);

    std::ofstream f(path);
    if (!f) throw std::runtime_error("emit_traj_svg: cannot open " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
         "viewBox=\"0 0 640 640\">\n";
    f << "<rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";

    // goal region and ground-truth path
    const Vec2 goal = task.goal();
    f << "<circle cx=\"" << px(goal[0]) << "\" cy=\"" << py(goal[1]) << "\" r=\""
      << 600.0 * task.success_radius << "\" fill=\"#e8f5e9\" stroke=\"#66bb6a\"/>\n";
    f << "<polyline fill=\"none\" stroke=\"#9e9e9e\" stroke-width=\"3\" points=\"";
    for (const Vec2& w : task.waypoints) f << px(w[0]) << "," << py(w[1]) << " ";
    f << "\"/>\n";
    for (const Vec2& w : task.waypoints)
        f << "<rect x=\"" << px(w[0]) - 4 << "\" y=\"" << py(w[1]) - 4
          << "\" width=\"8\" height=\"8\" fill=\"#616161\"/>\n";

    for (const Trajectory& t : trajs) {
        for (const TrajStep& s : t.steps) {
            const double frac = l_max > 1 ? (s.timestep - 1.0) / (l_max - 1.0) : 0.0;
            f << "<circle cx=\"" << px(s.state[0]) << "\" cy=\"" << py(s.state[1])
              << "\" r=\"2.5\" fill=\"" << timestep_color(frac) << "\" fill-opacity=\"0.7\"/>\n";
        }
    }
    f << "</svg>\n";
    if (!f) throw std::runtime_error("emit_traj_svg: write failed for " + path);
}

}  // namespace rb
