#include "ctnav/svg.hpp"

#include <cstdio>
#include <sstream>

namespace ctnav {
namespace {

constexpr double kScale = 100.0;  // pixels per meter

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

}  // namespace

std::string render_trajectory_svg(const ct::RolloutReport& report, const World& w) {
    if (report.path.empty()) throw RuntimeFailure("render: report has no poses");
    const double width = w.bounds.width() * kScale;
    const double height = w.bounds.height() * kScale;
    // svg y grows downward; flip so world +y is up
    const auto px = [&](double x) { return (x - w.bounds.x0) * kScale; };
    const auto py = [&](double y) { return (w.bounds.y1 - y) * kScale; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
        << num(height) << "\" viewBox=\"0 0 " << num(width) << " " << num(height) << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height)
        << "\" fill=\"white\" stroke=\"black\" stroke-width=\"2\"/>\n";
    for (const Rect& r : w.obstacles) {
        out << "<rect class=\"obstacle\" x=\"" << num(px(r.x0)) << "\" y=\"" << num(py(r.y1))
            << "\" width=\"" << num(r.width() * kScale) << "\" height=\""
            << num(r.height() * kScale) << "\" fill=\"#555555\"/>\n";
    }
    out << "<polyline class=\"path\" fill=\"none\" stroke=\""
        << (report.success ? "#2a9d2a" : "#d03030") << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < report.path.size(); ++i) {
        if (i) out << " ";
        out << num(px(report.path[i].x)) << "," << num(py(report.path[i].y));
    }
    out << "\"/>\n";
    const Pose2& start = report.path.front();
    out << "<circle class=\"start\" cx=\"" << num(px(start.x)) << "\" cy=\"" << num(py(start.y))
        << "\" r=\"6\" fill=\"#2060d0\"/>\n";
    // goal marker from the terminal pose offset by the remaining distance is
    // not recoverable; mark the last pose instead
    const Pose2& last = report.path.back();
    out << "<circle class=\"end\" cx=\"" << num(px(last.x)) << "\" cy=\"" << num(py(last.y))
        << "\" r=\"6\" fill=\"none\" stroke=\"#2060d0\" stroke-width=\"2\"/>\n";
    // collision markers: a held pose reads as a zero-length path segment
    int collision_index = 0;
    for (std::size_t i = 0; i + 1 < report.path.size() && collision_index < report.collisions;
         ++i) {
        if (report.path[i + 1].x == report.path[i].x && report.path[i + 1].y == report.path[i].y) {
            out << "<circle class=\"collision\" cx=\"" << num(px(report.path[i].x)) << "\" cy=\""
                << num(py(report.path[i].y)) << "\" r=\"3\" fill=\"#e0a000\"/>\n";
            ++collision_index;
        }
    }
    out << "</svg>\n";
    return out.str();
}

void render_trajectory(const ct::RolloutReport& report, const World& w, const std::string& path) {
    write_text_file(path, render_trajectory_svg(report, w));
}

}  // namespace ctnav
