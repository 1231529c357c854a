#include "ctnav/traj.hpp"

namespace ctnav {

OccBits OccBits::pack(const std::array<float, kOccCells>& cells) {
    OccBits b;
    for (int i = 0; i < kOccCells; ++i)
        if (cells[static_cast<std::size_t>(i)] != 0.0f) b.set(i);
    return b;
}

void OccBits::unpack(float* out) const {
    for (int i = 0; i < kOccCells; ++i) out[i] = get(i) ? 1.0f : 0.0f;
}

std::vector<int> OccBits::to_rle() const {
    std::vector<int> runs;
    bool cur = false;  // runs alternate starting with zeros
    int count = 0;
    for (int i = 0; i < kOccCells; ++i) {
        if (get(i) == cur) {
            ++count;
        } else {
            runs.push_back(count);
            cur = !cur;
            count = 1;
        }
    }
    runs.push_back(count);
    return runs;
}

OccBits OccBits::from_rle(const std::vector<int>& runs) {
    OccBits b;
    int i = 0;
    bool cur = false;
    for (int run : runs) {
        if (run < 0 || i + run > kOccCells) throw RuntimeFailure("bad occupancy RLE");
        if (cur) {
            for (int k = 0; k < run; ++k) b.set(i + k);
        }
        i += run;
        cur = !cur;
    }
    if (i != kOccCells) throw RuntimeFailure("occupancy RLE does not cover the grid");
    return b;
}

const char* traj_label_name(TrajLabel l) {
    switch (l) {
        case TrajLabel::kPlanner: return "planner";
        case TrajLabel::kFail: return "fail";
        case TrajLabel::kRecovery: return "recovery";
    }
    return "planner";
}

TrajLabel traj_label_from_name(const std::string& name) {
    if (name == "planner") return TrajLabel::kPlanner;
    if (name == "fail") return TrajLabel::kFail;
    if (name == "recovery") return TrajLabel::kRecovery;
    throw ConfigError("unknown trajectory label: " + name);
}

double reward(Point2 x_next, Point2 x_g, bool collided, double c) {
    if (c > 0.0) throw RuntimeFailure("reward: collision penalty must be <= 0");
    return -dist(x_g, x_next) + (collided ? c : 0.0);
}

std::vector<double> compute_rtg(const std::vector<double>& rewards) {
    if (rewards.empty()) throw RuntimeFailure("compute_rtg: empty reward list");
    std::vector<double> rtg(rewards.size());
    double acc = 0.0;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        acc += rewards[i];
        rtg[i] = acc;
    }
    return rtg;
}

void populate_rtg(Trajectory& t) {
    std::vector<double> rewards;
    rewards.reserve(t.size());
    for (const Transition& tr : t.transitions) rewards.push_back(tr.reward);
    const std::vector<double> rtg = compute_rtg(rewards);
    for (std::size_t i = 0; i < t.size(); ++i) t.transitions[i].rtg = rtg[i];
}

}  // namespace ctnav
