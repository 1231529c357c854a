#include "ctnav/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace ctnav {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary dataset payloads are little-endian");

Json point_json(Point2 p) { return Json::array({p.x, p.y}); }
Point2 point_from(const Json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

constexpr int kOccBytes = (kOccCells + 7) / 8;

void append_f32(std::string& buf, const std::vector<float>& v) {
    const std::size_t off = buf.size();
    buf.resize(off + v.size() * sizeof(float));
    std::memcpy(buf.data() + off, v.data(), v.size() * sizeof(float));
}

void append_u32(std::string& buf, std::uint32_t v) {
    const std::size_t off = buf.size();
    buf.resize(off + sizeof(v));
    std::memcpy(buf.data() + off, &v, sizeof(v));
}

void pack_bits(std::string& buf, const OccBits& bits) {
    for (int byte = 0; byte < kOccBytes; ++byte) {
        unsigned char b = 0;
        for (int k = 0; k < 8; ++k) {
            const int i = byte * 8 + k;
            if (i < kOccCells && bits.get(i)) b |= static_cast<unsigned char>(1u << k);
        }
        buf.push_back(static_cast<char>(b));
    }
}

OccBits unpack_bits(const char* p) {
    OccBits bits;
    for (int byte = 0; byte < kOccBytes; ++byte) {
        const unsigned char b = static_cast<unsigned char>(p[byte]);
        for (int k = 0; k < 8; ++k) {
            const int i = byte * 8 + k;
            if (i < kOccCells && (b >> k) & 1u) bits.set(i);
        }
    }
    return bits;
}

}  // namespace

Json trajectory_to_json(const Trajectory& t) {
    Json j;
    j["format"] = "ctnav.traj.v1";
    j["robot"] = robot_kind_name(t.robot);
    j["label"] = traj_label_name(t.label);
    j["world_seed"] = t.world_seed;
    j["start"] = point_json(t.start);
    j["goal"] = point_json(t.goal);
    j["collided_steps"] = t.collided_steps;
    j["window_side"] = t.window_side;

    Json plan = Json::array();
    for (const Point2& p : t.plan_waypoints) plan.push_back(point_json(p));
    j["plan"] = plan;

    Json poses = Json::array();
    for (const Pose2& p : t.poses) poses.push_back(Json::array({p.x, p.y, p.psi}));
    j["poses"] = poses;

    Json proprio = Json::array();
    Json goal_delta = Json::array();
    Json action = Json::array();
    Json rew = Json::array();
    Json rtg = Json::array();
    Json collided = Json::array();
    Json occ_obstacle = Json::array();
    Json occ_goal = Json::array();
    for (const Transition& tr : t.transitions) {
        proprio.push_back(tr.proprio);
        goal_delta.push_back(point_json(tr.goal_delta));
        action.push_back(tr.action);
        rew.push_back(tr.reward);
        rtg.push_back(tr.rtg);
        collided.push_back(tr.collided ? 1 : 0);
        occ_obstacle.push_back(tr.occ.obstacle.to_rle());
        occ_goal.push_back(tr.occ.goal.to_rle());
    }
    j["proprio"] = proprio;
    j["goal_delta"] = goal_delta;
    j["action"] = action;
    j["reward"] = rew;
    j["rtg"] = rtg;
    j["collided"] = collided;
    j["occ_obstacle"] = occ_obstacle;
    j["occ_goal"] = occ_goal;
    return j;
}

Trajectory trajectory_from_json(const Json& j) {
    if (j.value("format", "") != "ctnav.traj.v1")
        throw RuntimeFailure("unknown trajectory format: " + j.value("format", "<missing>"));
    Trajectory t;
    t.robot = robot_kind_from_name(j.at("robot").get<std::string>());
    t.label = traj_label_from_name(j.at("label").get<std::string>());
    t.world_seed = j.at("world_seed").get<std::uint64_t>();
    t.start = point_from(j.at("start"));
    t.goal = point_from(j.at("goal"));
    t.collided_steps = j.at("collided_steps").get<int>();
    t.window_side = j.at("window_side").get<double>();
    for (const Json& p : j.at("plan")) t.plan_waypoints.push_back(point_from(p));
    for (const Json& p : j.at("poses"))
        t.poses.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});

    const Json& proprio = j.at("proprio");
    const Json& goal_delta = j.at("goal_delta");
    const Json& action = j.at("action");
    const Json& rew = j.at("reward");
    const Json& rtg = j.at("rtg");
    const Json& collided = j.at("collided");
    const Json& occ_obstacle = j.at("occ_obstacle");
    const Json& occ_goal = j.at("occ_goal");
    const std::size_t n = rew.size();
    if (t.poses.size() != n + 1)
        throw RuntimeFailure("trajectory poses must have one more entry than steps");
    for (std::size_t i = 0; i < n; ++i) {
        Transition tr;
        tr.proprio = proprio.at(i).get<std::vector<double>>();
        tr.goal_delta = point_from(goal_delta.at(i));
        tr.action = action.at(i).get<std::vector<double>>();
        tr.reward = rew.at(i).get<double>();
        tr.rtg = rtg.at(i).get<double>();
        tr.collided = collided.at(i).get<int>() != 0;
        tr.occ.obstacle = OccBits::from_rle(occ_obstacle.at(i).get<std::vector<int>>());
        tr.occ.goal = OccBits::from_rle(occ_goal.at(i).get<std::vector<int>>());
        t.transitions.push_back(std::move(tr));
    }
    return t;
}

void save_dataset_jsonl(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write dataset: " + path);
    for (const Trajectory& t : ds.trajectories) out << trajectory_to_json(t).dump() << "\n";
    if (!out) throw RuntimeFailure("dataset write failed: " + path);
}

Dataset load_dataset_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open dataset: " + path);
    Dataset ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ds.trajectories.push_back(trajectory_from_json(Json::parse(line)));
    }
    return ds;
}

void save_dataset_binary(const std::string& bin_path, const std::string& index_path,
                         const Dataset& ds) {
    std::string buf;
    Json index;
    index["format"] = "ctnav.bin.v1";
    Json trajs = Json::array();
    for (const Trajectory& t : ds.trajectories) {
        const std::uint32_t len = static_cast<std::uint32_t>(t.size());
        const std::uint32_t pd =
            len > 0 ? static_cast<std::uint32_t>(t.transitions[0].proprio.size()) : 0;
        const std::uint32_t ad =
            len > 0 ? static_cast<std::uint32_t>(t.transitions[0].action.size()) : 0;
        Json meta;
        meta["offset"] = buf.size();
        meta["len"] = len;
        meta["proprio_dim"] = pd;
        meta["action_dim"] = ad;
        meta["robot"] = robot_kind_name(t.robot);
        meta["label"] = traj_label_name(t.label);
        meta["world_seed"] = t.world_seed;
        meta["start"] = point_json(t.start);
        meta["goal"] = point_json(t.goal);
        meta["collided_steps"] = t.collided_steps;
        meta["window_side"] = t.window_side;
        Json plan = Json::array();
        for (const Point2& p : t.plan_waypoints) plan.push_back(point_json(p));
        meta["plan"] = plan;
        trajs.push_back(meta);

        append_u32(buf, len);
        append_u32(buf, pd);
        append_u32(buf, ad);
        std::vector<float> f;
        for (const Pose2& p : t.poses) {
            f.push_back(static_cast<float>(p.x));
            f.push_back(static_cast<float>(p.y));
            f.push_back(static_cast<float>(p.psi));
        }
        for (const Transition& tr : t.transitions)
            for (double v : tr.proprio) f.push_back(static_cast<float>(v));
        for (const Transition& tr : t.transitions) {
            f.push_back(static_cast<float>(tr.goal_delta.x));
            f.push_back(static_cast<float>(tr.goal_delta.y));
        }
        for (const Transition& tr : t.transitions)
            for (double v : tr.action) f.push_back(static_cast<float>(v));
        for (const Transition& tr : t.transitions) f.push_back(static_cast<float>(tr.reward));
        for (const Transition& tr : t.transitions) f.push_back(static_cast<float>(tr.rtg));
        append_f32(buf, f);
        for (const Transition& tr : t.transitions)
            buf.push_back(tr.collided ? '\1' : '\0');
        for (const Transition& tr : t.transitions) pack_bits(buf, tr.occ.obstacle);
        for (const Transition& tr : t.transitions) pack_bits(buf, tr.occ.goal);
    }
    index["trajectories"] = trajs;

    std::ofstream out(bin_path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot write dataset binary: " + bin_path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw RuntimeFailure("dataset binary write failed: " + bin_path);
    save_json_file(index_path, index);
}

Dataset load_dataset_binary(const std::string& bin_path, const std::string& index_path) {
    const Json index = load_json_file(index_path);
    if (index.value("format", "") != "ctnav.bin.v1")
        throw RuntimeFailure("unknown binary dataset format");
    const std::string buf = read_text_file(bin_path);
    Dataset ds;
    for (const Json& meta : index.at("trajectories")) {
        Trajectory t;
        t.robot = robot_kind_from_name(meta.at("robot").get<std::string>());
        t.label = traj_label_from_name(meta.at("label").get<std::string>());
        t.world_seed = meta.at("world_seed").get<std::uint64_t>();
        t.start = point_from(meta.at("start"));
        t.goal = point_from(meta.at("goal"));
        t.collided_steps = meta.at("collided_steps").get<int>();
        t.window_side = meta.at("window_side").get<double>();
        for (const Json& p : meta.at("plan")) t.plan_waypoints.push_back(point_from(p));

        std::size_t off = meta.at("offset").get<std::size_t>();
        auto read_u32 = [&]() {
            std::uint32_t v;
            std::memcpy(&v, buf.data() + off, sizeof(v));
            off += sizeof(v);
            return v;
        };
        const std::uint32_t len = read_u32();
        const std::uint32_t pd = read_u32();
        const std::uint32_t ad = read_u32();
        auto read_f32 = [&]() {
            float v;
            std::memcpy(&v, buf.data() + off, sizeof(v));
            off += sizeof(v);
            return static_cast<double>(v);
        };
        for (std::uint32_t i = 0; i <= len; ++i) {
            Pose2 p;
            p.x = read_f32();
            p.y = read_f32();
            p.psi = read_f32();
            t.poses.push_back(p);
        }
        t.transitions.resize(len);
        for (std::uint32_t i = 0; i < len; ++i)
            for (std::uint32_t d = 0; d < pd; ++d)
                t.transitions[i].proprio.push_back(read_f32());
        for (std::uint32_t i = 0; i < len; ++i) {
            t.transitions[i].goal_delta.x = read_f32();
            t.transitions[i].goal_delta.y = read_f32();
        }
        for (std::uint32_t i = 0; i < len; ++i)
            for (std::uint32_t d = 0; d < ad; ++d)
                t.transitions[i].action.push_back(read_f32());
        for (std::uint32_t i = 0; i < len; ++i) t.transitions[i].reward = read_f32();
        for (std::uint32_t i = 0; i < len; ++i) t.transitions[i].rtg = read_f32();
        for (std::uint32_t i = 0; i < len; ++i) t.transitions[i].collided = buf[off++] != '\0';
        for (std::uint32_t i = 0; i < len; ++i) {
            t.transitions[i].occ.obstacle = unpack_bits(buf.data() + off);
            off += kOccBytes;
        }
        for (std::uint32_t i = 0; i < len; ++i) {
            t.transitions[i].occ.goal = unpack_bits(buf.data() + off);
            off += kOccBytes;
        }
        ds.trajectories.push_back(std::move(t));
    }
    return ds;
}

}  // namespace ctnav
