#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ctnav/eval.hpp"
#include "ctnav/svg.hpp"

using namespace ctnav;

namespace {

// light well-formedness check: tags balance and attributes are quoted
bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '<') {
            ++i;
            continue;
        }
        const std::size_t end = text.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        bool closing = tag[0] == '/';
        bool self_closing = tag.back() == '/';
        std::string name = tag.substr(closing ? 1 : 0);
        const std::size_t sp = name.find_first_of(" \t\n/");
        if (sp != std::string::npos) name = name.substr(0, sp);
        if (name.empty()) return false;
        // quotes must balance inside the tag
        if (std::count(tag.begin(), tag.end(), '"') % 2 != 0) return false;
        if (closing) {
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else if (!self_closing) {
            stack.push_back(name);
        }
    }
    return stack.empty();
}

int count_occurrences(const std::string& text, const std::string& needle) {
    int n = 0;
    std::size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

WorldTemplate open_template() {
    WorldTemplate t;
    t.bounds = {0.0, 0.0, 4.5, 4.5};
    t.n_obstacles_min = t.n_obstacles_max = 0;
    return t;
}

EvalProtocol small_protocol(std::uint64_t seed) {
    EvalProtocol p;
    p.n_envs = 2;
    p.goals_per_env = 3;
    p.seed = seed;
    p.prm.n_samples = 50;
    p.prm.connect_distance = 2.0;
    p.prm.radius = 0.19;
    return p;
}

ct::ControlTransformer tiny_model(std::uint64_t seed) {
    ct::CtConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.embed_dim = 16;
    cfg.proprio_dim = 2;
    cfg.action_scale = {0.22, 2.84};
    return ct::ControlTransformer::init(cfg, seed);
}

}  // namespace

TEST_CASE("scripted planner-guided controller achieves 100% in open worlds") {
    const EnvSpec env;
    const EvalProtocol protocol = small_protocol(5);
    const std::vector<World> worlds = make_eval_worlds(open_template(), protocol.n_envs, 5);
    const std::vector<EvalEpisode> episodes = sample_eval_episodes(protocol, worlds);
    REQUIRE(static_cast<int>(episodes.size()) == protocol.n_envs * protocol.goals_per_env);

    int successes = 0;
    for (const EvalEpisode& ep : episodes) {
        PrmConfig pc = protocol.prm;
        pc.seed = derive_seed(protocol.seed, "eval.prm", static_cast<std::uint64_t>(ep.world_index));
        const PrmGraph prm = build_prm(worlds[static_cast<std::size_t>(ep.world_index)], pc);
        const ct::RolloutReport rep = scripted_controller_rollout(
            env, worlds[static_cast<std::size_t>(ep.world_index)], prm, ep.start, ep.goal, 0.15,
            {}, ep.heading_seed);
        successes += rep.success;
    }
    CHECK(successes == static_cast<int>(episodes.size()));
}

TEST_CASE("no-op policy scores zero and paired evaluation is deterministic") {
    const EnvSpec env;
    const EvalProtocol protocol = small_protocol(9);
    const std::vector<World> worlds = make_eval_worlds(open_template(), protocol.n_envs, 9);

    ct::ControlTransformer model = tiny_model(3);
    ct::ConditionedPolicy noop;
    noop.model = &model;
    noop.action_override = [](const ct::WindowBatch&) {
        return std::vector<double>{0.0, 0.0};
    };

    EvalMethod method;
    method.name = "noop";
    method.seeds = {noop, noop};

    const EvalResult a = run_eval(protocol, env, worlds, {method});
    REQUIRE(a.summary.methods.size() == 1);
    CHECK(a.summary.methods[0].mean_success == 0.0);
    CHECK(a.summary.methods[0].stderr_success == 0.0);
    // sitting still accrues -dist(start, goal) every step
    CHECK(a.summary.methods[0].mean_return < -0.5 * env.horizon);

    const EvalResult b = run_eval(protocol, env, worlds, {method});
    CHECK(a.summary.to_json().dump() == b.summary.to_json().dump());

    // every method/seed saw the same episodes: rtg streams all zero-length
    // differences and per-seed rates identical for identical policies
    CHECK(a.summary.methods[0].per_seed_success[0] ==
          a.summary.methods[0].per_seed_success[1]);
}

TEST_CASE("summary table formats one row per method") {
    EvalSummary s;
    MethodSummary m;
    m.name = "CT";
    m.mean_success = 92.5;
    s.methods.push_back(m);
    m.name = "BC-CT";
    s.methods.push_back(m);
    const std::string table = s.table();
    CHECK(table.find("CT") != std::string::npos);
    CHECK(table.find("BC-CT") != std::string::npos);
    CHECK(count_occurrences(table, "\n") == 3);  // header + two rows
}

TEST_CASE("trajectory svg is well-formed and complete") {
    World w;
    w.bounds = {0.0, 0.0, 4.0, 4.0};
    w.obstacles.push_back({1.0, 1.0, 1.5, 1.5});
    w.obstacles.push_back({2.0, 2.0, 2.6, 3.0});
    w.obstacles.push_back({3.0, 0.5, 3.2, 1.2});

    ct::RolloutReport rep;
    rep.success = true;
    rep.path = {{0.5, 0.5, 0.0}, {1.8, 2.4, 0.4}};
    rep.rewards = {-1.0};

    const std::string svg = render_trajectory_svg(rep, w);
    CHECK(xml_well_formed(svg));
    CHECK(count_occurrences(svg, "class=\"obstacle\"") ==
          static_cast<int>(w.obstacles.size()));
    CHECK(count_occurrences(svg, "<polyline") == 1);
    CHECK(count_occurrences(svg, "50.00,350.00 180.00,160.00") == 1);  // two scaled points

    const std::string path =
        std::filesystem::temp_directory_path().string() + "/ctnav_render.svg";
    render_trajectory(rep, w, path);
    CHECK(read_text_file(path) == svg);
    std::filesystem::remove(path);

    ct::RolloutReport empty;
    CHECK_THROWS_AS(render_trajectory_svg(empty, w), RuntimeFailure);
}

TEST_CASE("collision markers appear for held poses") {
    World w;
    w.bounds = {0.0, 0.0, 4.0, 4.0};
    w.obstacles.push_back({2.0, 0.0, 2.5, 4.0});

    ct::RolloutReport rep;
    rep.collisions = 1;
    rep.path = {{1.0, 1.0, 0.0}, {1.5, 1.0, 0.0}, {1.5, 1.0, 0.0}, {1.6, 1.1, 0.2}};
    rep.rewards = {-1.0, -1.0, -1.0};
    const std::string svg = render_trajectory_svg(rep, w);
    CHECK(count_occurrences(svg, "class=\"collision\"") == 1);
}
