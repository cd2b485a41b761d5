#include "doctest.h"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "oracles.hpp"
#include "uavtrack/errors.hpp"
#include "uavtrack/reward.hpp"

using namespace uavtrack;

namespace {

WorldState world_at(const Vec3& uav, const Vec2& target, int t_nv = 0) {
    WorldState w;
    w.uav = uav;
    w.target = target;
    w.t_nv = t_nv;
    return w;
}

EnvConfig scene(std::vector<ObstacleSpec> obstacles, double theta = std::numbers::pi / 4) {
    EnvConfig c;
    c.n_obstacles = static_cast<int>(obstacles.size());
    c.obstacles = std::move(obstacles);
    c.theta_fov = theta;
    return c;
}

}  // namespace

TEST_CASE("positive reward") {
    RewardConfig rc;
    rc.r_visible_dist = 3000;
    rc.r_visible_height = 1500;
    CHECK(positive_reward({0, 0, 10}, {30, 40}, rc) == doctest::Approx(210).epsilon(1e-12));
    CHECK(positive_reward({7, 7, 10}, {7, 7}, rc) == doctest::Approx(3000.0 + 150.0));
    CHECK(positive_reward({7, 7, 10}, {7.5, 7}, rc) == positive_reward({7, 7, 10}, {7, 7}, rc));
    double prev = std::numeric_limits<double>::infinity();
    for (double d = 1; d < 40; d += 1.5) {
        const double v = positive_reward({0, 0, 30}, {d, 0}, rc);
        CHECK(v < prev);
        prev = v;
    }
    CHECK_THROWS_AS(positive_reward({0, 0, 0}, {1, 1}, rc), DomainError);
}

TEST_CASE("non-visible reward") {
    RewardConfig rc;
    rc.r_nonvisible = -10;
    rc.beta = 1;
    CHECK(nonvisible_reward(1, rc) == doctest::Approx(-3.6788).epsilon(1e-4));
    double prev = -std::numeric_limits<double>::infinity();
    for (int t = 1; t < 60; ++t) {
        const double v = nonvisible_reward(t, rc);
        CHECK(v < 0);
        CHECK(v > prev);
        prev = v;
    }
    CHECK(nonvisible_reward(50, rc) > -1e-20);

    rc.beta = 0;
    CHECK_THROWS_WITH_AS(validate(rc), "beta > 0 violated", ConfigError);
}

TEST_CASE("inverted decay grows and saturates") {
    RewardConfig rc;
    rc.r_nonvisible = -10;
    rc.beta = 1;
    rc.inverted_decay = true;
    rc.t_cap = 3;
    CHECK(nonvisible_reward(1, rc) == doctest::Approx(-10 * std::exp(1.0)));
    CHECK(nonvisible_reward(2, rc) < nonvisible_reward(1, rc));
    CHECK(nonvisible_reward(3, rc) == nonvisible_reward(40, rc));
}

TEST_CASE("reward branches in order") {
    RewardConfig rc;
    rc.r_visible_dist = 3000;
    rc.r_visible_height = 1500;
    rc.r_nonvisible = -10;
    rc.beta = 1;

    SUBCASE("collision wins") {
        const auto c = scene({ObstacleSpec{{6, 0}, 2, 5}});
        auto w = world_at({4, 0, 2}, {4, 0}, 3);
        w.collided = true;
        const auto out = compute_reward(w, c, rc);
        CHECK(out.branch == RewardBranch::collision);
        CHECK(out.value == rc.r_collision);
        CHECK(out.t_nv_after == 4);
    }
    SUBCASE("UAV inside a cylinder also counts as collision") {
        const auto c = scene({ObstacleSpec{{0, 0}, 5, 10}});
        const auto out = compute_reward(world_at({3, 0, 4}, {3, 0}), c, rc);
        CHECK(out.branch == RewardBranch::collision);
    }
    SUBCASE("obstruction") {
        const auto c = scene({ObstacleSpec{{10, 0}, 2, 20}});
        const auto out = compute_reward(world_at({0, 0, 30}, {20, 0}, 2), c, rc);
        CHECK(out.branch == RewardBranch::obstruction);
        CHECK(out.value == rc.r_obstruction);
        CHECK(out.t_nv_after == 3);
    }
    SUBCASE("visible") {
        const auto c = scene({ObstacleSpec{{50, 50}, 2, 20}}, std::atan(4.0));
        const auto out = compute_reward(world_at({0, 0, 10}, {30, 40}, 7), c, rc);
        CHECK(out.branch == RewardBranch::visible);
        CHECK(out.value == doctest::Approx(210).epsilon(1e-12));
        CHECK(out.t_nv_after == 0);
    }
    SUBCASE("not visible") {
        const auto c = scene({});
        const auto out = compute_reward(world_at({0, 0, 10}, {60, 60}, 0), c, rc);
        CHECK(out.branch == RewardBranch::non_visible);
        CHECK(out.value == doctest::Approx(-3.6788).epsilon(1e-4));
        CHECK(out.t_nv_after == 1);
    }
}

TEST_CASE("closed-form obstruction setting is honoured") {
    RewardConfig rc;
    auto c = scene({ObstacleSpec{{10, -10}, 2, 20}});
    const auto w = world_at({0, 0, 10}, {20, 0});
    CHECK(compute_reward(w, c, rc).branch == RewardBranch::non_visible);
    c.obstruction = ObstructionModel::closed_form;
    CHECK(compute_reward(w, c, rc).branch == RewardBranch::obstruction);
}

TEST_CASE("reward agrees with the independent oracle on random scenes") {
    Rng rng(77);
    RewardConfig rc;
    std::map<RewardBranch, int> seen;
    int compared = 0;
    while (compared < 200) {
        std::vector<ObstacleSpec> obstacles;
        const int n = static_cast<int>(uniform_index(rng, 4));
        for (int i = 0; i < n; ++i)
            obstacles.push_back({{uniform_real(rng, 0, 40), uniform_real(rng, 0, 40)}, uniform_real(rng, 1, 6),
                                 uniform_real(rng, 2, 30)});
        const double theta = uniform_real(rng, 0.2, 1.2);
        const Vec3 uav{uniform_real(rng, 0, 40), uniform_real(rng, 0, 40), uniform_real(rng, 1, 30)};
        const Vec2 target{uniform_real(rng, 0, 40), uniform_real(rng, 0, 40)};
        bool near_surface = false;
        for (const auto& o : obstacles)
            near_surface = near_surface || std::abs(oracle::probe_segment(uav, target, o).min_sdf) < 1e-3;
        if (near_surface) continue;
        ++compared;
        const int t_nv = static_cast<int>(uniform_index(rng, 8));
        const auto c = scene(obstacles, theta);
        const auto got = compute_reward(world_at(uav, target, t_nv), c, rc);
        const auto want = oracle::reward(uav, target, t_nv, obstacles, theta, rc);
        CHECK(got.branch == want.branch);
        CHECK(got.value == want.value);
        CHECK(got.t_nv_after == want.t_nv_after);
        CHECK((got.branch == RewardBranch::visible) == (got.value > 0));
        seen[got.branch]++;
    }
    CHECK(seen.size() == 4);
}

TEST_CASE("t_nv resets only on sightings") {
    EnvConfig c = materialize(EnvConfig{});
    RewardConfig rc;
    WorldState w = reset(c, 5);
    Rng actions(3);
    for (int i = 0; i < 400; ++i) {
        w = advance(w, kAllActions[uniform_index(actions, 6)], c);
        const auto out = compute_reward(w, c, rc);
        if (out.branch == RewardBranch::visible) CHECK(out.t_nv_after == 0);
        else CHECK(out.t_nv_after == w.t_nv + 1);
        w.t_nv = out.t_nv_after;
    }
}

TEST_CASE("branch names round-trip") {
    for (auto b : {RewardBranch::collision, RewardBranch::obstruction, RewardBranch::visible, RewardBranch::non_visible})
        CHECK(branch_from_string(to_string(b)) == b);
    CHECK_THROWS_AS(branch_from_string("seen"), FormatError);
}
