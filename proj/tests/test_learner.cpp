#include "doctest.h"

#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "uavtrack/errors.hpp"
#include "uavtrack/learner.hpp"
#include "uavtrack/metrics.hpp"

using namespace uavtrack;

namespace {

// Network whose output is `q` for every input: zero weights, bias = q.
QNetwork constant_net(const std::array<float, 6>& q) {
    QNetwork net({1}, {LayerSpec::dense(1, 6)});
    net.parameters()[0].assign(6, 0.0f);
    net.parameters()[1].assign(q.begin(), q.end());
    return net;
}

const std::vector<float> kAnyState{0.0f};

double three_sigma(double p, int n) { return 3.0 * std::sqrt(p * (1 - p) / n); }

// Upper 1% point of chi-square with k degrees of freedom (Wilson-Hilferty).
double chi2_critical_01(int k) {
    const double z = 2.3263478740408408;
    const double a = 2.0 / (9.0 * k);
    return k * std::pow(1 - a + z * std::sqrt(a), 3);
}

TrainParams small_params() {
    TrainParams p;
    p.obs.mode = EncodingMode::vector;
    p.hidden = 16;
    p.warmup = 50;
    p.batch_size = 8;
    p.tau = 40;
    p.episodes = 3;
    return p;
}

EnvConfig small_env() {
    EnvConfig e;
    e.side_s = 40;
    e.road_spacing = 20;
    e.n_obstacles = 1;
    e.t_max = 60;
    e.h_min = 2;
    e.h_max = 12;
    e.n_h = 5;
    return e;
}

}  // namespace

TEST_CASE("exploration schedule") {
    ScheduleParams sp;
    sp.p_sat = 0.1;
    sp.alpha = 2.5;
    CHECK(explore_probability(0, sp) == 1.0);
    CHECK(explore_probability(1, sp) == doctest::Approx(0.17388).epsilon(1e-4 / 0.17388));
    CHECK(std::abs(explore_probability(40, sp) - sp.p_sat) < 1e-6);
    CHECK(std::abs(explore_probability(100000, sp) - sp.p_sat) < 1e-15);
    for (int k = 0; k < 14; ++k) {
        CHECK(explore_probability(k + 1, sp) < explore_probability(k, sp));
        CHECK(explore_probability(k, sp) > sp.p_sat);
    }
}

TEST_CASE("greedy selection with exploration floor") {
    ScheduleParams sp;
    Rng rng(1);
    const auto net = constant_net({0, 5, 1, 1, 1, 1});
    const int n = 10000;
    int ones = 0;
    for (int i = 0; i < n; ++i) ones += select_action(net, kAnyState, 1000, 0, sp, rng) == 1;
    // Greedy with probability 1 - p_sat; a random draw also lands on 1 a sixth of the time.
    const double p = 1 - sp.p_sat + sp.p_sat / 6;
    CHECK(std::abs(double(ones) / n - p) < three_sigma(p, n));
}

TEST_CASE("search-space mode randomizes with p_ss") {
    ScheduleParams sp;
    sp.p_ss = 0.95;
    Rng rng(2);
    const auto net = constant_net({0, 5, 1, 1, 1, 1});
    const int n = 10000;
    int off_greedy = 0;
    for (int i = 0; i < n; ++i) off_greedy += select_action(net, kAnyState, 1000, sp.t_nv_threshold + 1, sp, rng) != 1;
    const double p = sp.p_ss * 5.0 / 6.0;
    CHECK(std::abs(double(off_greedy) / n - p) < three_sigma(p, n));

    // At the threshold the episode schedule still applies.
    int at_threshold = 0;
    for (int i = 0; i < n; ++i) at_threshold += select_action(net, kAnyState, 1000, sp.t_nv_threshold, sp, rng) != 1;
    const double q = sp.p_sat * 5.0 / 6.0;
    CHECK(std::abs(double(at_threshold) / n - q) < three_sigma(q, n));
}

TEST_CASE("greedy ties go to the lowest index") {
    ScheduleParams sp;
    Rng rng(3);
    const auto net = constant_net({2, 2, 2, 2, 2, 2});
    for (int i = 0; i < 50; ++i) CHECK(select_action_from_q(net.forward_one(kAnyState), 0.0, 0, sp, rng) == 0);
    const std::array<float, 6> q{1, 3, 3, 0, 3, 0};
    CHECK(greedy_action(q) == 1);
}

TEST_CASE("DQN target") {
    const auto target = constant_net({0.5, 2.0, -1, 0, 0, 0});
    CHECK(dqn_target(1.0, kAnyState, false, target, 0.1) == doctest::Approx(1.2).epsilon(1e-15));
    CHECK(dqn_target(-60.0, kAnyState, true, target, 0.1) == -60.0);
    CHECK(dqn_target(3.5, kAnyState, false, target, 0.0) == 3.5);
}

TEST_CASE("DDQN target") {
    const auto online = constant_net({1, 3, 2, 0, 0, 0});
    const auto target = constant_net({5, 0.5, 7, 0, 0, 0});
    CHECK(ddqn_target(0.0, kAnyState, false, online, target, 0.1) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(dqn_target(0.0, kAnyState, false, target, 0.1) == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(ddqn_target(-4.0, kAnyState, true, online, target, 0.1) == -4.0);
}

TEST_CASE("targets coincide with identical networks and DDQN never exceeds DQN") {
    Rng rng(4);
    auto net = make_mlp_qnet(5, 12, false);
    net.init(rng);
    auto other = make_mlp_qnet(5, 12, false);
    other.init(rng);
    int equal_cases = 0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<float> s(5);
        for (auto& v : s) v = static_cast<float>(uniform_real(rng, -1, 1));
        const double r = uniform_real(rng, -10, 10);
        const double gamma = uniform_real(rng, 0, 0.99);
        CHECK(ddqn_target(r, s, false, net, net, gamma) == dqn_target(r, s, false, net, gamma));
        const double d = dqn_target(r, s, false, net, gamma);
        const double dd = ddqn_target(r, s, false, other, net, gamma);
        CHECK(dd <= d);
        const bool hits_max = greedy_action(other.forward_one(s)) == greedy_action(net.forward_one(s));
        if (hits_max) {
            CHECK(dd == d);
            ++equal_cases;
        }
    }
    CHECK(equal_cases > 0);
}

TEST_CASE("max over noisy estimates overestimates, decoupled selection does not") {
    Rng rng(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    const int n = 10000;
    double sum_dqn = 0, sum_ddqn = 0, sum_diff = 0, sum_diff2 = 0;
    for (int i = 0; i < n; ++i) {
        std::array<float, 6> qa{}, qb{};
        for (auto& v : qa) v = static_cast<float>(noise(rng));
        for (auto& v : qb) v = static_cast<float>(noise(rng));
        const auto online = constant_net(qa), target = constant_net(qb);
        const double d = dqn_target(0.0, kAnyState, false, target, 0.9);
        const double dd = ddqn_target(0.0, kAnyState, false, online, target, 0.9);
        sum_dqn += d;
        sum_ddqn += dd;
        sum_diff += d - dd;
        sum_diff2 += (d - dd) * (d - dd);
    }
    const double mean_diff = sum_diff / n;
    const double se = std::sqrt((sum_diff2 / n - mean_diff * mean_diff) / n);
    CHECK(mean_diff > 3 * se);
    CHECK(sum_dqn / n > 0.5);
    // Unbiased: the evaluator's noise is independent of the selection.
    CHECK(std::abs(sum_ddqn / n) < 4 * 0.9 / std::sqrt(double(n)));
}

TEST_CASE("replay buffer is a ring with uniform sampling") {
    ReplayBuffer buf(100, 6);
    for (int i = 0; i < 250; ++i) buf.push({{float(i)}, 0, double(i), {0.0f}, false});
    CHECK(buf.size() == 100);
    double lo = 1e9;
    for (std::size_t i = 0; i < buf.size(); ++i) lo = std::min(lo, buf[i].r);
    CHECK(lo == 150);

    const int draws = 100000;
    std::vector<int> counts(100, 0);
    for (int i = 0; i < draws; ++i) counts[buf.sample_index()]++;
    const double expected = draws / 100.0;
    double chi2 = 0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < chi2_critical_01(99));

    CHECK_THROWS_AS(buf.push({{0.0f}, 0, std::numeric_limits<double>::quiet_NaN(), {0.0f}, false}), NumericError);
    CHECK_THROWS_AS(buf.push({{0.0f}, 6, 0.0, {0.0f}, false}), NumericError);
    buf.clear();
    CHECK(buf.size() == 0);
}

TEST_CASE("target network sync") {
    Rng rng(7);
    auto online = make_mlp_qnet(3, 4, false);
    online.init(rng);
    auto target = make_mlp_qnet(3, 4, false);
    target.init(rng);
    const auto before = target;
    CHECK_FALSE(sync_target(online, target, 9, 10));
    CHECK(target == before);
    CHECK(sync_target(online, target, 10, 10));
    CHECK(target == online);

    // Replay of an update log: the target only ever equals the snapshot at a sync point.
    TrainParams p;
    p.lr = 0.1;
    std::vector<Transition> data;
    for (int i = 0; i < 4; ++i) data.push_back({{0.1f * i, 0.2f, -0.3f}, std::size_t(i), 1.0, {0.0f, 0.1f, 0.2f}, false});
    std::vector<const Transition*> batch;
    for (const auto& d : data) batch.push_back(&d);
    QNetwork snapshot = target;
    for (long step = 11; step <= 30; ++step) {
        train_step(online, target, batch, p);
        if (sync_target(online, target, step, 10)) snapshot = online;
        CHECK(target == snapshot);
        if (step % 10 != 0) CHECK(target != online);
    }
    CHECK_THROWS_AS(sync_target(online, target, 1, 0), ConfigError);
}

TEST_CASE("train step") {
    Rng rng(8);
    TrainParams p;
    p.gamma = 0.5;
    p.lr = 0.05;
    auto online = make_mlp_qnet(3, 6, false);
    online.init(rng);
    const auto target = online;

    SUBCASE("consistent targets leave the parameters alone") {
        Transition t{{0.3f, -0.1f, 0.7f}, 2, 0.0, {0.0f, 0.0f, 0.0f}, true};
        t.r = online.forward_one(t.s)[2];
        const Transition* batch[] = {&t, &t};
        const auto before = online;
        train_step(online, target, batch, p);
        CHECK(online == before);
    }
    SUBCASE("Q moves toward the target") {
        Transition t{{0.3f, -0.1f, 0.7f}, 4, 2.0, {0.5f, 0.5f, 0.5f}, false};
        const double y = ddqn_target(t.r, t.s_next, false, online, target, p.gamma);
        const double q0 = online.forward_one(t.s)[4];
        const Transition* batch[] = {&t};
        train_step(online, target, batch, p);
        const double q1 = online.forward_one(t.s)[4];
        CHECK(std::abs(y - q1) < std::abs(y - q0));
    }
    SUBCASE("deterministic") {
        Transition a{{0.1f, 0.2f, 0.3f}, 1, -1.0, {0.3f, 0.2f, 0.1f}, false};
        Transition b{{0.9f, -0.2f, 0.0f}, 5, 3.0, {0.0f, 0.0f, 1.0f}, false};
        const Transition* batch[] = {&a, &b, &a};
        auto x = online, y = online;
        train_step(x, target, batch, p);
        train_step(y, target, batch, p);
        CHECK(x == y);
        CHECK(x != online);
    }
}

TEST_CASE("zero episodes leaves a fresh network") {
    auto p = small_params();
    p.episodes = 0;
    const auto out = run_training(small_env(), {}, p, {}, 11);
    CHECK(out.logs.empty());
    CHECK(out.stats.empty());
    Rng agent(derive_seed(11, "agent"));
    CHECK(out.network == make_network(p, agent));
}

TEST_CASE("training is deterministic in the seed") {
    const auto p = small_params();
    const auto a = run_training(small_env(), {}, p, {}, 21);
    const auto b = run_training(small_env(), {}, p, {}, 21);
    CHECK(a.logs == b.logs);
    CHECK(a.network == b.network);
    const auto c = run_training(small_env(), {}, p, {}, 22);
    CHECK(c.logs != a.logs);
    REQUIRE(a.logs.size() == 3);
    CHECK(a.logs[0].steps.size() == 60);
}

TEST_CASE("DQN and DDQN coincide when the target tracks the online network") {
    auto p = small_params();
    p.tau = 1;
    p.algo = Algo::dqn;
    const auto dqn = run_training(small_env(), {}, p, {}, 31);
    p.algo = Algo::ddqn;
    const auto ddqn = run_training(small_env(), {}, p, {}, 31);
    CHECK(dqn.logs == ddqn.logs);
    CHECK(dqn.network == ddqn.network);
}

TEST_CASE("symmetric double Q-learning runs deterministically") {
    auto p = small_params();
    p.ddqn_mode = DdqnMode::symmetric;
    const auto a = run_training(small_env(), {}, p, {}, 41);
    const auto b = run_training(small_env(), {}, p, {}, 41);
    CHECK(a.network == b.network);
}

TEST_CASE("training needs a learning algorithm") {
    auto p = small_params();
    p.algo = Algo::baseline;
    CHECK_THROWS_AS(run_training(small_env(), {}, p, {}, 1), ConfigError);
    p = small_params();
    p.gamma = 1.0;
    CHECK_THROWS_WITH_AS(run_training(small_env(), {}, p, {}, 1), "gamma ∈ [0,1) violated", ConfigError);
}

TEST_CASE("fine-tuning") {
    auto p = small_params();
    const auto base = run_training(small_env(), {}, p, {}, 51).network;
    CHECK(finetune(base, small_env(), {}, p, {}, 0.0, 52) == base);

    auto five = small_env();
    five.n_obstacles = 2;
    p.episodes = 5;
    TrainingResult details;
    const auto tuned = finetune(base, five, {}, p, {}, 0.4, 52, &details);
    CHECK(details.logs.size() == 2);
    CHECK(tuned != base);
    CHECK(details.stats[0].epsilon == 1.0);

    auto grid = p;
    grid.obs.mode = EncodingMode::grid;
    CHECK_THROWS_WITH_AS(finetune(base, five, {}, grid, {}, 0.5, 1), doctest::Contains("re-encode"), ShapeError);
}

TEST_CASE("policies are compared on matched episodes") {
    const auto env = small_env();
    auto p = small_params();
    Rng rng(61);
    auto net = make_network(p, rng);
    const auto learned = evaluate_network(net, env, {}, p, {}, {4, 0.0, true, false}, 77);
    const auto random = evaluate_random(env, {}, 4, 77);
    REQUIRE(learned.size() == 4);
    for (int k = 0; k < 4; ++k) {
        REQUIRE(learned[k].steps.size() == random[k].steps.size());
        for (std::size_t t = 0; t < learned[k].steps.size(); ++t)
            CHECK(learned[k].steps[t].target == random[k].steps[t].target);
    }
}

TEST_CASE("lifelong evaluation keeps learning") {
    auto p = small_params();
    p.warmup = 10;
    Rng rng(71);
    auto net = make_network(p, rng);
    const auto frozen = net;
    evaluate_network(net, small_env(), {}, p, {}, {2, 0.0, true, false}, 5);
    CHECK(net == frozen);
    evaluate_network(net, small_env(), {}, p, {}, {2, 0.0, true, true}, 5);
    CHECK(net != frozen);
}

TEST_CASE("a small open field is learned well beyond chance") {
    EnvConfig env;
    env.side_s = 20;
    env.road_spacing = 20;
    env.n_obstacles = 0;
    env.t_max = 100;
    TrainParams p;
    p.obs.mode = EncodingMode::vector;
    p.episodes = 300;
    const std::uint64_t seed = 2024;
    const auto out = run_training(env, {}, p, {}, seed);
    double learned = 0;
    for (int k = 280; k < 300; ++k) learned += out.stats[k].time;
    learned /= 20;

    Rng rng(derive_seed(seed, "random-policy"));
    const auto world = materialize(env);
    double chance = 0;
    for (int k = 280; k < 300; ++k) {
        const auto log = run_episode(world, {}, train_episode_seed(seed, k),
                                     [&](const WorldState&) { return kAllActions[uniform_index(rng, kNumActions)]; });
        chance += time_in_fov(log);
    }
    chance /= 20;
    MESSAGE("last-20 TIME learned " << learned << " random " << chance);
    CHECK(learned >= 2 * chance);
}
