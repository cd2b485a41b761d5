#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "uavtrack/episode.hpp"
#include "uavtrack/neural.hpp"
#include "uavtrack/observation.hpp"
#include "uavtrack/reward.hpp"
#include "uavtrack/sim_core.hpp"
#include "uavtrack/trajectory.hpp"

namespace uavtrack {

struct Transition {
    std::vector<float> s;
    std::size_t a = 0;
    double r = 0.0;
    std::vector<float> s_next;
    bool terminal = false;
};

// Fixed-capacity ring; sampling is uniform with replacement.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, std::uint64_t seed);

    void push(Transition t);
    void clear();
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Transition& operator[](std::size_t i) const { return items_[i]; }

    std::size_t sample_index();
    std::vector<const Transition*> sample(std::size_t n);

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> items_;
    Rng rng_;
};

struct ScheduleParams {
    double p_sat = 0.2;
    double alpha = 2.5;
    double p_ss = 0.95;
    int t_nv_threshold = 5;

    friend bool operator==(const ScheduleParams&, const ScheduleParams&) = default;
};

void validate(const ScheduleParams& sp);

enum class Algo : std::uint8_t { dqn, ddqn, baseline, random };
enum class DdqnMode : std::uint8_t { standard, symmetric };

struct TrainParams {
    double gamma = 0.1;
    double lr = 0.01;
    int tau = 500;
    int batch_size = 32;
    int episodes = 300;
    Algo algo = Algo::ddqn;
    DdqnMode ddqn_mode = DdqnMode::standard;
    bool lifelong = false;
    int warmup = 500;
    int replay_capacity = 50000;
    // Multiplies rewards before they enter TD targets; logs keep raw rewards.
    double reward_scale = 1e-3;
    double grad_clip = 0.0;
    ObservationConfig obs;
    int hidden = 64;
    int conv_channels = 8;
    bool batchnorm = false;
    int checkpoint_every = 0;

    friend bool operator==(const TrainParams&, const TrainParams&) = default;
};

void validate(const TrainParams& tp);

double explore_probability(int k, const ScheduleParams& sp);

// Lowest index among maximal values.
std::size_t greedy_action(std::span<const float> q);

// Search-space rule (t_nv > threshold) takes precedence over the episode
// schedule; `explore` is the probability of a uniform random action otherwise.
std::size_t select_action_from_q(std::span<const float> q, double explore, int t_nv, const ScheduleParams& sp,
                                 Rng& rng);
std::size_t select_action(const QNetwork& net, std::span<const float> obs, int k, int t_nv, const ScheduleParams& sp,
                          Rng& rng);

double dqn_target(double r, std::span<const float> s_next, bool terminal, const QNetwork& target_net, double gamma);
double ddqn_target(double r, std::span<const float> s_next, bool terminal, const QNetwork& online_net,
                   const QNetwork& target_net, double gamma);

struct StepStats {
    double loss = 0.0;
};

// One SGD step on the batch mean of 1/2 (y - Q(s,a))^2. `selector` picks the
// bootstrap action for DDQN targets (the online net in the standard setup),
// `evaluator` supplies the bootstrap value.
StepStats train_step(QNetwork& online, const QNetwork& selector, const QNetwork& evaluator,
                     std::span<const Transition* const> batch, const TrainParams& params);
StepStats train_step(QNetwork& online, const QNetwork& target, std::span<const Transition* const> batch,
                     const TrainParams& params);

// Copies online into target when step is a multiple of tau; returns whether it did.
bool sync_target(const QNetwork& online, QNetwork& target, long step, int tau);

QNetwork make_network(const TrainParams& params, Rng& rng);

struct EpisodeStats {
    int episode = 0;
    double dis = 0.0;
    double time = 0.0;
    double rew = 0.0;
    double epsilon = 0.0;
    double loss_mean = 0.0;
};

struct TrainingResult {
    QNetwork network;
    std::vector<TrajectoryLog> logs;
    std::vector<EpisodeStats> stats;
};

using EpisodeCallback = std::function<void(const EpisodeStats&, const QNetwork&)>;

// Deterministic in `seed`. Starts from `initial` when given (replay empty,
// exploration schedule restarted at k = 0).
TrainingResult run_training(const EnvConfig& env, const RewardConfig& reward, const TrainParams& params,
                            const ScheduleParams& schedule, std::uint64_t seed,
                            const std::optional<QNetwork>& initial = std::nullopt,
                            const EpisodeCallback& on_episode = {});

// Continues training a converged model on a new environment for
// round(budget_fraction * params.episodes) episodes.
QNetwork finetune(const QNetwork& pretrained, const EnvConfig& new_env, const RewardConfig& reward,
                  const TrainParams& params, const ScheduleParams& schedule, double budget_fraction,
                  std::uint64_t seed, TrainingResult* details = nullptr);

// Frozen-policy rollouts. Episode k of any policy uses the same environment
// seed, so different policies are compared on matched episodes.
struct EvalOptions {
    int episodes = 10;
    double epsilon = 0.0;
    bool search_space = true;
    bool lifelong = false;

    friend bool operator==(const EvalOptions&, const EvalOptions&) = default;
};

std::vector<TrajectoryLog> evaluate_network(QNetwork& net, const EnvConfig& env, const RewardConfig& reward,
                                            const TrainParams& params, const ScheduleParams& schedule,
                                            const EvalOptions& opts, std::uint64_t seed);
std::vector<TrajectoryLog> evaluate_random(const EnvConfig& env, const RewardConfig& reward, int episodes,
                                           std::uint64_t seed);

}  // namespace uavtrack
