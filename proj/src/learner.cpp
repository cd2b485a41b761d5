#include "uavtrack/learner.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "uavtrack/errors.hpp"
#include "uavtrack/metrics.hpp"

namespace uavtrack {

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    if (capacity == 0) throw ConfigError("replay capacity >= 1 violated");
}

void ReplayBuffer::push(Transition t) {
    if (!std::isfinite(t.r)) throw NumericError("replay: non-finite reward");
    if (t.a >= kNumActions) throw NumericError("replay: action index out of range");
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
    } else {
        items_[next_] = std::move(t);
    }
    next_ = (next_ + 1) % capacity_;
}

void ReplayBuffer::clear() {
    items_.clear();
    next_ = 0;
}

std::size_t ReplayBuffer::sample_index() {
    if (items_.empty()) throw std::logic_error("replay: sampling from an empty buffer");
    return static_cast<std::size_t>(uniform_index(rng_, items_.size()));
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n) {
    std::vector<const Transition*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(&items_[sample_index()]);
    return out;
}

void validate(const ScheduleParams& sp) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string(what) + " violated");
    };
    require(sp.p_sat > 0.0 && sp.p_sat < 1.0, "0 < p_sat < 1");
    require(sp.alpha > 0.0, "alpha > 0");
    require(sp.p_ss > 0.5 && sp.p_ss < 1.0, "0.5 < p_ss < 1");
    require(sp.t_nv_threshold >= 1, "t_nv_threshold >= 1");
}

void validate(const TrainParams& tp) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string(what) + " violated");
    };
    require(tp.gamma >= 0.0 && tp.gamma < 1.0, "gamma ∈ [0,1)");
    require(tp.lr >= 0.0, "lr >= 0");
    require(tp.tau >= 1, "sync_period_tau >= 1");
    require(tp.batch_size >= 1, "batch_size >= 1");
    require(tp.episodes >= 0, "episodes >= 0");
    require(tp.warmup >= 0, "warmup >= 0");
    require(tp.replay_capacity >= 1, "replay_capacity >= 1");
    require(tp.reward_scale > 0.0, "reward_scale > 0");
    require(tp.grad_clip >= 0.0, "grad_clip >= 0");
    require(tp.hidden >= 1, "hidden >= 1");
    require(tp.conv_channels >= 1, "conv_channels >= 1");
    require(tp.checkpoint_every >= 0, "checkpoint_every >= 0");
    observation_shape(tp.obs);
}

double explore_probability(int k, const ScheduleParams& sp) {
    return (1.0 - sp.p_sat) * std::exp(-sp.alpha * k) + sp.p_sat;
}

std::size_t greedy_action(std::span<const float> q) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.size(); ++i)
        if (q[i] > q[best]) best = i;
    return best;
}

std::size_t select_action_from_q(std::span<const float> q, double explore, int t_nv, const ScheduleParams& sp,
                                 Rng& rng) {
    const double p_random = t_nv > sp.t_nv_threshold ? sp.p_ss : explore;
    if (bernoulli(rng, p_random)) return static_cast<std::size_t>(uniform_index(rng, kNumActions));
    return greedy_action(q);
}

std::size_t select_action(const QNetwork& net, std::span<const float> obs, int k, int t_nv, const ScheduleParams& sp,
                          Rng& rng) {
    const auto q = net.forward_one(obs);
    return select_action_from_q(q, explore_probability(k, sp), t_nv, sp, rng);
}

double dqn_target(double r, std::span<const float> s_next, bool terminal, const QNetwork& target_net, double gamma) {
    if (terminal) return r;
    const auto q = target_net.forward_one(s_next);
    return r + gamma * double(*std::max_element(q.begin(), q.end()));
}

double ddqn_target(double r, std::span<const float> s_next, bool terminal, const QNetwork& online_net,
                   const QNetwork& target_net, double gamma) {
    if (terminal) return r;
    const auto a_star = greedy_action(online_net.forward_one(s_next));
    return r + gamma * double(target_net.forward_one(s_next)[a_star]);
}

namespace {

TensorBuf stack(std::span<const Transition* const> batch, bool next, const Shape& obs_shape) {
    Shape shape{batch.size()};
    shape.insert(shape.end(), obs_shape.begin(), obs_shape.end());
    TensorBuf t(shape);
    const std::size_t width = numel(obs_shape);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& src = next ? batch[i]->s_next : batch[i]->s;
        if (src.size() != width) throw ShapeError("transition observation size does not match network input");
        std::copy(src.begin(), src.end(), t.data.begin() + static_cast<long>(i * width));
    }
    return t;
}

}  // namespace

StepStats train_step(QNetwork& online, const QNetwork& selector, const QNetwork& evaluator,
                     std::span<const Transition* const> batch, const TrainParams& params) {
    if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
    const Shape& obs_shape = online.input_shape();
    const std::size_t n_out = online.output_size();
    const TensorBuf next = stack(batch, true, obs_shape);
    const TensorBuf q_eval = evaluator.forward(next);
    TensorBuf q_select;
    if (params.algo == Algo::ddqn) q_select = selector.forward(next);

    std::vector<double> targets(batch.size());
    std::vector<std::size_t> actions(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& tr = *batch[i];
        actions[i] = tr.a;
        if (tr.terminal) {
            targets[i] = tr.r;
            continue;
        }
        const std::span<const float> row_eval(q_eval.data.data() + i * n_out, n_out);
        double bootstrap = 0.0;
        if (params.algo == Algo::ddqn) {
            const std::span<const float> row_sel(q_select.data.data() + i * n_out, n_out);
            bootstrap = row_eval[greedy_action(row_sel)];
        } else {
            bootstrap = *std::max_element(row_eval.begin(), row_eval.end());
        }
        targets[i] = tr.r + params.gamma * bootstrap;
    }
    auto grads = td_gradients<float>(online, stack(batch, false, obs_shape), actions, targets,
                                     params.batchnorm ? Mode::training : Mode::inference);
    clip_gradients(grads, params.grad_clip);
    sgd_step(online, grads, params.lr);
    return {grads.loss};
}

StepStats train_step(QNetwork& online, const QNetwork& target, std::span<const Transition* const> batch,
                     const TrainParams& params) {
    return train_step(online, online, target, batch, params);
}

bool sync_target(const QNetwork& online, QNetwork& target, long step, int tau) {
    if (tau < 1) throw ConfigError("sync_period_tau >= 1 violated");
    if (step % tau != 0) return false;
    target = clone_params(online);
    return true;
}

QNetwork make_network(const TrainParams& params, Rng& rng) {
    const Shape shape = observation_shape(params.obs);
    QNetwork net = params.obs.mode == EncodingMode::grid
                       ? make_conv_qnet(shape, static_cast<std::size_t>(params.conv_channels),
                                        static_cast<std::size_t>(params.hidden), params.batchnorm)
                       : make_mlp_qnet(numel(shape), static_cast<std::size_t>(params.hidden), params.batchnorm);
    net.init(rng);
    return net;
}

namespace {

// Online/target pair plus the replay stream of one training run.
class Session {
public:
    Session(const EnvConfig& env, const RewardConfig& reward, const TrainParams& params,
            const ScheduleParams& schedule, std::uint64_t seed, const std::optional<QNetwork>& initial)
        : env_(materialize(env)),
          reward_(reward),
          params_(params),
          schedule_(schedule),
          agent_rng_(derive_seed(seed, "agent")),
          replay_(static_cast<std::size_t>(params.replay_capacity), derive_seed(seed, "replay")) {
        validate(reward_);
        validate(params_);
        validate(schedule_);
        if (params_.algo != Algo::dqn && params_.algo != Algo::ddqn) {
            throw ConfigError("training requires algo dqn or ddqn");
        }
        const Shape expected = observation_shape(params_.obs);
        if (initial) {
            if (initial->input_shape() != expected || initial->output_size() != kNumActions) {
                throw ShapeError("pretrained network input " + shape_string(initial->input_shape()) +
                                 " does not match the observation encoding " + shape_string(expected) +
                                 "; re-encode or retrain");
            }
            online_ = *initial;
        } else {
            online_ = make_network(params_, agent_rng_);
        }
        if (symmetric()) {
            if (initial) {
                second_ = online_;
            } else {
                second_ = make_network(params_, agent_rng_);
            }
        } else {
            second_ = clone_params(online_);
        }
    }

    bool symmetric() const { return params_.algo == Algo::ddqn && params_.ddqn_mode == DdqnMode::symmetric; }

    QNetwork& online() { return online_; }

    struct Outcome {
        TrajectoryLog log;
        double loss_mean = 0.0;
    };

    Outcome episode(std::uint64_t env_seed, int k, double explore, const ScheduleParams& policy_schedule,
                    bool learn) {
        Outcome out;
        out.log.seed = env_seed;
        out.log.episode = k;
        out.log.steps.reserve(static_cast<std::size_t>(env_.t_max));
        double loss_sum = 0.0;
        long updates = 0;
        WorldState world = reset(env_, env_seed);
        std::vector<float> obs = encode(world, env_, params_.obs);
        for (int t = 0; t < env_.t_max; ++t) {
            const std::size_t a = select_action_from_q(q_values(obs), explore, world.t_nv, policy_schedule, agent_rng_);
            EnvStep step = env_step(world, kAllActions[a], env_, reward_);
            std::vector<float> obs_next = encode(step.next, env_, params_.obs);
            out.log.steps.push_back(make_record(step, env_));
            if (learn) {
                replay_.push({obs, a, step.outcome.value * params_.reward_scale, obs_next, step.next.t >= env_.t_max});
                ++env_steps_;
                if (replay_.size() >= static_cast<std::size_t>(std::max(params_.warmup, 1))) {
                    try {
                        loss_sum += update();
                        ++updates;
                    } catch (const NumericError& e) {
                        spdlog::error("numeric failure at episode {} step {}: action {} reward {}", k, t + 1, a,
                                      step.outcome.value);
                        throw NumericError("episode " + std::to_string(k) + " step " + std::to_string(t + 1) + ": " +
                                           e.what());
                    }
                }
                if (!symmetric()) sync_target(online_, second_, env_steps_, params_.tau);
            }
            world = std::move(step.next);
            obs = std::move(obs_next);
        }
        out.loss_mean = updates ? loss_sum / double(updates) : 0.0;
        return out;
    }

    const EnvConfig& env() const { return env_; }

private:
    std::vector<float> q_values(const std::vector<float>& obs) const {
        auto q = online_.forward_one(obs);
        if (symmetric()) {
            const auto q2 = second_.forward_one(obs);
            for (std::size_t i = 0; i < q.size(); ++i) q[i] += q2[i];
        }
        return q;
    }

    double update() {
        const auto batch = replay_.sample(static_cast<std::size_t>(params_.batch_size));
        if (!symmetric()) return train_step(online_, online_, second_, batch, params_).loss;
        // Random role assignment: the updated net selects, the other evaluates.
        if (bernoulli(agent_rng_, 0.5)) return train_step(online_, online_, second_, batch, params_).loss;
        return train_step(second_, second_, online_, batch, params_).loss;
    }

    EnvConfig env_;
    RewardConfig reward_;
    TrainParams params_;
    ScheduleParams schedule_;
    Rng agent_rng_;
    ReplayBuffer replay_;
    QNetwork online_;
    QNetwork second_;
    long env_steps_ = 0;
};

EpisodeStats summarize(int k, const TrajectoryLog& log, double epsilon, double loss) {
    return {k, dis(log), time_in_fov(log), rew(log, RewMode::mean), epsilon, loss};
}

}  // namespace

TrainingResult run_training(const EnvConfig& env, const RewardConfig& reward, const TrainParams& params,
                            const ScheduleParams& schedule, std::uint64_t seed, const std::optional<QNetwork>& initial,
                            const EpisodeCallback& on_episode) {
    Session session(env, reward, params, schedule, seed, initial);
    TrainingResult result;
    for (int k = 0; k < params.episodes; ++k) {
        const double eps = explore_probability(k, schedule);
        auto out = session.episode(train_episode_seed(seed, k), k, eps, schedule, true);
        result.stats.push_back(summarize(k, out.log, eps, out.loss_mean));
        result.logs.push_back(std::move(out.log));
        spdlog::debug("episode {} DIS {:.3f} TIME {:.1f} REW {:.3f} eps {:.3f} loss {:.5f}", k, result.stats.back().dis,
                      result.stats.back().time, result.stats.back().rew, eps, out.loss_mean);
        if (on_episode) on_episode(result.stats.back(), session.online());
    }
    result.network = session.online();
    return result;
}

QNetwork finetune(const QNetwork& pretrained, const EnvConfig& new_env, const RewardConfig& reward,
                  const TrainParams& params, const ScheduleParams& schedule, double budget_fraction,
                  std::uint64_t seed, TrainingResult* details) {
    if (budget_fraction < 0.0) throw ConfigError("budget_fraction >= 0 violated");
    const Shape expected = observation_shape(params.obs);
    if (pretrained.input_shape() != expected) {
        throw ShapeError("pretrained network input " + shape_string(pretrained.input_shape()) +
                         " does not match the observation encoding " + shape_string(expected) +
                         "; re-encode the environment or retrain");
    }
    TrainParams budget = params;
    budget.episodes = static_cast<int>(std::lround(budget_fraction * params.episodes));
    if (budget.episodes == 0) return pretrained;
    auto result = run_training(new_env, reward, budget, schedule, seed, pretrained);
    QNetwork net = result.network;
    if (details) *details = std::move(result);
    return net;
}

std::vector<TrajectoryLog> evaluate_network(QNetwork& net, const EnvConfig& env, const RewardConfig& reward,
                                            const TrainParams& params, const ScheduleParams& schedule,
                                            const EvalOptions& opts, std::uint64_t seed) {
    ScheduleParams policy_schedule = schedule;
    if (!opts.search_space) policy_schedule.t_nv_threshold = INT_MAX;
    std::vector<TrajectoryLog> logs;
    if (opts.lifelong) {
        Session session(env, reward, params, schedule, seed, net);
        for (int k = 0; k < opts.episodes; ++k) {
            auto out = session.episode(eval_episode_seed(seed, k), k, opts.epsilon, policy_schedule, true);
            logs.push_back(std::move(out.log));
        }
        net = session.online();
        return logs;
    }
    const EnvConfig world_cfg = materialize(env);
    if (net.input_shape() != observation_shape(params.obs)) {
        throw ShapeError("model input " + shape_string(net.input_shape()) + " does not match observation encoding " +
                         shape_string(observation_shape(params.obs)));
    }
    Rng rng(derive_seed(seed, "eval-agent"));
    for (int k = 0; k < opts.episodes; ++k) {
        auto policy = [&](const WorldState& w) {
            const auto q = net.forward_one(encode(w, world_cfg, params.obs));
            return kAllActions[select_action_from_q(q, opts.epsilon, w.t_nv, policy_schedule, rng)];
        };
        auto log = run_episode(world_cfg, reward, eval_episode_seed(seed, k), policy);
        log.episode = k;
        logs.push_back(std::move(log));
    }
    return logs;
}

std::vector<TrajectoryLog> evaluate_random(const EnvConfig& env, const RewardConfig& reward, int episodes,
                                           std::uint64_t seed) {
    const EnvConfig world_cfg = materialize(env);
    Rng rng(derive_seed(seed, "random-policy"));
    std::vector<TrajectoryLog> logs;
    for (int k = 0; k < episodes; ++k) {
        auto log = run_episode(world_cfg, reward, eval_episode_seed(seed, k),
                               [&](const WorldState&) { return kAllActions[uniform_index(rng, kNumActions)]; });
        log.episode = k;
        logs.push_back(std::move(log));
    }
    return logs;
}

}  // namespace uavtrack
