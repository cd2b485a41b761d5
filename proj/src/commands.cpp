#include "uavtrack/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uavtrack/baseline.hpp"
#include "uavtrack/errors.hpp"
#include "uavtrack/learner.hpp"

namespace uavtrack {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
int guarded(const char* name, F&& body) {
    try {
        body();
        return 0;
    } catch (const std::exception& e) {
        std::cerr << name << ": error: " << e.what() << '\n';
        return 1;
    }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string episode_file(const std::string& prefix, int k) { return fmt::format("{}_{:04d}.csv", prefix, k); }

void write_logs(const fs::path& dir, const std::string& prefix, std::vector<TrajectoryLog>& logs,
                const std::string& hash) {
    for (auto& log : logs) {
        log.config_hash = hash;
        write_trajectory(dir / episode_file(prefix, log.episode), log);
    }
}

std::string stats_csv(const std::vector<EpisodeStats>& stats, const std::string& hash) {
    std::string out = fmt::format("# config_hash={}\nepisode,dis,time,rew,epsilon,loss_mean\n", hash);
    for (const auto& s : stats) {
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", s.episode, s.dis, s.time, s.rew, s.epsilon,
                           s.loss_mean);
    }
    return out;
}

fs::path out_dir(const fs::path& requested, const RunConfig& cfg) {
    return requested.empty() ? fs::path(cfg.output_dir) : requested;
}

bool learned(Algo a) { return a == Algo::dqn || a == Algo::ddqn; }

struct PolicyRun {
    std::vector<TrajectoryLog> logs;
    double t_ev_seconds = 0.0;
};

PolicyRun rollout(Algo algo, QNetwork* net, const RunConfig& cfg, const EvalOptions& opts, std::uint64_t seed) {
    const auto start = Clock::now();
    PolicyRun run;
    switch (algo) {
        case Algo::dqn:
        case Algo::ddqn:
            if (!net) throw ConfigError("algo " + std::string(to_string(algo)) + " needs a model");
            run.logs = evaluate_network(*net, cfg.env, cfg.reward, cfg.train, cfg.schedule, opts, seed);
            break;
        case Algo::baseline:
            run.logs = evaluate_baseline(cfg.env, cfg.reward, cfg.baseline, opts.episodes, seed);
            break;
        case Algo::random:
            run.logs = evaluate_random(cfg.env, cfg.reward, opts.episodes, seed);
            break;
    }
    run.t_ev_seconds = seconds_since(start) / std::max(opts.episodes, 1);
    return run;
}

struct LoadedModel {
    std::optional<Manifest> manifest;
    std::optional<QNetwork> net;
};

LoadedModel load_model(const fs::path& model) {
    LoadedModel out;
    fs::path weights = model;
    fs::path manifest = model.parent_path() / "manifest.json";
    if (fs::is_directory(model)) {
        weights = model / "weights.bin";
        manifest = model / "manifest.json";
    }
    if (fs::exists(manifest)) out.manifest = manifest_from_json(read_json(manifest));
    if (fs::exists(weights)) out.net = load_weights<float>(weights);
    else if (!out.manifest || out.manifest->has_weights) throw std::runtime_error("no weights at " + weights.string());
    return out;
}

void check_encoding(const QNetwork& net, const RunConfig& cfg) {
    const Shape expected = observation_shape(cfg.train.obs);
    if (net.input_shape() != expected || net.output_size() != kNumActions) {
        throw ShapeError("model input " + shape_string(net.input_shape()) + " is incompatible with the " +
                         (cfg.train.obs.mode == EncodingMode::grid ? "grid" : "vector") + " encoding " +
                         shape_string(expected));
    }
}

nlohmann::json eval_json(const MetricsReport& report, const std::string& algo, const std::string& hash,
                         double t_ev, std::optional<double> t_tr, double r) {
    auto j = to_json(report);
    j["algo"] = algo;
    j["config_hash"] = hash;
    j["t_ev_seconds"] = t_ev;
    j["t_tr_hours"] = t_tr ? nlohmann::json(*t_tr) : nlohmann::json(nullptr);
    j["r"] = r;
    return j;
}

}  // namespace

nlohmann::json to_json(const Manifest& m) {
    nlohmann::json j;
    j["config_hash"] = m.config_hash;
    j["seed"] = m.seed;
    j["algo"] = m.algo;
    j["episodes"] = m.episodes;
    j["t_tr_hours"] = m.t_tr_hours;
    j["weights"] = m.has_weights ? nlohmann::json("weights.bin") : nlohmann::json(nullptr);
    j["ct"] = m.has_weights ? "applicable" : "not applicable";
    j["param_count"] = m.param_count ? nlohmann::json(*m.param_count) : nlohmann::json(nullptr);
    j["config"] = m.config_text;
    return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
    try {
        Manifest m;
        m.config_text = j.at("config").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.algo = j.at("algo").get<std::string>();
        m.episodes = j.at("episodes").get<int>();
        m.t_tr_hours = j.at("t_tr_hours").get<double>();
        m.has_weights = !j.at("weights").is_null();
        if (!j.at("param_count").is_null()) m.param_count = j["param_count"].get<std::size_t>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

std::vector<ComparisonRow> compare_reports(const MetricsReport& a, const MetricsReport& b) {
    const auto ja = to_json(a);
    const auto jb = to_json(b);
    std::vector<ComparisonRow> rows;
    for (const char* m : {"dis", "time", "rew", "tracking_time_pct", "tracking_success_pct", "rmse", "aee", "ahe", "age"}) {
        ComparisonRow row{m, ja[m].get<double>(), jb[m].get<double>(), "tie"};
        const bool up = higher_is_better(m);
        if (row.a != row.b) row.winner = ((row.a > row.b) == up) ? "a" : "b";
        rows.push_back(row);
    }
    return rows;
}

std::string comparison_table(const std::string& name_a, const std::string& name_b,
                             const std::vector<ComparisonRow>& rows) {
    std::string out = fmt::format("metric,{},{},winner\n", name_a, name_b);
    for (const auto& r : rows) {
        const std::string winner = r.winner == "a" ? name_a : r.winner == "b" ? name_b : "tie";
        out += fmt::format("{},{:.17g},{:.17g},{}\n", r.metric, r.a, r.b, winner);
    }
    return out;
}

std::string curriculum_label(int from_obstacles, int to_obstacles) {
    return fmt::format("{}→{}", from_obstacles, to_obstacles);
}

void configure_logging() {
    const char* env = std::getenv("UAVTRACK_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

int cmd_train(const TrainArgs& args) {
    return guarded("train", [&] {
        const RunConfig file_cfg = parse_config(args.config);
        const std::string hash = config_hash(file_cfg);
        RunConfig cfg = file_cfg;
        if (args.algo) cfg.train.algo = algo_from_string(*args.algo);
        if (args.episodes) cfg.train.episodes = *args.episodes;
        validate(cfg);
        const fs::path out = out_dir(args.out, cfg);
        fs::create_directories(out);

        Manifest m{serialize_config(file_cfg), hash, args.seed, std::string(to_string(cfg.train.algo)),
                   cfg.train.episodes, 0.0, false, std::nullopt};
        spdlog::info("train {} for {} episodes, seed {}, config {}", m.algo, m.episodes, args.seed, hash);

        if (learned(cfg.train.algo)) {
            const auto start = Clock::now();
            EpisodeCallback on_episode;
            if (cfg.train.checkpoint_every > 0) {
                on_episode = [&](const EpisodeStats& s, const QNetwork& net) {
                    if ((s.episode + 1) % cfg.train.checkpoint_every == 0)
                        save_weights(net, out / "checkpoints" / fmt::format("weights_{:04d}.bin", s.episode + 1));
                };
            }
            auto result = run_training(cfg.env, cfg.reward, cfg.train, cfg.schedule, args.seed, std::nullopt, on_episode);
            m.t_tr_hours = seconds_since(start) / 3600.0;
            m.has_weights = true;
            m.param_count = param_count(result.network);
            save_weights(result.network, out / "weights.bin");
            write_logs(out / "trajectories", "episode", result.logs, hash);
            write_file(out / "training_stats.csv", stats_csv(result.stats, hash));
        } else {
            EvalOptions opts = cfg.eval;
            opts.episodes = cfg.train.episodes;
            auto logs = rollout(cfg.train.algo, nullptr, cfg, opts, args.seed).logs;
            write_logs(out / "trajectories", "episode", logs, hash);
        }
        write_file(out / "config.cfg", m.config_text);
        write_json(out / "manifest.json", to_json(m));
        spdlog::info("wrote {}", out.string());
    });
}

int cmd_eval(const EvalArgs& args) {
    return guarded("eval", [&] {
        LoadedModel model;
        if (args.model) model = load_model(*args.model);
        RunConfig cfg;
        if (args.config) cfg = parse_config(*args.config);
        else if (model.manifest) cfg = parse_config_text(model.manifest->config_text);
        else throw ConfigError("eval needs --config or a model with a manifest");
        const std::string hash = config_hash(cfg);
        if (model.manifest && model.manifest->config_hash != hash && !args.force) {
            throw ConfigError("config hash " + hash + " does not match the model's " + model.manifest->config_hash +
                              " (use --force to override)");
        }
        Algo algo = cfg.train.algo;
        if (model.manifest) algo = algo_from_string(model.manifest->algo);
        if (args.algo) algo = algo_from_string(*args.algo);
        if (learned(algo) && !model.net) throw ConfigError("--model is required for algo " + std::string(to_string(algo)));
        if (model.net && learned(algo)) check_encoding(*model.net, cfg);

        EvalOptions opts = cfg.eval;
        if (args.episodes) opts.episodes = *args.episodes;
        opts.lifelong = args.lifelong;
        if (opts.episodes < 1) throw ConfigError("--episodes >= 1 violated");

        const fs::path out = out_dir(args.out, cfg);
        QNetwork* net = model.net ? &*model.net : nullptr;
        auto run = rollout(algo, net, cfg, opts, args.seed);
        MetricsReport report = compute_report(run.logs, cfg.metrics, cfg.env.side_s);
        std::optional<double> t_tr;
        if (learned(algo)) {
            report.param_count = param_count(*net);
            t_tr = model.manifest ? model.manifest->t_tr_hours : 0.0;
            report.ct = computation_time(*t_tr, run.t_ev_seconds, args.r);
        }
        write_logs(out / "trajectories", "eval", run.logs, hash);
        write_json(out / "report.json", eval_json(report, std::string(to_string(algo)), hash, run.t_ev_seconds, t_tr, args.r));
        write_file(out / "report.txt", to_text(report));
        std::cout << to_text(report);

        if (args.compare) {
            const Algo other = algo_from_string(*args.compare);
            if (learned(other)) throw ConfigError("--compare takes baseline or random");
            auto other_run = rollout(other, nullptr, cfg, opts, args.seed);
            const auto other_report = compute_report(other_run.logs, cfg.metrics, cfg.env.side_s);
            const auto table = comparison_table(std::string(to_string(algo)), std::string(to_string(other)),
                                                compare_reports(report, other_report));
            write_file(out / "comparison.csv", table);
            write_json(out / ("report_" + std::string(to_string(other)) + ".json"),
                       eval_json(other_report, std::string(to_string(other)), hash, other_run.t_ev_seconds,
                                 std::nullopt, args.r));
            std::cout << table;
        }
    });
}

int cmd_sweep_drift(const SweepArgs& args) {
    return guarded("sweep-drift", [&] {
        if (args.speeds.empty()) throw ConfigError("--speeds needs at least one value");
        if (args.parallel < 1) throw ConfigError("--parallel >= 1 violated");
        const RunConfig base = parse_config(args.config);
        const std::string hash = config_hash(base);
        std::vector<Algo> algos;
        for (const auto& a : args.algos) algos.push_back(algo_from_string(a));
        if (algos.empty()) algos.push_back(base.train.algo);

        struct Point {
            double speed;
            Algo algo;
            MetricsReport report;
        };
        std::vector<Point> points;
        for (double s : args.speeds)
            for (Algo a : algos) points.push_back({s, a, {}});

        const fs::path out = out_dir(args.out, base);
        auto run_point = [&](Point& p) {
            RunConfig cfg = base;
            cfg.env.wind.speed = p.speed;
            if (args.mode) {
                const std::string mode = *args.mode;
                cfg.env.wind.mode = mode == "static"   ? WindMode::static_direction
                                    : mode == "random" ? WindMode::random_direction
                                    : mode == "none"   ? WindMode::none
                                                       : throw ConfigError("--mode must be none|static|random");
            }
            if (args.episodes) cfg.train.episodes = *args.episodes;
            if (args.eval_episodes) cfg.eval.episodes = *args.eval_episodes;
            validate(cfg);
            std::optional<QNetwork> net;
            if (learned(p.algo)) {
                cfg.train.algo = p.algo;
                net = run_training(cfg.env, cfg.reward, cfg.train, cfg.schedule, args.seed).network;
            }
            auto run = rollout(p.algo, net ? &*net : nullptr, cfg, cfg.eval, args.seed);
            p.report = compute_report(run.logs, cfg.metrics, cfg.env.side_s);
            spdlog::info("wind {} {}: DIS {:.3f} TIME {:.2f} REW {:.3f}", p.speed, to_string(p.algo), p.report.dis,
                         p.report.time_in_fov, p.report.rew);
        };

        std::atomic<std::size_t> next{0};
        std::mutex err_mutex;
        std::exception_ptr failure;
        auto worker = [&] {
            for (std::size_t i = next++; i < points.size(); i = next++) {
                try {
                    run_point(points[i]);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        const auto workers = std::min<std::size_t>(static_cast<std::size_t>(args.parallel), points.size());
        for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
        worker();
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);

        std::string csv = fmt::format("# config_hash={} seed={}\nwind,algo,dis,time,rew\n", hash, args.seed);
        for (const auto& p : points) {
            csv += fmt::format("{:.17g},{},{:.17g},{:.17g},{:.17g}\n", p.speed, to_string(p.algo), p.report.dis,
                               p.report.time_in_fov, p.report.rew);
        }
        write_file(out / "sweep.csv", csv);
        std::cout << csv;
    });
}

int cmd_curriculum(const CurriculumArgs& args) {
    return guarded("curriculum", [&] {
        if (args.budget < 0.0) throw ConfigError("--budget >= 0 violated");
        auto model = load_model(args.model);
        if (!model.net || !model.manifest) throw ConfigError("curriculum needs a trained model directory");
        const RunConfig source = parse_config_text(model.manifest->config_text);
        RunConfig target = parse_config(args.config);
        if (args.eval_episodes) target.eval.episodes = *args.eval_episodes;
        check_encoding(*model.net, target);
        const std::string hash = config_hash(target);
        const std::string label = curriculum_label(source.env.n_obstacles, target.env.n_obstacles);

        const auto start = Clock::now();
        QNetwork tuned = finetune(*model.net, target.env, target.reward, target.train, target.schedule, args.budget,
                                  args.seed);
        const double t_tr = model.manifest->t_tr_hours + seconds_since(start) / 3600.0;

        const fs::path out = out_dir(args.out, target);
        auto run = rollout(algo_from_string(model.manifest->algo), &tuned, target, target.eval, args.seed);
        MetricsReport report = compute_report(run.logs, target.metrics, target.env.side_s);
        report.param_count = param_count(tuned);
        report.ct = computation_time(t_tr, run.t_ev_seconds, 1.0);

        fs::create_directories(out);
        save_weights(tuned, out / "weights.bin");
        Manifest m{serialize_config(target), hash, args.seed, model.manifest->algo,
                   static_cast<int>(std::lround(args.budget * target.train.episodes)), t_tr, true, report.param_count};
        write_json(out / "manifest.json", to_json(m));
        write_logs(out / "trajectories", "eval", run.logs, hash);
        auto j = eval_json(report, model.manifest->algo, hash, run.t_ev_seconds, t_tr, 1.0);
        j["label"] = label;
        j["budget"] = args.budget;
        write_json(out / "curriculum.json", j);
        const std::string text = "label: " + label + "\n" + to_text(report);
        write_file(out / "curriculum.txt", text);
        std::cout << text;
    });
}

int cmd_metrics(const MetricsArgs& args) {
    return guarded("metrics", [&] {
        std::vector<fs::path> files;
        for (const auto& p : args.logs) {
            if (fs::is_directory(p)) {
                for (const auto& e : fs::directory_iterator(p))
                    if (e.path().extension() == ".csv") files.push_back(e.path());
            } else {
                files.push_back(p);
            }
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw ConfigError("no trajectory files given");
        std::vector<TrajectoryLog> logs;
        for (const auto& f : files) logs.push_back(read_trajectory(f));
        const RunConfig cfg = args.config ? parse_config(*args.config) : RunConfig{};
        const auto report = compute_report(logs, cfg.metrics, cfg.env.side_s);
        if (!args.out.empty()) {
            write_json(args.out / "report.json", to_json(report));
            write_file(args.out / "report.txt", to_text(report));
        }
        std::cout << to_text(report);
    });
}

}  // namespace uavtrack
