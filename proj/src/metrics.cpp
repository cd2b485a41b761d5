#include "uavtrack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "uavtrack/errors.hpp"

namespace uavtrack {

namespace {

void require_nonempty(const TrajectoryLog& log, const char* what) {
    if (log.steps.empty()) throw std::invalid_argument(std::string(what) + ": empty trajectory log");
}

template <typename F>
double mean_over(std::span<const TrajectoryLog> logs, const char* what, F per_episode) {
    if (logs.empty()) throw std::invalid_argument(std::string(what) + ": no episodes");
    double sum = 0.0;
    for (const auto& log : logs) sum += per_episode(log);
    return sum / double(logs.size());
}

double dist(const Vec2& a, const Vec2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::vector<std::size_t> spaced_indices(std::size_t n, std::size_t count) {
    std::vector<std::size_t> idx;
    if (count == 1) return {0};
    for (std::size_t i = 0; i < count; ++i) {
        idx.push_back(static_cast<std::size_t>(std::llround(double(i) * double(n - 1) / double(count - 1))));
    }
    return idx;
}

}  // namespace

double dis(const TrajectoryLog& log) {
    require_nonempty(log, "dis");
    double sum = 0.0;
    for (const auto& s : log.steps) sum += planar_distance(s.uav, s.target);
    return sum / double(log.steps.size());
}

double dis(std::span<const TrajectoryLog> logs) {
    return mean_over(logs, "dis", [](const auto& l) { return dis(l); });
}

double time_in_fov(const TrajectoryLog& log, TimeMode mode) {
    require_nonempty(log, "time_in_fov");
    const auto visible = std::count_if(log.steps.begin(), log.steps.end(), [](const auto& s) { return s.visible; });
    if (mode == TimeMode::percent) return 100.0 * double(visible) / double(log.steps.size());
    return double(visible);
}

double time_in_fov(std::span<const TrajectoryLog> logs, TimeMode mode) {
    return mean_over(logs, "time_in_fov", [mode](const auto& l) { return time_in_fov(l, mode); });
}

double rew(const TrajectoryLog& log, RewMode mode) {
    require_nonempty(log, "rew");
    double sum = 0.0;
    for (const auto& s : log.steps) sum += s.reward;
    return mode == RewMode::sum ? sum : sum / double(log.steps.size());
}

double rew(std::span<const TrajectoryLog> logs, RewMode mode) {
    return mean_over(logs, "rew", [mode](const auto& l) { return rew(l, mode); });
}

std::vector<Vec2> uav_path(const TrajectoryLog& log) {
    std::vector<Vec2> out;
    out.reserve(log.steps.size());
    for (const auto& s : log.steps) out.push_back({s.uav.x, s.uav.y});
    return out;
}

std::vector<Vec2> target_path(const TrajectoryLog& log) {
    std::vector<Vec2> out;
    out.reserve(log.steps.size());
    for (const auto& s : log.steps) out.push_back(s.target);
    return out;
}

std::vector<Checkpoint> place_checkpoints_dense(std::span<const Vec2> path, int count, double radius) {
    if (count < 2) throw std::invalid_argument("place_checkpoints_dense: count >= 2 required");
    if (path.size() < static_cast<std::size_t>(count)) {
        throw std::invalid_argument("place_checkpoints_dense: trajectory shorter than checkpoint count");
    }
    std::vector<Checkpoint> out;
    for (auto i : spaced_indices(path.size(), static_cast<std::size_t>(count))) out.push_back({path[i], radius});
    return out;
}

std::vector<Checkpoint> place_checkpoints_sparse(std::span<const Vec2> path, int max_count, double radius) {
    if (max_count < 2) throw std::invalid_argument("place_checkpoints_sparse: max_count >= 2 required");
    if (path.empty()) throw std::invalid_argument("place_checkpoints_sparse: empty trajectory");

    // Collapse repeated positions, then find direction changes.
    std::vector<std::size_t> distinct{0};
    for (std::size_t i = 1; i < path.size(); ++i)
        if (!(path[i] == path[distinct.back()])) distinct.push_back(i);

    struct Corner {
        std::size_t index;
        double turn;
    };
    std::vector<Corner> corners;
    for (std::size_t j = 1; j + 1 < distinct.size(); ++j) {
        const Vec2& a = path[distinct[j - 1]];
        const Vec2& b = path[distinct[j]];
        const Vec2& c = path[distinct[j + 1]];
        const double h_in = std::atan2(b.y - a.y, b.x - a.x);
        const double h_out = std::atan2(c.y - b.y, c.x - b.x);
        double turn = std::abs(h_out - h_in);
        if (turn > std::numbers::pi) turn = 2.0 * std::numbers::pi - turn;
        if (turn > 1e-9) corners.push_back({distinct[j], turn});
    }
    const auto keep = static_cast<std::size_t>(max_count - 2);
    if (corners.size() > keep) {
        std::stable_sort(corners.begin(), corners.end(), [](const auto& x, const auto& y) { return x.turn > y.turn; });
        corners.resize(keep);
        std::sort(corners.begin(), corners.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
    }
    std::vector<Checkpoint> out{{path.front(), radius}};
    for (const auto& c : corners) out.push_back({path[c.index], radius});
    out.push_back({path.back(), radius});
    return out;
}

double tracking_time_pct(std::span<const Vec2> uav, std::span<const Checkpoint> checkpoints) {
    if (uav.empty() || checkpoints.empty()) throw std::invalid_argument("tracking_time_pct: empty input");
    std::size_t inside = 0;
    for (const auto& p : uav) {
        const bool hit = std::any_of(checkpoints.begin(), checkpoints.end(),
                                     [&](const auto& c) { return dist(p, c.position) <= c.radius; });
        if (hit) ++inside;
    }
    return 100.0 * double(inside) / double(uav.size());
}

double tracking_success_pct(std::span<const Vec2> uav, std::span<const Checkpoint> checkpoints) {
    if (uav.empty() || checkpoints.empty()) throw std::invalid_argument("tracking_success_pct: empty input");
    std::size_t reached = 0;
    for (const auto& c : checkpoints) {
        const bool hit = std::any_of(uav.begin(), uav.end(), [&](const auto& p) { return dist(p, c.position) <= c.radius; });
        if (hit) ++reached;
    }
    return 100.0 * double(reached) / double(checkpoints.size());
}

ErrorMetrics error_metrics(std::span<const Vec2> uav, std::span<const Vec2> target, int k) {
    if (k < 1) throw std::invalid_argument("error_metrics: K >= 1 required");
    const std::size_t n = std::min(uav.size(), target.size());
    if (n < static_cast<std::size_t>(k)) throw std::invalid_argument("error_metrics: fewer common samples than K");
    double sq = 0.0, l1 = 0.0, inv = 0.0, log_sum = 0.0;
    for (auto i : spaced_indices(n, static_cast<std::size_t>(k))) {
        const double dx = uav[i].x - target[i].x;
        const double dy = uav[i].y - target[i].y;
        const double d1 = std::abs(dx) + std::abs(dy);
        const double floored = std::max(d1, kErrorFloor);
        sq += dx * dx + dy * dy;
        l1 += d1;
        inv += 1.0 / floored;
        log_sum += std::log(floored);
    }
    const auto kk = double(k);
    return {std::sqrt(sq / kk), l1 / kk, kk / inv, std::exp(log_sum / kk)};
}

double computation_time(double t_tr_hours, double t_ev_seconds, double r) {
    if (r < 1.0) throw DomainError("computation_time: r >= 1 required");
    if (t_tr_hours < 0.0 || t_ev_seconds < 0.0) throw DomainError("computation_time: times must be >= 0");
    return t_tr_hours * std::pow(t_ev_seconds, r);
}

MetricsReport compute_report(std::span<const TrajectoryLog> logs, const MetricsOptions& opts, double side_s) {
    if (logs.empty()) throw std::invalid_argument("compute_report: no episodes");
    const double radius = opts.checkpoint_radius > 0.0 ? opts.checkpoint_radius : 0.1 * side_s;
    MetricsReport r;
    r.episodes = static_cast<int>(logs.size());
    r.dis = dis(logs);
    r.time_in_fov = time_in_fov(logs, opts.time_mode);
    r.rew = rew(logs, opts.rew_mode);
    for (const auto& log : logs) {
        const auto up = uav_path(log);
        const auto tp = target_path(log);
        const int dense = std::min<int>(opts.dense_checkpoints, static_cast<int>(tp.size()));
        r.tracking_time_pct += tracking_time_pct(up, place_checkpoints_dense(tp, std::max(dense, 2), radius));
        r.tracking_success_pct += tracking_success_pct(up, place_checkpoints_sparse(tp, opts.sparse_checkpoints, radius));
        const auto e = error_metrics(up, tp, std::min<int>(opts.k, static_cast<int>(tp.size())));
        r.rmse += e.rmse;
        r.aee += e.aee;
        r.ahe += e.ahe;
        r.age += e.age;
    }
    const auto n = double(logs.size());
    r.tracking_time_pct /= n;
    r.tracking_success_pct /= n;
    r.rmse /= n;
    r.aee /= n;
    r.ahe /= n;
    r.age /= n;
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["episodes"] = r.episodes;
    j["dis"] = r.dis;
    j["time"] = r.time_in_fov;
    j["rew"] = r.rew;
    j["tracking_time_pct"] = r.tracking_time_pct;
    j["tracking_success_pct"] = r.tracking_success_pct;
    j["rmse"] = r.rmse;
    j["aee"] = r.aee;
    j["ahe"] = r.ahe;
    j["age"] = r.age;
    j["ct"] = r.ct ? nlohmann::json(*r.ct) : nlohmann::json(nullptr);
    j["param_count"] = r.param_count ? nlohmann::json(*r.param_count) : nlohmann::json(nullptr);
    return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.episodes = j.at("episodes").get<int>();
    r.dis = j.at("dis").get<double>();
    r.time_in_fov = j.at("time").get<double>();
    r.rew = j.at("rew").get<double>();
    r.tracking_time_pct = j.at("tracking_time_pct").get<double>();
    r.tracking_success_pct = j.at("tracking_success_pct").get<double>();
    r.rmse = j.at("rmse").get<double>();
    r.aee = j.at("aee").get<double>();
    r.ahe = j.at("ahe").get<double>();
    r.age = j.at("age").get<double>();
    if (j.contains("ct") && !j["ct"].is_null()) r.ct = j["ct"].get<double>();
    if (j.contains("param_count") && !j["param_count"].is_null()) r.param_count = j["param_count"].get<std::size_t>();
    return r;
}

std::string to_text(const MetricsReport& r) {
    std::ostringstream os;
    os << fmt::format("episodes: {}\n", r.episodes);
    os << fmt::format("dis: {} (grid units)\n", r.dis);
    os << fmt::format("time: {} (steps in FOV)\n", r.time_in_fov);
    os << fmt::format("rew: {} (reward)\n", r.rew);
    os << fmt::format("tracking_time_pct: {} (%)\n", r.tracking_time_pct);
    os << fmt::format("tracking_success_pct: {} (%)\n", r.tracking_success_pct);
    os << fmt::format("rmse: {} (grid units)\n", r.rmse);
    os << fmt::format("aee: {} (grid units)\n", r.aee);
    os << fmt::format("ahe: {} (grid units)\n", r.ahe);
    os << fmt::format("age: {} (grid units)\n", r.age);
    os << "ct: " << (r.ct ? fmt::format("{} (hours x seconds^r)", *r.ct) : std::string("n/a")) << '\n';
    os << "param_count: " << (r.param_count ? std::to_string(*r.param_count) : std::string("n/a")) << '\n';
    return os.str();
}

bool higher_is_better(const std::string& metric) {
    return metric == "time" || metric == "rew" || metric == "tracking_time_pct" || metric == "tracking_success_pct";
}

}  // namespace uavtrack
