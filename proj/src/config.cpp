#include "uavtrack/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "uavtrack/errors.hpp"

namespace uavtrack {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

struct TypeMismatch {
    std::string expected;
};

template <typename T>
T parse_number(std::string_view s) {
    T v{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (s.empty() || ec != std::errc() || ptr != end) {
        if constexpr (std::is_floating_point_v<T>) throw TypeMismatch{"number"};
        else throw TypeMismatch{"integer"};
    }
    return v;
}

bool parse_bool(std::string_view s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw TypeMismatch{"true|false"};
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

template <typename E>
struct EnumNames {
    std::vector<std::pair<E, std::string_view>> names;

    std::string_view name(E e) const {
        for (const auto& [v, n] : names)
            if (v == e) return n;
        return "?";
    }
    E parse(std::string_view s) const {
        for (const auto& [v, n] : names)
            if (n == s) return v;
        std::string options;
        for (const auto& [v, n] : names) options += (options.empty() ? "" : "|") + std::string(n);
        throw TypeMismatch{options};
    }
};

const EnumNames<Algo> kAlgos{{{Algo::dqn, "dqn"}, {Algo::ddqn, "ddqn"}, {Algo::baseline, "baseline"}, {Algo::random, "random"}}};
const EnumNames<DdqnMode> kDdqnModes{{{DdqnMode::standard, "standard"}, {DdqnMode::symmetric, "symmetric"}}};
const EnumNames<WindMode> kWindModes{
    {{WindMode::none, "none"}, {WindMode::static_direction, "static"}, {WindMode::random_direction, "random"}}};
const EnumNames<FovShape> kFovShapes{{{FovShape::square, "square"}, {FovShape::circle, "circle"}}};
const EnumNames<ObstructionModel> kObstructions{
    {{ObstructionModel::geometric, "geometric"}, {ObstructionModel::closed_form, "closed_form"}}};
const EnumNames<EncodingMode> kEncodings{{{EncodingMode::grid, "grid"}, {EncodingMode::vector, "vector"}}};
const EnumNames<RewMode> kRewModes{{{RewMode::mean, "mean"}, {RewMode::sum, "sum"}}};
const EnumNames<TimeMode> kTimeModes{{{TimeMode::steps, "steps"}, {TimeMode::percent, "percent"}}};

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename T, typename Ref>
Field scalar(std::string key, Ref ref) {
    Field f{std::move(key), {}, {}};
    f.get = [ref](const RunConfig& c) {
        const T& v = ref(const_cast<RunConfig&>(c));
        if constexpr (std::is_same_v<T, bool>) return std::string(v ? "true" : "false");
        else if constexpr (std::is_floating_point_v<T>) return fmt_double(v);
        else return std::to_string(v);
    };
    f.set = [ref](RunConfig& c, std::string_view s) {
        if constexpr (std::is_same_v<T, bool>) ref(c) = parse_bool(s);
        else ref(c) = parse_number<T>(s);
    };
    return f;
}

template <typename E, typename Ref>
Field enumerated(std::string key, const EnumNames<E>& names, Ref ref) {
    Field f{std::move(key), {}, {}};
    f.get = [&names, ref](const RunConfig& c) { return std::string(names.name(ref(const_cast<RunConfig&>(c)))); };
    f.set = [&names, ref](RunConfig& c, std::string_view s) { ref(c) = names.parse(s); };
    return f;
}

std::vector<double> parse_tuple(std::string_view s, std::size_t n) {
    const auto parts = split(s, ',');
    if (parts.size() != n) throw TypeMismatch{std::to_string(n) + " comma-separated numbers"};
    std::vector<double> out;
    for (auto p : parts) {
        try {
            out.push_back(parse_number<double>(p));
        } catch (const TypeMismatch&) {
            throw TypeMismatch{std::to_string(n) + " comma-separated numbers"};
        }
    }
    return out;
}

#define REF(expr) [](RunConfig & c) -> auto& { return c.expr; }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(scalar<int>("env.side_s", REF(env.side_s)));
        f.push_back(scalar<int>("env.n_obstacles", REF(env.n_obstacles)));
        f.push_back(scalar<double>("env.h_min", REF(env.h_min)));
        f.push_back(scalar<double>("env.h_max", REF(env.h_max)));
        f.push_back(scalar<int>("env.n_h", REF(env.n_h)));
        f.push_back(scalar<double>("env.theta_fov", REF(env.theta_fov)));
        f.push_back(scalar<double>("env.wind.speed", REF(env.wind.speed)));
        f.push_back(enumerated("env.wind.mode", kWindModes, REF(env.wind.mode)));
        Field dir{"env.wind.dir", {}, {}};
        dir.get = [](const RunConfig& c) {
            return fmt_double(c.env.wind.static_dir.x) + ", " + fmt_double(c.env.wind.static_dir.y);
        };
        dir.set = [](RunConfig& c, std::string_view s) {
            const auto v = parse_tuple(s, 2);
            c.env.wind.static_dir = {v[0], v[1]};
        };
        f.push_back(dir);
        f.push_back(scalar<int>("env.road_spacing", REF(env.road_spacing)));
        f.push_back(scalar<int>("env.t_max", REF(env.t_max)));
        f.push_back(scalar<int>("env.uav_speed", REF(env.uav_speed)));
        f.push_back(scalar<int>("env.target_speed", REF(env.target_speed)));
        f.push_back(scalar<std::uint64_t>("env.seed", REF(env.seed)));
        Field spawn{"env.uav_spawn", {}, {}};
        spawn.get = [](const RunConfig& c) {
            if (!c.env.uav_spawn) return std::string("center");
            return fmt_double(c.env.uav_spawn->x) + ", " + fmt_double(c.env.uav_spawn->y);
        };
        spawn.set = [](RunConfig& c, std::string_view s) {
            if (s == "center") {
                c.env.uav_spawn.reset();
                return;
            }
            const auto v = parse_tuple(s, 2);
            c.env.uav_spawn = Vec2{v[0], v[1]};
        };
        f.push_back(spawn);
        f.push_back(enumerated("env.fov_shape", kFovShapes, REF(env.fov_shape)));
        f.push_back(enumerated("env.obstruction", kObstructions, REF(env.obstruction)));
        f.push_back(scalar<double>("env.margin_fraction", REF(env.margin_fraction)));

        f.push_back(scalar<double>("reward.r_collision", REF(reward.r_collision)));
        f.push_back(scalar<double>("reward.r_obstruction", REF(reward.r_obstruction)));
        f.push_back(scalar<double>("reward.r_visible_dist", REF(reward.r_visible_dist)));
        f.push_back(scalar<double>("reward.r_visible_height", REF(reward.r_visible_height)));
        f.push_back(scalar<double>("reward.r_nonvisible", REF(reward.r_nonvisible)));
        f.push_back(scalar<double>("reward.beta", REF(reward.beta)));
        f.push_back(scalar<double>("reward.dist_floor", REF(reward.dist_floor)));
        f.push_back(scalar<bool>("reward.inverted_decay", REF(reward.inverted_decay)));
        f.push_back(scalar<int>("reward.t_cap", REF(reward.t_cap)));

        f.push_back(scalar<double>("train.gamma", REF(train.gamma)));
        f.push_back(scalar<double>("train.lr", REF(train.lr)));
        f.push_back(scalar<int>("train.tau", REF(train.tau)));
        f.push_back(scalar<int>("train.batch_size", REF(train.batch_size)));
        f.push_back(scalar<int>("train.episodes", REF(train.episodes)));
        f.push_back(enumerated("train.algo", kAlgos, REF(train.algo)));
        f.push_back(enumerated("train.ddqn_mode", kDdqnModes, REF(train.ddqn_mode)));
        f.push_back(scalar<bool>("train.lifelong", REF(train.lifelong)));
        f.push_back(scalar<int>("train.warmup", REF(train.warmup)));
        f.push_back(scalar<int>("train.replay_capacity", REF(train.replay_capacity)));
        f.push_back(scalar<double>("train.reward_scale", REF(train.reward_scale)));
        f.push_back(scalar<double>("train.grad_clip", REF(train.grad_clip)));
        f.push_back(enumerated("train.encoding", kEncodings, REF(train.obs.mode)));
        f.push_back(scalar<int>("train.crop", REF(train.obs.crop)));
        f.push_back(scalar<double>("train.cell", REF(train.obs.cell)));
        f.push_back(scalar<double>("train.staleness_decay", REF(train.obs.staleness_decay)));
        f.push_back(scalar<int>("train.hidden", REF(train.hidden)));
        f.push_back(scalar<int>("train.conv_channels", REF(train.conv_channels)));
        f.push_back(scalar<bool>("train.batchnorm", REF(train.batchnorm)));
        f.push_back(scalar<int>("train.checkpoint_every", REF(train.checkpoint_every)));

        f.push_back(scalar<double>("schedule.p_sat", REF(schedule.p_sat)));
        f.push_back(scalar<double>("schedule.alpha", REF(schedule.alpha)));
        f.push_back(scalar<double>("schedule.p_ss", REF(schedule.p_ss)));
        f.push_back(scalar<int>("schedule.t_nv_threshold", REF(schedule.t_nv_threshold)));

        f.push_back(scalar<double>("baseline.fov_theta", REF(baseline.fov_theta)));
        f.push_back(scalar<int>("baseline.avoid_lookahead", REF(baseline.avoid_lookahead)));

        f.push_back(scalar<int>("metrics.k", REF(metrics.k)));
        f.push_back(scalar<int>("metrics.dense_checkpoints", REF(metrics.dense_checkpoints)));
        f.push_back(scalar<int>("metrics.sparse_checkpoints", REF(metrics.sparse_checkpoints)));
        f.push_back(scalar<double>("metrics.checkpoint_radius", REF(metrics.checkpoint_radius)));
        f.push_back(enumerated("metrics.rew_mode", kRewModes, REF(metrics.rew_mode)));
        f.push_back(enumerated("metrics.time_mode", kTimeModes, REF(metrics.time_mode)));

        f.push_back(scalar<int>("eval.episodes", REF(eval.episodes)));
        f.push_back(scalar<double>("eval.epsilon", REF(eval.epsilon)));
        f.push_back(scalar<bool>("eval.search_space", REF(eval.search_space)));

        Field out{"output.dir", {}, {}};
        out.get = [](const RunConfig& c) { return c.output_dir; };
        out.set = [](RunConfig& c, std::string_view s) { c.output_dir = std::string(s); };
        f.push_back(out);
        return f;
    }();
    return table;
}

#undef REF

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

constexpr std::string_view kObstaclePrefix = "env.obstacle.";

template <typename F>
void with_section(const char* section, F&& check) {
    try {
        check();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(section) + ": " + e.what());
    }
}

}  // namespace

std::string_view to_string(Algo a) { return kAlgos.name(a); }

Algo algo_from_string(std::string_view s) {
    try {
        return kAlgos.parse(s);
    } catch (const TypeMismatch& m) {
        throw ConfigError("unknown algo '" + std::string(s) + "', expected " + m.expected);
    }
}

void validate(const RunConfig& c) {
    with_section("env", [&] { validate(c.env); });
    with_section("reward", [&] { validate(c.reward); });
    with_section("train", [&] { validate(c.train); });
    with_section("schedule", [&] { validate(c.schedule); });
    with_section("baseline", [&] { validate(c.baseline); });
    with_section("metrics", [&] {
        if (c.metrics.k < 1) throw ConfigError("k >= 1 violated");
        if (c.metrics.dense_checkpoints < 2) throw ConfigError("dense_checkpoints >= 2 violated");
        if (c.metrics.sparse_checkpoints < 2) throw ConfigError("sparse_checkpoints >= 2 violated");
    });
    with_section("eval", [&] {
        if (c.eval.episodes < 1) throw ConfigError("episodes >= 1 violated");
        if (!(c.eval.epsilon >= 0.0 && c.eval.epsilon <= 1.0)) throw ConfigError("epsilon ∈ [0,1] violated");
    });
    with_section("output", [&] {
        if (c.output_dir.empty()) throw ConfigError("dir non-empty violated");
    });
}

RunConfig parse_config_text(std::string_view text) {
    RunConfig cfg;
    std::map<std::string, int> seen;
    std::map<int, ObstacleSpec> obstacles;
    int line_no = 0;
    for (auto raw : split(text, '\n')) {
        ++line_no;
        const auto hash = raw.find('#');
        const auto line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("line {}: expected 'key = value'", line_no));
        }
        const std::string key(trim(line.substr(0, eq)));
        const auto value = trim(line.substr(eq + 1));
        if (!seen.emplace(key, line_no).second) {
            throw ConfigError(fmt::format("line {}: duplicate key '{}' (first set on line {})", line_no, key, seen[key]));
        }
        try {
            if (key.starts_with(kObstaclePrefix)) {
                const auto index = std::string_view(key).substr(kObstaclePrefix.size());
                int i = -1;
                try {
                    i = parse_number<int>(index);
                } catch (const TypeMismatch&) {
                }
                if (i < 0) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
                const auto v = parse_tuple(value, 4);
                obstacles[i] = ObstacleSpec{{v[0], v[1]}, v[2], v[3]};
                continue;
            }
            const Field* f = find_field(key);
            if (!f) throw ConfigError(fmt::format("line {}: unknown key '{}'", line_no, key));
            f->set(cfg, value);
        } catch (const TypeMismatch& m) {
            throw ConfigError(
                fmt::format("line {}: type mismatch for '{}': expected {}, got '{}'", line_no, key, m.expected, value));
        }
    }
    int expect = 0;
    for (const auto& [i, o] : obstacles) {
        if (i != expect++) throw ConfigError("env.obstacle indices must run 0, 1, 2, ... without gaps");
        cfg.env.obstacles.push_back(o);
    }
    validate(cfg);
    cfg.env = materialize(cfg.env);
    return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) { return parse_config_text(read_file(path)); }

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        out += f.key + " = " + f.get(cfg) + "\n";
        if (f.key == "env.n_obstacles") {
            for (std::size_t i = 0; i < cfg.env.obstacles.size(); ++i) {
                const auto& o = cfg.env.obstacles[i];
                out += fmt::format("{}{} = {}, {}, {}, {}\n", kObstaclePrefix, i, fmt_double(o.center.x),
                                   fmt_double(o.center.y), fmt_double(o.radius), fmt_double(o.height));
            }
        }
    }
    return out;
}

std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize_config(cfg)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

std::string trajectory_csv(const TrajectoryLog& log) {
    std::string out = fmt::format("# config_hash={} seed={} episode={}\n", log.config_hash, log.seed, log.episode);
    out += kTrajectoryHeader;
    out += '\n';
    for (const auto& s : log.steps) {
        out += fmt::format("{},{},{},{},{},{},{},{},{}\n", s.t, fmt_double(s.uav.x), fmt_double(s.uav.y),
                           fmt_double(s.uav.z), fmt_double(s.target.x), fmt_double(s.target.y), fmt_double(s.reward),
                           s.visible ? 1 : 0, to_string(s.branch));
    }
    return out;
}

TrajectoryLog parse_trajectory_csv(std::string_view text) {
    auto lines = split(text, '\n');
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.size() < 2) throw FormatError("trajectory: missing metadata or header line");
    TrajectoryLog log;
    const auto meta = lines[0];
    if (!meta.starts_with("# ")) throw FormatError("trajectory: first line must be '# config_hash=... seed=... episode=...'");
    std::istringstream ms{std::string(meta.substr(2))};
    std::string item;
    int found = 0;
    while (ms >> item) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw FormatError("trajectory: bad metadata item '" + item + "'");
        const auto k = item.substr(0, eq);
        const auto v = std::string_view(item).substr(eq + 1);
        try {
            if (k == "config_hash") log.config_hash = std::string(v), ++found;
            else if (k == "seed") log.seed = parse_number<std::uint64_t>(v), ++found;
            else if (k == "episode") log.episode = parse_number<int>(v), ++found;
        } catch (const TypeMismatch&) {
            throw FormatError("trajectory: bad metadata value '" + item + "'");
        }
    }
    if (found != 3) throw FormatError("trajectory: metadata needs config_hash, seed and episode");
    if (lines[1] != kTrajectoryHeader) {
        throw FormatError("trajectory: header must be exactly '" + std::string(kTrajectoryHeader) + "'");
    }
    for (std::size_t i = 2; i < lines.size(); ++i) {
        const auto cols = split(lines[i], ',');
        if (cols.size() != 9) throw FormatError(fmt::format("trajectory line {}: expected 9 columns", i + 1));
        try {
            StepRecord r;
            r.t = parse_number<int>(cols[0]);
            r.uav = {parse_number<double>(cols[1]), parse_number<double>(cols[2]), parse_number<double>(cols[3])};
            r.target = {parse_number<double>(cols[4]), parse_number<double>(cols[5])};
            r.reward = parse_number<double>(cols[6]);
            r.visible = parse_bool(cols[7]);
            r.branch = branch_from_string(cols[8]);
            log.steps.push_back(r);
        } catch (const TypeMismatch&) {
            throw FormatError(fmt::format("trajectory line {}: malformed value", i + 1));
        }
    }
    return log;
}

void write_trajectory(const std::filesystem::path& path, const TrajectoryLog& log) {
    write_file(path, trajectory_csv(log));
}

TrajectoryLog read_trajectory(const std::filesystem::path& path) { return parse_trajectory_csv(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace uavtrack
