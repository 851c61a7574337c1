#pragma once
// Scenario configuration: mode profiles, policies, node fleet, and run
// parameters. Loaded from TOML (see docs/config.md for the schema),
// validated as a whole, and serializable back to an equivalent file.

#include <cstdint>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrmedge/domain.hpp"
#include "qrmedge/toml.hpp"

namespace qrmedge {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One simulated node as configured (per-run knobs live here; derived
// state lives in nodesim).
struct NodeSpec {
    std::string node_id;
    std::optional<ModeId> initial_mode;       // default: mode of the policy's top band
    std::optional<double> capacity_wh;        // default: global battery_capacity_wh
    std::optional<std::string> policy_name;   // default: global active_policy
    double input_fps = 25.0;
    int batch_frames = 64;
    std::int64_t telemetry_period_ms = 100;
    double switch_latency_s = 0.0;
    std::optional<std::uint64_t> seed;        // default: derived from run seed + node id
};

struct ScenarioConfig {
    std::uint64_t seed = 1;
    double battery_capacity_wh = 47.7;
    std::string active_policy;
    std::uint16_t port = 7171;
    double speedup = 1.0;
    double command_retry_timeout_s = 5.0;
    double avg_power_window_s = 60.0;
    std::string out_dir = "out";

    std::vector<std::string> class_labels;
    std::vector<double> class_distribution;   // normalized on validation
    std::vector<ModeProfile> modes;
    std::vector<Policy> policies;
    // Optional per-mode confusion overrides (row-stochastic KxK).
    std::map<ModeId, std::vector<std::vector<double>>> confusion_overrides;
    std::vector<NodeSpec> nodes;

    const Policy* find_policy(const std::string& name) const {
        for (const auto& p : policies)
            if (p.name == name) return &p;
        return nullptr;
    }

    const Policy& policy_for(const NodeSpec& node) const {
        const std::string& name = node.policy_name ? *node.policy_name : active_policy;
        const Policy* p = find_policy(name);
        if (!p) throw ConfigError("node '" + node.node_id + "': unknown policy '" + name + "'");
        return *p;
    }
};

// Normalizes weights into probabilities; rejects non-positive totals.
// Already-normalized inputs pass through bit-identically so that
// serialize/parse round trips are exact.
inline std::vector<double> normalize_distribution(std::vector<double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("class_distribution: negative weight");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("class_distribution: weights sum to zero");
    if (std::abs(total - 1.0) > 1e-12)
        for (double& w : weights) w /= total;
    return weights;
}

inline void validate_config(ScenarioConfig& cfg) {
    if (cfg.class_labels.empty()) throw ConfigError("class_labels must not be empty");
    {
        std::set<std::string> seen;
        for (const auto& l : cfg.class_labels)
            if (l.empty() || !seen.insert(l).second)
                throw ConfigError("class_labels must be unique and non-empty");
    }
    if (cfg.class_distribution.size() != cfg.class_labels.size())
        throw ConfigError("class_distribution length differs from class_labels");
    cfg.class_distribution = normalize_distribution(std::move(cfg.class_distribution));

    if (cfg.modes.empty()) throw ConfigError("at least one [[mode]] is required");
    {
        std::set<ModeId> ids;
        for (const auto& m : cfg.modes) {
            try {
                validate_profile(m);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
            if (!ids.insert(m.mode_id).second)
                throw ConfigError("duplicate mode id " + std::to_string(m.mode_id));
        }
    }

    if (cfg.policies.empty()) throw ConfigError("at least one [[policy]] is required");
    {
        std::set<std::string> names;
        for (const auto& p : cfg.policies) {
            if (p.name.empty() || !names.insert(p.name).second)
                throw ConfigError("policy names must be unique and non-empty");
            try {
                validate_policy(p, cfg.modes);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        }
    }
    if (!cfg.find_policy(cfg.active_policy))
        throw ConfigError("active_policy '" + cfg.active_policy + "' is not defined");

    const std::size_t k = cfg.class_labels.size();
    for (const auto& [mode, rows] : cfg.confusion_overrides) {
        if (!find_profile(cfg.modes, mode))
            throw ConfigError("[[confusion]] references unknown mode " + std::to_string(mode));
        if (rows.size() != k) throw ConfigError("[[confusion]] matrix must be KxK");
        for (const auto& row : rows) {
            if (row.size() != k) throw ConfigError("[[confusion]] matrix must be KxK");
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) throw ConfigError("[[confusion]] entries must be >= 0");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ConfigError("[[confusion]] rows must sum to 1");
        }
    }

    if (!(cfg.battery_capacity_wh > 0.0)) throw ConfigError("battery_capacity_wh must be > 0");
    if (!(cfg.speedup > 0.0)) throw ConfigError("speedup must be > 0");
    if (!(cfg.command_retry_timeout_s > 0.0))
        throw ConfigError("command_retry_timeout_s must be > 0");
    if (!(cfg.avg_power_window_s > 0.0)) throw ConfigError("avg_power_window_s must be > 0");

    std::set<std::string> node_ids;
    for (const auto& n : cfg.nodes) {
        if (n.node_id.empty() || !node_ids.insert(n.node_id).second)
            throw ConfigError("node ids must be unique and non-empty");
        if (n.initial_mode && !find_profile(cfg.modes, *n.initial_mode))
            throw ConfigError("node '" + n.node_id + "': unknown initial_mode");
        if (n.capacity_wh && !(*n.capacity_wh > 0.0))
            throw ConfigError("node '" + n.node_id + "': capacity_wh must be > 0");
        if (n.policy_name && !cfg.find_policy(*n.policy_name))
            throw ConfigError("node '" + n.node_id + "': unknown policy '" + *n.policy_name + "'");
        if (!(n.input_fps > 0.0)) throw ConfigError("node '" + n.node_id + "': input_fps <= 0");
        if (n.batch_frames < 1) throw ConfigError("node '" + n.node_id + "': batch_frames < 1");
        if (n.telemetry_period_ms < 1)
            throw ConfigError("node '" + n.node_id + "': telemetry_period_ms < 1");
        if (n.switch_latency_s < 0.0)
            throw ConfigError("node '" + n.node_id + "': switch_latency_s < 0");
    }
}

namespace cfgdetail {

inline double want_float(const toml::Value& v, const char* key) {
    if (!v.is_float() && !v.is_int()) throw ConfigError(std::string(key) + ": expected a number");
    return v.as_float();
}

inline std::int64_t want_int(const toml::Value& v, const char* key) {
    if (!v.is_int()) throw ConfigError(std::string(key) + ": expected an integer");
    return v.as_int();
}

inline std::string want_string(const toml::Value& v, const char* key) {
    if (!v.is_string()) throw ConfigError(std::string(key) + ": expected a string");
    return v.as_string();
}

template <typename F>
inline void with(const toml::Table& t, const char* key, F&& f) {
    if (const toml::Value* v = t.find(key)) f(*v);
}

inline void reject_unknown_keys(const toml::Table& t, const char* context,
                                std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : t.values) {
        bool known = false;
        for (const char* a : allowed) known = known || key == a;
        if (!known)
            throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
    }
}

inline std::vector<double> float_array(const toml::Value& v, const char* key) {
    if (!v.is_array()) throw ConfigError(std::string(key) + ": expected an array");
    std::vector<double> out;
    for (const auto& item : v.as_array()) out.push_back(want_float(item, key));
    return out;
}

}  // namespace cfgdetail

// Parses and validates a scenario configuration from TOML text.
inline ScenarioConfig parse_config(std::string_view text) {
    using namespace cfgdetail;
    toml::Table root;
    try {
        root = toml::parse(text);
    } catch (const toml::ParseError& e) {
        throw ConfigError(e.what());
    }

    reject_unknown_keys(root, "config",
                        {"seed", "battery_capacity_wh", "active_policy", "port", "speedup",
                         "command_retry_timeout_s", "avg_power_window_s", "out_dir",
                         "class_labels", "class_distribution"});
    for (const auto& [name, unused] : root.tables)
        throw ConfigError("config: unknown table [" + name + "]");
    for (const auto& [name, unused] : root.table_arrays)
        if (name != "mode" && name != "policy" && name != "confusion" && name != "node")
            throw ConfigError("config: unknown table array [[" + name + "]]");

    ScenarioConfig cfg;
    with(root, "seed", [&](auto& v) { cfg.seed = static_cast<std::uint64_t>(want_int(v, "seed")); });
    with(root, "battery_capacity_wh",
         [&](auto& v) { cfg.battery_capacity_wh = want_float(v, "battery_capacity_wh"); });
    with(root, "active_policy",
         [&](auto& v) { cfg.active_policy = want_string(v, "active_policy"); });
    with(root, "port", [&](auto& v) {
        const auto p = want_int(v, "port");
        if (p < 0 || p > 65535) throw ConfigError("port out of range");
        cfg.port = static_cast<std::uint16_t>(p);
    });
    with(root, "speedup", [&](auto& v) { cfg.speedup = want_float(v, "speedup"); });
    with(root, "command_retry_timeout_s",
         [&](auto& v) { cfg.command_retry_timeout_s = want_float(v, "command_retry_timeout_s"); });
    with(root, "avg_power_window_s",
         [&](auto& v) { cfg.avg_power_window_s = want_float(v, "avg_power_window_s"); });
    with(root, "out_dir", [&](auto& v) { cfg.out_dir = want_string(v, "out_dir"); });
    with(root, "class_labels", [&](auto& v) {
        if (!v.is_array()) throw ConfigError("class_labels: expected an array");
        for (const auto& item : v.as_array())
            cfg.class_labels.push_back(want_string(item, "class_labels"));
    });
    with(root, "class_distribution",
         [&](auto& v) { cfg.class_distribution = float_array(v, "class_distribution"); });

    if (auto it = root.table_arrays.find("mode"); it != root.table_arrays.end()) {
        for (const auto& t : it->second) {
            reject_unknown_keys(t, "[[mode]]",
                                {"id", "model", "model_size_mb", "gpu_power_w",
                                 "device_power_w", "throughput_fps", "accuracy_pct", "f1_pct"});
            ModeProfile m;
            with(t, "id", [&](auto& v) { m.mode_id = static_cast<ModeId>(want_int(v, "mode.id")); });
            with(t, "model", [&](auto& v) { m.model_name = want_string(v, "mode.model"); });
            with(t, "model_size_mb",
                 [&](auto& v) { m.model_size_mb = want_float(v, "mode.model_size_mb"); });
            with(t, "gpu_power_w", [&](auto& v) { m.gpu_power_w = want_float(v, "mode.gpu_power_w"); });
            with(t, "device_power_w",
                 [&](auto& v) { m.device_power_w = want_float(v, "mode.device_power_w"); });
            with(t, "throughput_fps",
                 [&](auto& v) { m.throughput_fps = want_float(v, "mode.throughput_fps"); });
            with(t, "accuracy_pct",
                 [&](auto& v) { m.accuracy_pct = want_float(v, "mode.accuracy_pct"); });
            with(t, "f1_pct", [&](auto& v) { m.f1_pct = want_float(v, "mode.f1_pct"); });
            cfg.modes.push_back(std::move(m));
        }
    }

    if (auto it = root.table_arrays.find("policy"); it != root.table_arrays.end()) {
        for (const auto& t : it->second) {
            reject_unknown_keys(t, "[[policy]]", {"name", "bands"});
            Policy p;
            with(t, "name", [&](auto& v) { p.name = want_string(v, "policy.name"); });
            with(t, "bands", [&](auto& v) {
                if (!v.is_array()) throw ConfigError("policy.bands: expected an array");
                for (const auto& band : v.as_array()) {
                    if (!band.is_array() || band.as_array().size() != 3)
                        throw ConfigError("policy.bands: each band is [upper, lower, mode]");
                    const auto& parts = band.as_array();
                    PolicyBand b;
                    b.upper_pct = want_float(parts[0], "policy.bands");
                    b.lower_pct = want_float(parts[1], "policy.bands");
                    b.mode = static_cast<ModeId>(want_int(parts[2], "policy.bands"));
                    p.bands.push_back(b);
                }
            });
            cfg.policies.push_back(std::move(p));
        }
    }

    if (auto it = root.table_arrays.find("confusion"); it != root.table_arrays.end()) {
        for (const auto& t : it->second) {
            reject_unknown_keys(t, "[[confusion]]", {"mode", "rows"});
            ModeId mode = 0;
            bool have_mode = false;
            with(t, "mode", [&](auto& v) {
                mode = static_cast<ModeId>(want_int(v, "confusion.mode"));
                have_mode = true;
            });
            if (!have_mode) throw ConfigError("[[confusion]] requires a mode key");
            std::vector<std::vector<double>> rows;
            with(t, "rows", [&](auto& v) {
                if (!v.is_array()) throw ConfigError("confusion.rows: expected an array");
                for (const auto& row : v.as_array()) rows.push_back(float_array(row, "confusion.rows"));
            });
            if (!cfg.confusion_overrides.emplace(mode, std::move(rows)).second)
                throw ConfigError("duplicate [[confusion]] for mode " + std::to_string(mode));
        }
    }

    if (auto it = root.table_arrays.find("node"); it != root.table_arrays.end()) {
        for (const auto& t : it->second) {
            reject_unknown_keys(t, "[[node]]",
                                {"id", "initial_mode", "capacity_wh", "policy", "input_fps",
                                 "batch_frames", "telemetry_period_ms", "switch_latency_s",
                                 "seed"});
            NodeSpec n;
            with(t, "id", [&](auto& v) { n.node_id = want_string(v, "node.id"); });
            with(t, "initial_mode", [&](auto& v) {
                n.initial_mode = static_cast<ModeId>(want_int(v, "node.initial_mode"));
            });
            with(t, "capacity_wh", [&](auto& v) { n.capacity_wh = want_float(v, "node.capacity_wh"); });
            with(t, "policy", [&](auto& v) { n.policy_name = want_string(v, "node.policy"); });
            with(t, "input_fps", [&](auto& v) { n.input_fps = want_float(v, "node.input_fps"); });
            with(t, "batch_frames", [&](auto& v) {
                n.batch_frames = static_cast<int>(want_int(v, "node.batch_frames"));
            });
            with(t, "telemetry_period_ms",
                 [&](auto& v) { n.telemetry_period_ms = want_int(v, "node.telemetry_period_ms"); });
            with(t, "switch_latency_s",
                 [&](auto& v) { n.switch_latency_s = want_float(v, "node.switch_latency_s"); });
            with(t, "seed", [&](auto& v) {
                n.seed = static_cast<std::uint64_t>(want_int(v, "node.seed"));
            });
            cfg.nodes.push_back(std::move(n));
        }
    }

    validate_config(cfg);
    return cfg;
}

namespace cfgdetail {

// Shortest decimal form that round-trips; ".0" appended so the value
// reads back as a float.
inline std::string format_double(double v) {
    char buf[48];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
        s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
        s += ".0";
    return s;
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace cfgdetail

inline std::string serialize_config(const ScenarioConfig& cfg) {
    using cfgdetail::format_double;
    using cfgdetail::quote;
    std::ostringstream os;
    os << "seed = " << cfg.seed << '\n';
    os << "battery_capacity_wh = " << format_double(cfg.battery_capacity_wh) << '\n';
    os << "active_policy = " << quote(cfg.active_policy) << '\n';
    os << "port = " << cfg.port << '\n';
    os << "speedup = " << format_double(cfg.speedup) << '\n';
    os << "command_retry_timeout_s = " << format_double(cfg.command_retry_timeout_s) << '\n';
    os << "avg_power_window_s = " << format_double(cfg.avg_power_window_s) << '\n';
    os << "out_dir = " << quote(cfg.out_dir) << '\n';

    os << "class_labels = [";
    for (std::size_t i = 0; i < cfg.class_labels.size(); ++i)
        os << (i ? ", " : "") << quote(cfg.class_labels[i]);
    os << "]\n";
    os << "class_distribution = [";
    for (std::size_t i = 0; i < cfg.class_distribution.size(); ++i)
        os << (i ? ", " : "") << format_double(cfg.class_distribution[i]);
    os << "]\n";

    for (const auto& m : cfg.modes) {
        os << "\n[[mode]]\n";
        os << "id = " << m.mode_id << '\n';
        os << "model = " << quote(m.model_name) << '\n';
        os << "model_size_mb = " << format_double(m.model_size_mb) << '\n';
        os << "gpu_power_w = " << format_double(m.gpu_power_w) << '\n';
        os << "device_power_w = " << format_double(m.device_power_w) << '\n';
        os << "throughput_fps = " << format_double(m.throughput_fps) << '\n';
        os << "accuracy_pct = " << format_double(m.accuracy_pct) << '\n';
        os << "f1_pct = " << format_double(m.f1_pct) << '\n';
    }

    for (const auto& p : cfg.policies) {
        os << "\n[[policy]]\n";
        os << "name = " << quote(p.name) << '\n';
        os << "bands = [";
        for (std::size_t i = 0; i < p.bands.size(); ++i) {
            const auto& b = p.bands[i];
            os << (i ? ", " : "") << '[' << format_double(b.upper_pct) << ", "
               << format_double(b.lower_pct) << ", " << b.mode << ']';
        }
        os << "]\n";
    }

    for (const auto& [mode, rows] : cfg.confusion_overrides) {
        os << "\n[[confusion]]\n";
        os << "mode = " << mode << '\n';
        os << "rows = [\n";
        for (const auto& row : rows) {
            os << "  [";
            for (std::size_t i = 0; i < row.size(); ++i)
                os << (i ? ", " : "") << format_double(row[i]);
            os << "],\n";
        }
        os << "]\n";
    }

    for (const auto& n : cfg.nodes) {
        os << "\n[[node]]\n";
        os << "id = " << quote(n.node_id) << '\n';
        if (n.initial_mode) os << "initial_mode = " << *n.initial_mode << '\n';
        if (n.capacity_wh) os << "capacity_wh = " << format_double(*n.capacity_wh) << '\n';
        if (n.policy_name) os << "policy = " << quote(*n.policy_name) << '\n';
        os << "input_fps = " << format_double(n.input_fps) << '\n';
        os << "batch_frames = " << n.batch_frames << '\n';
        os << "telemetry_period_ms = " << n.telemetry_period_ms << '\n';
        os << "switch_latency_s = " << format_double(n.switch_latency_s) << '\n';
        if (n.seed) os << "seed = " << *n.seed << '\n';
    }
    return os.str();
}

inline bool config_equal(const ScenarioConfig& a, const ScenarioConfig& b) {
    return serialize_config(a) == serialize_config(b);
}

// Bundled defaults: the three operating modes, the seven reconfiguration
// policies, the 18-class workload mix, and one node. `evaluate --all`
// and `simulate` work out of the box on this configuration.
inline constexpr const char* kDefaultConfigToml = R"TOML(# qrm-edge default scenario configuration
seed = 1
battery_capacity_wh = 47.7
active_policy = "scenario7"
port = 7171
speedup = 1.0
command_retry_timeout_s = 5.0
avg_power_window_s = 60.0
out_dir = "out"

class_labels = [
  "bandaging", "blowing nose or sneezing", "cleaning floor", "cooking",
  "eating", "falling down", "hitting", "lying on bed or sofa",
  "lying on the floor", "running", "sitting", "sleeping", "smoking",
  "standing up", "using inhaler", "walking", "watching tv", "no action",
]
# Test-split clip counts; normalized to probabilities on load.
class_distribution = [
  99, 187, 298, 332, 215, 121, 120, 40, 148, 49, 104, 96, 81, 66, 96, 148, 95, 200,
]

# throughput_fps values are placeholders (>= the 25 fps real-time floor);
# power and quality figures are the measured per-mode parameters.
[[mode]]
id = 0
model = "RGBI3D original"
model_size_mb = 49.9
gpu_power_w = 1.58
device_power_w = 4.77
throughput_fps = 27.0
accuracy_pct = 84.24
f1_pct = 78.14

[[mode]]
id = 1
model = "RGBI3D reduced"
model_size_mb = 47.6
gpu_power_w = 1.37
device_power_w = 4.43
throughput_fps = 33.0
accuracy_pct = 81.0
f1_pct = 74.99

[[mode]]
id = 2
model = "RGB2D Mobilenet GRU"
model_size_mb = 26.9
gpu_power_w = 0.25
device_power_w = 2.61
throughput_fps = 270.0
accuracy_pct = 76.27
f1_pct = 70.08

# Bands are [upper_pct, lower_pct, mode]; a percentage x is in the band
# when lower < x <= upper.
[[policy]]
name = "scenario1"
bands = [[100.0, 50.0, 0], [50.0, 25.0, 0], [25.0, 0.0, 0]]

[[policy]]
name = "scenario2"
bands = [[100.0, 50.0, 1], [50.0, 25.0, 1], [25.0, 0.0, 1]]

[[policy]]
name = "scenario3"
bands = [[100.0, 50.0, 2], [50.0, 25.0, 2], [25.0, 0.0, 2]]

[[policy]]
name = "scenario4"
bands = [[100.0, 50.0, 0], [50.0, 25.0, 1], [25.0, 0.0, 1]]

[[policy]]
name = "scenario5"
bands = [[100.0, 50.0, 0], [50.0, 25.0, 2], [25.0, 0.0, 2]]

[[policy]]
name = "scenario6"
bands = [[100.0, 50.0, 1], [50.0, 25.0, 2], [25.0, 0.0, 2]]

[[policy]]
name = "scenario7"
bands = [[100.0, 50.0, 0], [50.0, 25.0, 1], [25.0, 0.0, 2]]

[[node]]
id = "n1"
input_fps = 25.0
batch_frames = 64
telemetry_period_ms = 100
switch_latency_s = 0.0
)TOML";

inline ScenarioConfig default_config() { return parse_config(kDefaultConfigToml); }

inline ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace qrmedge
