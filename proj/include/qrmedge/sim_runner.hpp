#pragma once
// Runs a configured scenario end to end: builds each node simulator,
// pumps its wire lines through the collector, applies returned commands,
// and writes the monitoring log plus the summary/report files.
//
// Virtual-time runs (the default) advance node clocks as fast as the
// machine allows and execute nodes sequentially over an in-process
// channel, so identical configs produce byte-identical logs up to wall
// receive times. Realtime runs serve real TCP connections and pace the
// virtual clock against the wall clock divided by the speedup factor.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include "qrmedge/config.hpp"
#include "qrmedge/net.hpp"
#include "qrmedge/nodesim.hpp"
#include "qrmedge/protocol.hpp"
#include "qrmedge/qrm.hpp"

namespace qrmedge {

struct SimOptions {
    std::filesystem::path out_dir = "out";
    bool realtime = false;
    double speedup = 1.0;
    std::optional<std::uint16_t> port;      // realtime listener; defaults to config port
    std::atomic<bool>* stop = nullptr;      // external interrupt (realtime)
    MonitoringLog::WallClock wall_clock = MonitoringLog::system_clock_ms;
};

struct SimPaths {
    std::filesystem::path log;
    std::filesystem::path summary_text;
    std::filesystem::path summary_csv;
    std::filesystem::path actions_csv;
    std::filesystem::path timeline_csv;
    std::filesystem::path predictions;
};

struct SimResult {
    RunSummary summary;
    SimPaths paths;
};

// Node construction shared by both transports.
inline NodeSim build_node(const ScenarioConfig& cfg, const NodeSpec& spec) {
    NodeConfig nc;
    nc.node_id = spec.node_id;
    const Policy& policy = cfg.policy_for(spec);
    nc.initial_mode = spec.initial_mode ? *spec.initial_mode : band_for(policy, 100.0);
    nc.battery = full_battery(spec.capacity_wh.value_or(cfg.battery_capacity_wh));
    nc.class_distribution = cfg.class_distribution;
    for (const auto& profile : cfg.modes) {
        const auto it = cfg.confusion_overrides.find(profile.mode_id);
        nc.confusion_profiles[profile.mode_id] =
            it != cfg.confusion_overrides.end()
                ? it->second
                : uniform_error_matrix(profile.accuracy_pct, cfg.class_labels.size());
    }
    nc.input_fps = spec.input_fps;
    nc.batch_frames = spec.batch_frames;
    nc.telemetry_period_ms = spec.telemetry_period_ms;
    nc.switch_latency_s = spec.switch_latency_s;
    nc.rng_seed = spec.seed ? *spec.seed : derive_seed(cfg.seed, spec.node_id);
    return NodeSim(std::move(nc), cfg.modes, cfg.class_labels);
}

namespace simdetail {

inline void write_prediction_line(std::ostream& os, const BatchCompleted& batch,
                                  std::size_t num_classes) {
    std::string line = "{\"true\":" + std::to_string(batch.true_class) + ",\"confidences\":[";
    const auto confidences =
        spread_confidences(num_classes, batch.predicted_class, batch.confidence);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        if (i) line.push_back(',');
        wire::append_number(line, confidences[i]);
    }
    line += "]}\n";
    os << line;
}

// Decodes collector responses, acks them, and applies the switch.
template <typename SendLine>
inline void apply_responses(NodeSim& node, const std::vector<std::string>& responses,
                            SendLine&& send_line) {
    for (const auto& response : responses) {
        DecodeError err;
        const auto msg = decode(response, &err);
        if (!msg || !std::holds_alternative<ReconfigMsg>(*msg)) continue;
        const ReconfigCommand& cmd = std::get<ReconfigMsg>(*msg).command;
        send_line(encode(WireMessage{AckMsg{cmd.command_id, node.config().node_id}}));
        node.apply_reconfig(cmd);
    }
}

inline SimPaths make_paths(const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    return SimPaths{out_dir / "monitoring.ndjson", out_dir / "summary.txt",
                    out_dir / "summary.csv",       out_dir / "actions.csv",
                    out_dir / "timeline.csv",      out_dir / "predictions.ndjson"};
}

inline void write_outputs(const SimPaths& paths, const RunSummary& summary) {
    std::ofstream text(paths.summary_text);
    write_summary_text(text, summary);
    std::ofstream csv(paths.summary_csv);
    write_summary_csv(csv, summary);
    std::ofstream actions(paths.actions_csv);
    write_actions_csv(actions, summary);
    std::ofstream timeline(paths.timeline_csv);
    write_timeline_csv(timeline, summary);
}

}  // namespace simdetail

// Virtual-time run: every node from full battery to exhaustion.
inline SimResult run_virtual(const ScenarioConfig& cfg, const SimOptions& opt) {
    if (cfg.nodes.empty()) throw ConfigError("simulate: no [[node]] entries configured");
    const SimPaths paths = simdetail::make_paths(opt.out_dir);

    std::ofstream log_file(paths.log, std::ios::binary);
    if (!log_file) throw std::runtime_error("cannot open " + paths.log.string());
    std::vector<char> log_buf(1 << 20);
    log_file.rdbuf()->pubsetbuf(log_buf.data(), static_cast<std::streamsize>(log_buf.size()));
    std::ofstream predictions(paths.predictions, std::ios::binary);

    MonitoringLog log(log_file, opt.wall_clock);
    Collector collector(cfg, &log);

    for (const auto& spec : cfg.nodes) {
        NodeSim node = build_node(cfg, spec);
        const auto send_to_collector = [&](const std::string& line) {
            return collector.handle_line(line);
        };

        HelloMsg hello{spec.node_id, node.battery().capacity_wh, node.mode(),
                       cfg.class_labels};
        simdetail::apply_responses(node, send_to_collector(encode(WireMessage{hello})),
                                   send_to_collector);

        while (!node.exhausted()) {
            for (const auto& event : node.step(node.next_telemetry_due_ms())) {
                if (const auto* batch = std::get_if<BatchCompleted>(&event)) {
                    simdetail::write_prediction_line(predictions, *batch,
                                                     cfg.class_labels.size());
                } else if (const auto* telemetry = std::get_if<TelemetryDue>(&event)) {
                    const auto responses =
                        send_to_collector(encode(WireMessage{TelemetryMsg{telemetry->sample}}));
                    simdetail::apply_responses(node, responses, send_to_collector);
                }
            }
        }
        send_to_collector(encode(WireMessage{ByeMsg{spec.node_id, "battery_exhausted"}}));
    }

    SimResult result{collector.summary(), paths};
    simdetail::write_outputs(paths, result.summary);
    log.flush();
    return result;
}

// Realtime run over TCP: nodes are loopback clients paced against the
// wall clock; commands are polled from the socket after each telemetry.
inline SimResult run_realtime(const ScenarioConfig& cfg, const SimOptions& opt) {
    if (cfg.nodes.empty()) throw ConfigError("simulate: no [[node]] entries configured");
    const SimPaths paths = simdetail::make_paths(opt.out_dir);

    std::ofstream log_file(paths.log, std::ios::binary);
    if (!log_file) throw std::runtime_error("cannot open " + paths.log.string());
    std::ofstream predictions(paths.predictions, std::ios::binary);
    std::mutex predictions_mutex;

    MonitoringLog log(log_file, opt.wall_clock);
    Collector collector(cfg, &log);
    CollectorServer server(collector, opt.port.value_or(cfg.port));
    server.start();

    std::atomic<bool> local_stop{false};
    std::atomic<bool>* stop = opt.stop ? opt.stop : &local_stop;
    const double speedup = opt.speedup > 0.0 ? opt.speedup : 1.0;

    std::vector<std::thread> node_threads;
    std::mutex error_mutex;
    std::vector<std::string> node_errors;
    for (const auto& spec : cfg.nodes) {
        node_threads.emplace_back([&, spec] {
          try {
            NodeSim node = build_node(cfg, spec);
            TcpStream conn = connect_loopback(server.port());
            LineSplitter splitter;
            std::string inbox;

            const auto pump_commands = [&] {
                inbox.clear();
                if (!conn.read_available(inbox)) return false;
                splitter.feed(inbox);
                while (auto frame = splitter.next()) {
                    if (frame->oversized) continue;
                    DecodeError err;
                    const auto msg = decode(frame->line, &err);
                    if (!msg || !std::holds_alternative<ReconfigMsg>(*msg)) continue;
                    const ReconfigCommand& cmd = std::get<ReconfigMsg>(*msg).command;
                    conn.write_line(
                        encode(WireMessage{AckMsg{cmd.command_id, spec.node_id}}));
                    node.apply_reconfig(cmd);
                }
                return true;
            };

            conn.write_line(encode(WireMessage{HelloMsg{
                spec.node_id, node.battery().capacity_wh, node.mode(), cfg.class_labels}}));

            const auto wall_start = std::chrono::steady_clock::now();
            while (!node.exhausted() && !stop->load()) {
                const double due_ms = node.next_telemetry_due_ms();
                const auto wall_due =
                    wall_start + std::chrono::microseconds(
                                     static_cast<std::int64_t>(due_ms * 1000.0 / speedup));
                std::this_thread::sleep_until(wall_due);
                for (const auto& event : node.step(due_ms)) {
                    if (const auto* batch = std::get_if<BatchCompleted>(&event)) {
                        std::lock_guard lock(predictions_mutex);
                        simdetail::write_prediction_line(predictions, *batch,
                                                         cfg.class_labels.size());
                    } else if (const auto* telemetry = std::get_if<TelemetryDue>(&event)) {
                        conn.write_line(encode(WireMessage{TelemetryMsg{telemetry->sample}}));
                    }
                }
                if (!pump_commands()) break;
            }
            const char* reason = node.exhausted() ? "battery_exhausted" : "interrupted";
            conn.write_line(encode(WireMessage{ByeMsg{spec.node_id, reason}}));
            conn.shutdown();
          } catch (const std::exception& e) {
            std::lock_guard lock(error_mutex);
            node_errors.push_back(spec.node_id + ": " + e.what());
            stop->store(true);
          }
        });
    }
    for (auto& t : node_threads) t.join();
    // Let the per-connection readers drain the final Bye lines.
    std::vector<std::string> node_ids;
    for (const auto& spec : cfg.nodes) node_ids.push_back(spec.node_id);
    server.wait_nodes_done(node_ids, std::chrono::seconds(5));
    server.stop();
    if (!node_errors.empty()) throw std::runtime_error("node failed: " + node_errors.front());

    SimResult result{collector.summary(), paths};
    simdetail::write_outputs(paths, result.summary);
    log.flush();
    return result;
}

inline SimResult run_simulation(const ScenarioConfig& cfg, const SimOptions& opt) {
    return opt.realtime ? run_realtime(cfg, opt) : run_virtual(cfg, opt);
}

}  // namespace qrmedge
