#pragma once
// Collector service and quality/resource management: per-node registry,
// the band-crossing decision rule, command issue/ack/retry, the
// append-only monitoring log, and the run summary (action histogram,
// mode timeline, realized working time and weighted F1).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qrmedge/config.hpp"
#include "qrmedge/domain.hpp"
#include "qrmedge/energy.hpp"
#include "qrmedge/protocol.hpp"

namespace qrmedge {

// Core reconfiguration rule. Returns the mode the policy assigns to the
// current battery band when (a) it differs from the node's mode, (b) no
// command is outstanding, and (c) the battery band sits strictly below
// the highest band operating the current mode — commands only follow the
// battery downward, never back up to a higher-power mode.
inline std::optional<ModeId> decide(double battery_pct, ModeId current_mode,
                                    const Policy& policy, bool command_pending) {
    const std::size_t idx = band_index_for(policy, battery_pct);
    const ModeId target = policy.bands[idx].mode;
    if (command_pending || target == current_mode) return std::nullopt;
    std::ptrdiff_t current_idx = -1;
    for (std::size_t i = 0; i < policy.bands.size(); ++i) {
        if (policy.bands[i].mode == current_mode) {
            current_idx = static_cast<std::ptrdiff_t>(i);
            break;
        }
    }
    if (static_cast<std::ptrdiff_t>(idx) <= current_idx) return std::nullopt;
    return target;
}

// Append-only NDJSON log of every message crossing the collector, with a
// gapless strictly-increasing sequence number. Wall receive time is the
// only nondeterministic field in an entry.
class MonitoringLog {
  public:
    using WallClock = std::function<std::int64_t()>;

    explicit MonitoringLog(std::ostream& os, WallClock clock = system_clock_ms)
        : os_(os), clock_(std::move(clock)) {}

    static std::int64_t system_clock_ms() {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    }

    // raw_line is the exact wire bytes of one message, LF optional.
    std::uint64_t append_message(char direction, std::string_view raw_line) {
        if (!raw_line.empty() && raw_line.back() == '\n') raw_line.remove_suffix(1);
        begin_entry(direction);
        entry_ += ",\"msg\":";
        entry_ += raw_line;
        entry_ += "}\n";
        os_.write(entry_.data(), static_cast<std::streamsize>(entry_.size()));
        return seq_;
    }

    std::uint64_t append_error(char direction, std::string_view error, std::string_view raw) {
        begin_entry(direction);
        entry_ += ",\"error\":";
        wire::append_escaped(entry_, error);
        entry_ += ",\"raw\":";
        wire::append_escaped(entry_, raw.substr(0, 256));
        entry_ += "}\n";
        os_.write(entry_.data(), static_cast<std::streamsize>(entry_.size()));
        return seq_;
    }

    std::uint64_t entries() const { return seq_; }
    void flush() { os_.flush(); }

  private:
    void begin_entry(char direction) {
        entry_.clear();
        entry_ += "{\"seq\":";
        entry_ += std::to_string(++seq_);
        entry_ += ",\"wall_ms\":";
        entry_ += std::to_string(clock_());
        entry_ += ",\"dir\":\"";
        entry_ += direction == 'o' ? "out" : "in";
        entry_ += '"';
    }

    std::ostream& os_;
    WallClock clock_;
    std::uint64_t seq_ = 0;
    std::string entry_;
};

struct TimelineSegment {
    ModeId mode = 0;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct CommandRecord {
    ReconfigCommand command;
    double battery_pct_at_issue = 0.0;
    bool acked = false;
};

struct NodeSummary {
    std::string node_id;
    std::string policy_name;
    bool completed = false;               // saw Bye or battery 0
    double working_time_s = 0.0;          // last telemetry timestamp
    double realized_weighted_f1 = 0.0;    // duration-weighted over reported modes
    int commands_sent = 0;                // distinct commands issued to this node
    int retransmissions = 0;
    double avg_power_w = 0.0;             // sliding-window mean device power at end
    std::map<std::string, double> label_seconds;
    std::vector<TimelineSegment> timeline;
    std::vector<CommandRecord> commands;
};

struct RunSummary {
    std::vector<NodeSummary> nodes;
    std::uint64_t log_entries = 0;
    std::uint64_t decode_errors = 0;
};

// Builds the run summary incrementally from the exact entry sequence the
// monitoring log sees; replaying a log file through it reproduces the
// collector's own summary.
class Summarizer {
  public:
    explicit Summarizer(const ScenarioConfig& cfg) : cfg_(&cfg) {}

    void feed_message(char direction, const WireMessage& msg) {
        ++entries_;
        if (direction == 'o') {
            if (const auto* rc = std::get_if<ReconfigMsg>(&msg)) feed_command(rc->command);
            return;
        }
        std::visit([this](const auto& m) { feed_inbound(m); }, msg);
    }

    void feed_error() {
        ++entries_;
        ++decode_errors_;
    }

    RunSummary summary() const {
        RunSummary out;
        out.log_entries = entries_;
        out.decode_errors = decode_errors_;
        for (const auto& id : node_order_) {
            const Trace& t = traces_.at(id);
            NodeSummary ns;
            ns.node_id = id;
            ns.policy_name = t.policy_name;
            ns.completed = t.completed;
            ns.working_time_s = t.last_ts_s.value_or(0.0);
            ns.realized_weighted_f1 = t.duration_s > 0.0 ? t.weighted_f1_num / t.duration_s : 0.0;
            ns.commands_sent = t.commands_sent;
            ns.retransmissions = t.retransmissions;
            ns.avg_power_w = t.window_count() > 0 ? t.window_sum / t.window_count() : 0.0;
            ns.label_seconds = t.label_seconds;
            ns.timeline = t.timeline;
            if (!ns.timeline.empty() && t.last_ts_s)
                ns.timeline.back().end_s = *t.last_ts_s;
            ns.commands = t.commands;
            out.nodes.push_back(std::move(ns));
        }
        return out;
    }

  private:
    struct Trace {
        std::string policy_name;
        bool completed = false;
        // The node's clock starts at zero, so the first sample's interval
        // opens at 0 even though no earlier sample exists.
        double prev_ts_s = 0.0;
        std::optional<double> last_ts_s;
        std::optional<ModeId> last_mode;
        std::map<std::string, double> label_seconds;
        std::vector<TimelineSegment> timeline;
        double weighted_f1_num = 0.0;
        double duration_s = 0.0;
        int commands_sent = 0;
        int retransmissions = 0;
        std::vector<CommandRecord> commands;
        double last_battery_pct = 100.0;
        std::deque<std::pair<double, double>> window;  // (ts_s, device_power_w)
        double window_sum = 0.0;

        std::size_t window_count() const { return window.size(); }
    };

    Trace& trace_for(const std::string& node_id) {
        auto it = traces_.find(node_id);
        if (it == traces_.end()) {
            it = traces_.emplace(node_id, Trace{}).first;
            node_order_.push_back(node_id);
            const NodeSpec* spec = nullptr;
            for (const auto& n : cfg_->nodes)
                if (n.node_id == node_id) spec = &n;
            it->second.policy_name =
                spec && spec->policy_name ? *spec->policy_name : cfg_->active_policy;
        }
        return it->second;
    }

    double f1_for_mode(ModeId mode) const {
        const ModeProfile* p = find_profile(cfg_->modes, mode);
        return p ? p->f1_pct : 0.0;
    }

    void feed_inbound(const HelloMsg& m) { trace_for(m.node_id); }

    void feed_inbound(const TelemetryMsg& msg) {
        const TelemetrySample& s = msg.sample;
        Trace& t = trace_for(s.node_id);
        const double ts_s = static_cast<double>(s.timestamp_ms) / 1000.0;
        if (ts_s > t.prev_ts_s) {
            const double dt = ts_s - t.prev_ts_s;
            if (!s.label.empty()) t.label_seconds[s.label] += dt;
            t.weighted_f1_num += dt * f1_for_mode(s.mode);
            t.duration_s += dt;
        }
        if (!t.last_mode || *t.last_mode != s.mode) {
            const double boundary = t.prev_ts_s;
            if (!t.timeline.empty()) t.timeline.back().end_s = boundary;
            t.timeline.push_back({s.mode, t.timeline.empty() ? 0.0 : boundary, ts_s});
            t.last_mode = s.mode;
        } else if (!t.timeline.empty()) {
            t.timeline.back().end_s = ts_s;
        }
        t.window.emplace_back(ts_s, s.device_power_w);
        t.window_sum += s.device_power_w;
        while (!t.window.empty() && t.window.front().first < ts_s - cfg_->avg_power_window_s) {
            t.window_sum -= t.window.front().second;
            t.window.pop_front();
        }
        t.prev_ts_s = ts_s;
        t.last_ts_s = ts_s;
        t.last_battery_pct = s.battery_pct;
        if (s.battery_pct <= 0.0) t.completed = true;
    }

    void feed_inbound(const AckMsg& m) {
        Trace& t = trace_for(m.node_id);
        for (auto& c : t.commands)
            if (c.command.command_id == m.command_id) c.acked = true;
    }

    void feed_inbound(const ByeMsg& m) { trace_for(m.node_id).completed = true; }

    void feed_inbound(const ReconfigMsg&) {}  // wrong direction; counted upstream

    void feed_command(const ReconfigCommand& cmd) {
        Trace& t = trace_for(cmd.node_id);
        for (const auto& c : t.commands) {
            if (c.command.command_id == cmd.command_id) {
                ++t.retransmissions;
                return;
            }
        }
        ++t.commands_sent;
        t.commands.push_back({cmd, t.last_battery_pct, false});
    }

    const ScenarioConfig* cfg_;
    std::map<std::string, Trace> traces_;
    std::vector<std::string> node_order_;
    std::uint64_t entries_ = 0;
    std::uint64_t decode_errors_ = 0;
};

// The collector: owns the registry, applies the policy per node, writes
// the monitoring log, and produces outbound command lines. Transport
// agnostic — both the in-process virtual-time channel and the TCP server
// push byte lines through handle_line().
class Collector {
  public:
    Collector(const ScenarioConfig& cfg, MonitoringLog* log)
        : cfg_(&cfg), log_(log), summarizer_(cfg) {}

    // Full inbound pipeline for one wire line: log, decode, dispatch.
    // Returns encoded outbound lines (commands), already logged.
    std::vector<std::string> handle_line(std::string_view line) {
        DecodeError err;
        const auto msg = decode(line, &err);
        if (!msg) {
            log_error('i', std::string(to_string(err.kind)) + ": " + err.detail, line);
            return {};
        }
        log_message('i', line, *msg);

        std::vector<std::string> out;
        if (const auto* hello = std::get_if<HelloMsg>(&*msg)) {
            handle_hello(*hello);
        } else if (const auto* telemetry = std::get_if<TelemetryMsg>(&*msg)) {
            auto* node = find_node(telemetry->sample.node_id);
            if (!node) {
                log_error('i', "telemetry from unregistered node", telemetry->sample.node_id);
                return {};
            }
            for (const auto& cmd : ingest(telemetry->sample)) {
                const std::string cmd_line = encode(WireMessage{ReconfigMsg{cmd}});
                log_message('o', cmd_line, WireMessage{ReconfigMsg{cmd}});
                out.push_back(cmd_line);
            }
        } else if (const auto* ack = std::get_if<AckMsg>(&*msg)) {
            handle_ack(*ack);
        } else if (const auto* bye = std::get_if<ByeMsg>(&*msg)) {
            if (auto* node = find_node(bye->node_id)) node->done = true;
        } else {
            log_error('i', "unexpected inbound message type",
                      std::string(message_type(*msg)));
        }
        return out;
    }

    // Registry/decision core for one telemetry sample: updates the node
    // entry, evaluates the policy, and returns commands to send (a fresh
    // command or a retransmission of the outstanding one).
    std::vector<ReconfigCommand> ingest(const TelemetrySample& sample) {
        NodeEntry* node = find_node(sample.node_id);
        if (!node) throw std::invalid_argument("ingest: unregistered node " + sample.node_id);
        node->last_sample = sample;
        if (node->done) return {};
        if (sample.battery_pct <= 0.0) {
            node->done = true;
            return {};
        }

        std::vector<ReconfigCommand> out;
        const auto target =
            decide(sample.battery_pct, node->current_mode, node->policy, node->pending.has_value());
        if (target) {
            ReconfigCommand cmd;
            cmd.command_id = ++node->last_command_id;
            cmd.node_id = node->node_id;
            cmd.target_mode = *target;
            cmd.issued_at_ms = sample.timestamp_ms;
            node->pending = cmd;
            node->pending_sent_ms = sample.timestamp_ms;
            out.push_back(cmd);
        } else if (node->pending &&
                   sample.timestamp_ms - node->pending_sent_ms >=
                       static_cast<std::int64_t>(cfg_->command_retry_timeout_s * 1000.0)) {
            node->pending_sent_ms = sample.timestamp_ms;
            out.push_back(*node->pending);
        }
        return out;
    }

    // Framing-layer rejection (oversized/unterminated line): logged, line
    // dropped, stream continues.
    void handle_framing_error(std::string_view sample) {
        log_error('i', "oversized line dropped at framing", sample);
    }

    RunSummary summary() const { return summarizer_.summary(); }

    bool node_done(const std::string& node_id) const {
        const auto it = nodes_.find(node_id);
        return it != nodes_.end() && it->second.done;
    }

    struct NodeEntry {
        std::string node_id;
        Policy policy;
        ModeId current_mode = 0;
        double capacity_wh = 0.0;
        std::optional<TelemetrySample> last_sample;
        std::uint64_t last_command_id = 0;
        std::optional<ReconfigCommand> pending;
        std::int64_t pending_sent_ms = 0;
        bool done = false;
    };

    const NodeEntry* node(const std::string& node_id) const {
        const auto it = nodes_.find(node_id);
        return it == nodes_.end() ? nullptr : &it->second;
    }

  private:
    NodeEntry* find_node(const std::string& node_id) {
        auto it = nodes_.find(node_id);
        return it == nodes_.end() ? nullptr : &it->second;
    }

    void handle_hello(const HelloMsg& hello) {
        if (!find_profile(cfg_->modes, hello.initial_mode)) {
            log_error('i', "hello with unknown initial mode", hello.node_id);
            return;
        }
        NodeEntry entry;
        entry.node_id = hello.node_id;
        entry.current_mode = hello.initial_mode;
        entry.capacity_wh = hello.capacity_wh;
        const NodeSpec* spec = nullptr;
        for (const auto& n : cfg_->nodes)
            if (n.node_id == hello.node_id) spec = &n;
        const std::string policy_name =
            spec && spec->policy_name ? *spec->policy_name : cfg_->active_policy;
        entry.policy = *cfg_->find_policy(policy_name);
        nodes_[hello.node_id] = std::move(entry);  // re-hello resets the node
    }

    void handle_ack(const AckMsg& ack) {
        auto* node = find_node(ack.node_id);
        if (!node || !node->pending || node->pending->command_id != ack.command_id) {
            log_error('i', "unexpected ack", ack.node_id);
            return;
        }
        node->current_mode = node->pending->target_mode;
        node->pending.reset();
    }

    void log_message(char dir, std::string_view raw, const WireMessage& msg) {
        if (log_) log_->append_message(dir, raw);
        summarizer_.feed_message(dir, msg);
    }

    void log_error(char dir, std::string_view error, std::string_view raw) {
        if (log_) log_->append_error(dir, error, raw);
        summarizer_.feed_error();
    }

    const ScenarioConfig* cfg_;
    MonitoringLog* log_;
    Summarizer summarizer_;
    std::map<std::string, NodeEntry> nodes_;
};

// Replays a monitoring log file through the same summarizer the collector
// used when writing it. Validates the gapless strictly-increasing
// sequence numbers on the way.
inline RunSummary summarize(std::istream& log, const ScenarioConfig& cfg) {
    Summarizer summarizer(cfg);
    std::string line;
    std::uint64_t expected_seq = 0;
    std::uint64_t line_no = 0;
    while (std::getline(log, line)) {
        ++line_no;
        if (line.empty()) continue;
        const nlohmann::json entry = nlohmann::json::parse(line, nullptr, false);
        if (entry.is_discarded() || !entry.is_object())
            throw std::runtime_error("monitoring log line " + std::to_string(line_no) +
                                     ": malformed entry");
        const auto seq = entry.at("seq").get<std::uint64_t>();
        if (seq != ++expected_seq)
            throw std::runtime_error("monitoring log line " + std::to_string(line_no) +
                                     ": sequence gap (expected " +
                                     std::to_string(expected_seq) + ", got " +
                                     std::to_string(seq) + ")");
        const std::string dir = entry.at("dir").get<std::string>();
        if (entry.contains("error")) {
            summarizer.feed_error();
            continue;
        }
        const std::string msg_text = entry.at("msg").dump();
        DecodeError err;
        const auto msg = decode(msg_text, &err);
        if (!msg)
            throw std::runtime_error("monitoring log line " + std::to_string(line_no) +
                                     ": undecodable msg (" + to_string(err.kind) + ")");
        summarizer.feed_message(dir == "out" ? 'o' : 'i', *msg);
    }
    return summarizer.summary();
}

inline void write_summary_csv(std::ostream& os, const RunSummary& s) {
    os << "node,policy,working_time_s,display_time,weighted_f1,commands,completed\n";
    char buf[200];
    for (const auto& n : s.nodes) {
        std::snprintf(buf, sizeof buf, "%s,%s,%.3f,%s,%.2f,%d,%d\n", n.node_id.c_str(),
                      n.policy_name.c_str(), n.working_time_s,
                      format_duration(n.working_time_s).c_str(), n.realized_weighted_f1,
                      n.commands_sent, n.completed ? 1 : 0);
        os << buf;
    }
}

inline void write_actions_csv(std::ostream& os, const RunSummary& s) {
    os << "node,label,total_seconds\n";
    char buf[64];
    for (const auto& n : s.nodes) {
        for (const auto& [label, seconds] : n.label_seconds) {
            std::snprintf(buf, sizeof buf, ",%.3f\n", seconds);
            os << n.node_id << ',' << label << buf;
        }
    }
}

inline void write_timeline_csv(std::ostream& os, const RunSummary& s) {
    os << "node,segment,mode,start_s,end_s\n";
    char buf[96];
    for (const auto& n : s.nodes) {
        int i = 0;
        for (const auto& seg : n.timeline) {
            std::snprintf(buf, sizeof buf, ",%d,%u,%.3f,%.3f\n", i++, seg.mode, seg.start_s,
                          seg.end_s);
            os << n.node_id << buf;
        }
    }
}

inline void write_summary_text(std::ostream& os, const RunSummary& s) {
    char buf[256];
    os << "run summary: " << s.nodes.size() << " node(s), " << s.log_entries
       << " log entries, " << s.decode_errors << " decode errors\n";
    for (const auto& n : s.nodes) {
        std::snprintf(buf, sizeof buf,
                      "\nnode %s  policy=%s  working_time=%.3fs (%s)  weighted_f1=%.2f  "
                      "commands=%d  avg_power=%.2fW  %s\n",
                      n.node_id.c_str(), n.policy_name.c_str(), n.working_time_s,
                      format_duration(n.working_time_s).c_str(), n.realized_weighted_f1,
                      n.commands_sent, n.avg_power_w,
                      n.completed ? "completed" : "interrupted");
        os << buf;
        os << "  mode timeline:\n";
        for (const auto& seg : n.timeline) {
            std::snprintf(buf, sizeof buf, "    mode %u  %10.3fs .. %10.3fs\n", seg.mode,
                          seg.start_s, seg.end_s);
            os << buf;
        }
        if (!n.commands.empty()) {
            os << "  reconfigurations:\n";
            for (const auto& c : n.commands) {
                std::snprintf(buf, sizeof buf,
                              "    #%llu -> mode %u at t=%.3fs (battery %.3f%%)%s\n",
                              static_cast<unsigned long long>(c.command.command_id),
                              c.command.target_mode,
                              static_cast<double>(c.command.issued_at_ms) / 1000.0,
                              c.battery_pct_at_issue, c.acked ? "" : " [unacked]");
                os << buf;
            }
        }
        os << "  action histogram:\n";
        for (const auto& [label, seconds] : n.label_seconds) {
            std::snprintf(buf, sizeof buf, "    %-28s %12.3fs\n", label.c_str(), seconds);
            os << buf;
        }
    }
}

}  // namespace qrmedge
