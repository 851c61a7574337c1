#include "doctest.h"

#include <sstream>

#include "qrmedge/net.hpp"
#include "qrmedge/sim_runner.hpp"

using namespace qrmedge;

namespace {

std::int64_t fixed_clock() { return 1700000000000; }

// Reads lines from a stream until `count` complete frames arrived.
std::vector<std::string> read_lines(TcpStream& stream, LineSplitter& splitter,
                                    std::size_t count) {
    std::vector<std::string> lines;
    std::string chunk;
    while (lines.size() < count) {
        if (auto frame = splitter.next()) {
            lines.push_back(frame->line);
            continue;
        }
        chunk.clear();
        REQUIRE(stream.read_some(chunk));
        splitter.feed(chunk);
    }
    return lines;
}

TelemetrySample sample(const char* node, std::int64_t t_ms, ModeId mode, double pct) {
    TelemetrySample s;
    s.node_id = node;
    s.timestamp_ms = t_ms;
    s.mode = mode;
    s.gpu_power_w = 1.58;
    s.device_power_w = 4.77;
    s.temperature_c = 45.0;
    s.fps = 27.0;
    s.battery_pct = pct;
    s.label = "walking";
    s.confidence = 0.8;
    return s;
}

}  // namespace

TEST_CASE("a node session over real TCP receives commands on its own connection") {
    const ScenarioConfig cfg = default_config();
    std::ostringstream log_text;
    MonitoringLog log(log_text, fixed_clock);
    Collector collector(cfg, &log);
    CollectorServer server(collector, 0);  // ephemeral port
    server.start();

    TcpStream conn = connect_loopback(server.port());
    LineSplitter splitter;

    conn.write_line(encode(WireMessage{HelloMsg{"n1", 47.7, 0, cfg.class_labels}}));
    conn.write_line(encode(WireMessage{TelemetryMsg{sample("n1", 100, 0, 90.0)}}));
    conn.write_line(encode(WireMessage{TelemetryMsg{sample("n1", 200, 0, 49.5)}}));

    const auto lines = read_lines(conn, splitter, 1);
    const auto msg = decode(lines[0]);
    REQUIRE(msg.has_value());
    const auto* reconfig = std::get_if<ReconfigMsg>(&*msg);
    REQUIRE(reconfig != nullptr);
    CHECK(reconfig->command.target_mode == 1);
    CHECK(reconfig->command.node_id == "n1");
    CHECK(reconfig->command.issued_at_ms == 200);

    conn.write_line(encode(WireMessage{AckMsg{reconfig->command.command_id, "n1"}}));
    conn.write_line(encode(WireMessage{ByeMsg{"n1", "test_done"}}));
    conn.shutdown();

    CHECK(server.wait_nodes_done({"n1"}, std::chrono::seconds(5)));
    server.stop();

    const auto* node = collector.node("n1");
    REQUIRE(node != nullptr);
    CHECK(node->current_mode == 1);
    CHECK_FALSE(node->pending.has_value());
    CHECK(node->done);

    const RunSummary summary = collector.summary();
    REQUIRE(summary.nodes.size() == 1);
    CHECK(summary.nodes[0].commands_sent == 1);
    CHECK(summary.nodes[0].commands[0].acked);
}

TEST_CASE("an oversized line over TCP is dropped and the stream recovers") {
    const ScenarioConfig cfg = default_config();
    std::ostringstream log_text;
    MonitoringLog log(log_text, fixed_clock);
    Collector collector(cfg, &log);
    CollectorServer server(collector, 0);
    server.start();

    TcpStream conn = connect_loopback(server.port());
    conn.write_line(encode(WireMessage{HelloMsg{"n1", 47.7, 0, cfg.class_labels}}));
    conn.write_line(std::string(5000, 'x') + "\n");  // garbage, no terminator until here
    conn.write_line(encode(WireMessage{TelemetryMsg{sample("n1", 100, 0, 49.0)}}));

    LineSplitter splitter;
    const auto lines = read_lines(conn, splitter, 1);  // command still arrives
    const auto msg = decode(lines[0]);
    REQUIRE(msg.has_value());
    CHECK(std::holds_alternative<ReconfigMsg>(*msg));
    conn.shutdown();
    server.stop();

    CHECK(log_text.str().find("oversized") != std::string::npos);
}

TEST_CASE("two ports cannot share a listener") {
    const ScenarioConfig cfg = default_config();
    std::ostringstream log_text;
    MonitoringLog log(log_text, fixed_clock);
    Collector collector(cfg, &log);
    CollectorServer first(collector, 0);
    CHECK_THROWS_AS(CollectorServer(collector, first.port()), NetError);
}

TEST_CASE("a realtime run over TCP completes a short scenario") {
    ScenarioConfig cfg = default_config();
    cfg.nodes[0].capacity_wh = 0.003;  // ~2.3 virtual seconds at mode 0
    cfg.nodes[0].telemetry_period_ms = 100;
    validate_config(cfg);

    SimOptions opt;
    opt.out_dir = std::filesystem::temp_directory_path() / "qrmedge_test_realtime";
    opt.realtime = true;
    opt.speedup = 50.0;  // ~50 ms of wall time
    opt.port = 0;
    opt.wall_clock = fixed_clock;

    const SimResult result = run_realtime(cfg, opt);
    REQUIRE(result.summary.nodes.size() == 1);
    CHECK(result.summary.nodes[0].completed);
    CHECK(result.summary.nodes[0].working_time_s > 1.5);
    CHECK(std::filesystem::exists(result.paths.log));

    // The log replays cleanly.
    std::ifstream log_file(result.paths.log);
    const RunSummary replayed = summarize(log_file, cfg);
    CHECK(replayed.nodes.size() == 1);
    CHECK(replayed.nodes[0].completed);
    std::filesystem::remove_all(opt.out_dir);
}
