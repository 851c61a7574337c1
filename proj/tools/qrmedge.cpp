// qrm-edge operator CLI: analytic policy evaluation, node fleet
// simulation, classification metrics over prediction files, and
// re-summarizing existing monitoring logs.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "qrmedge/config.hpp"
#include "qrmedge/energy.hpp"
#include "qrmedge/metrics.hpp"
#include "qrmedge/qrm.hpp"
#include "qrmedge/sim_runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted.store(true); }

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

qrmedge::ScenarioConfig load_config(const GlobalArgs& args) {
    qrmedge::ScenarioConfig cfg;
    if (!args.config_path.empty()) {
        cfg = qrmedge::load_config_file(args.config_path);
    } else if (const char* env = std::getenv("QRM_EDGE_CONFIG"); env && *env) {
        cfg = qrmedge::load_config_file(env);
    } else {
        cfg = qrmedge::default_config();
    }
    if (args.seed) cfg.seed = *args.seed;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

int cmd_evaluate(const qrmedge::ScenarioConfig& cfg, const std::vector<std::string>& names,
                 bool all, const std::string& baseline_name) {
    using namespace qrmedge;
    std::vector<std::string> selected = names;
    if (all) {
        selected.clear();
        for (const auto& p : cfg.policies) selected.push_back(p.name);
    }
    if (selected.empty()) {
        std::cerr << "evaluate: name at least one policy or pass --all\n";
        return kExitUsage;
    }

    std::vector<ScenarioReport> reports;
    for (const auto& name : selected) {
        const Policy* policy = cfg.find_policy(name);
        if (!policy) {
            std::cerr << "evaluate: unknown policy '" << name << "'\n";
            return kExitUsage;
        }
        reports.push_back(evaluate_policy(*policy, cfg.modes, cfg.battery_capacity_wh));
    }

    std::optional<ScenarioReport> baseline;
    if (!baseline_name.empty()) {
        const Policy* policy = cfg.find_policy(baseline_name);
        if (!policy) {
            std::cerr << "evaluate: unknown baseline policy '" << baseline_name << "'\n";
            return kExitUsage;
        }
        baseline = evaluate_policy(*policy, cfg.modes, cfg.battery_capacity_wh);
    }

    char buf[160];
    std::printf("%-12s %12s %-10s %12s %10s", "scenario", "seconds", "time", "weighted_f1",
                "reconfigs");
    if (baseline) std::printf(" %12s %8s", "extension_%", "f1_loss");
    std::printf("\n");
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%-12s %12.1f %-10s %12.2f %10d", r.policy.c_str(),
                      r.total_working_time_s, format_duration(r.total_working_time_s).c_str(),
                      r.weighted_f1_pct, r.reconfiguration_count);
        std::printf("%s", buf);
        if (baseline)
            std::printf(" %12.2f %8.2f", extension_ratio(r, *baseline),
                        baseline->weighted_f1_pct - r.weighted_f1_pct);
        std::printf("\n");
    }

    std::filesystem::create_directories(cfg.out_dir);
    const auto csv_path = std::filesystem::path(cfg.out_dir) / "report.csv";
    const auto ndjson_path = std::filesystem::path(cfg.out_dir) / "report.ndjson";
    std::ofstream csv(csv_path);
    write_report_csv(csv, reports, baseline ? &*baseline : nullptr);
    std::ofstream nd(ndjson_path);
    write_report_ndjson(nd, reports);
    std::printf("wrote %s and %s\n", csv_path.c_str(), ndjson_path.c_str());
    return kExitOk;
}

int cmd_simulate(const qrmedge::ScenarioConfig& cfg, bool realtime,
                 std::optional<double> speedup, std::optional<std::uint16_t> port) {
    using namespace qrmedge;
    SimOptions opt;
    opt.out_dir = cfg.out_dir;
    opt.realtime = realtime;
    opt.speedup = speedup.value_or(cfg.speedup);
    opt.port = port;
    opt.stop = &g_interrupted;
    if (realtime) std::signal(SIGINT, on_sigint);

    const SimResult result = run_simulation(cfg, opt);
    write_summary_text(std::cout, result.summary);
    std::printf("\nwrote %s\n", result.paths.log.c_str());
    std::printf("wrote %s, %s, %s, %s\n", result.paths.summary_csv.c_str(),
                result.paths.actions_csv.c_str(), result.paths.timeline_csv.c_str(),
                result.paths.predictions.c_str());
    return kExitOk;
}

// Strict reader for prediction files: `{"true":k,"confidences":[...]}`
// per line, closed schema.
int cmd_metrics(const qrmedge::ScenarioConfig& cfg, const std::string& predictions_path) {
    using namespace qrmedge;
    std::ifstream in(predictions_path, std::ios::binary);
    if (!in) {
        std::cerr << "metrics: cannot open " << predictions_path << "\n";
        return kExitUsage;
    }

    std::vector<PredictionRecord> records;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fail = [&](const std::string& why) {
            std::cerr << "metrics: " << predictions_path << ":" << line_no << ": " << why
                      << "\n";
            return kExitUsage;
        };
        const nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) return fail("malformed JSON");
        if (doc.size() != 2 || !doc.contains("true") || !doc.contains("confidences"))
            return fail("expected exactly {\"true\":k,\"confidences\":[...]}");
        if (!doc["true"].is_number_unsigned() && !doc["true"].is_number_integer())
            return fail("\"true\" must be a class index");
        if (!doc["confidences"].is_array() || doc["confidences"].empty())
            return fail("\"confidences\" must be a non-empty array");
        PredictionRecord r;
        const auto t = doc["true"].get<std::int64_t>();
        if (t < 0) return fail("\"true\" must be >= 0");
        r.true_class = static_cast<std::size_t>(t);
        for (const auto& c : doc["confidences"]) {
            if (!c.is_number()) return fail("confidence entries must be numbers");
            const double v = c.get<double>();
            if (v < 0.0 || v > 1.0) return fail("confidence outside [0,1]");
            r.confidences.push_back(v);
        }
        if (!records.empty() && r.confidences.size() != records.front().confidences.size())
            return fail("inconsistent confidence vector length");
        if (r.true_class >= r.confidences.size()) return fail("\"true\" out of range");
        records.push_back(std::move(r));
    }
    if (records.empty()) {
        std::cerr << "metrics: no records in " << predictions_path << "\n";
        return kExitUsage;
    }

    const std::size_t num_classes = records.front().confidences.size();
    const auto cm = confusion_from_records(records, num_classes);
    const auto macro = macro_metrics(cm);
    const auto pr = macro_pr(records, num_classes);

    std::printf("records:          %zu\n", records.size());
    std::printf("classes:          %zu\n", num_classes);
    std::printf("accuracy:         %.4f\n", macro.accuracy);
    std::printf("macro precision:  %.4f\n", macro.macro_precision);
    std::printf("macro recall:     %.4f\n", macro.macro_recall);
    std::printf("macro f1:         %.4f\n", macro.macro_f1);
    std::printf("macro auc:        %.4f\n", pr.macro_auc);
    for (const auto k : pr.excluded_classes)
        std::printf("warning: class %zu has no positives; excluded from macro PR\n", k);

    std::filesystem::create_directories(cfg.out_dir);
    const auto csv_path = std::filesystem::path(cfg.out_dir) / "pr_curves.csv";
    std::ofstream csv(csv_path);
    write_pr_csv(csv, pr,
                 cfg.class_labels.size() == num_classes ? cfg.class_labels
                                                        : std::vector<std::string>{});
    std::printf("wrote %s\n", csv_path.c_str());
    return kExitOk;
}

int cmd_report(const qrmedge::ScenarioConfig& cfg, const std::string& log_path) {
    using namespace qrmedge;
    std::ifstream in(log_path, std::ios::binary);
    if (!in) {
        std::cerr << "report: cannot open " << log_path << "\n";
        return kExitUsage;
    }
    const RunSummary summary = summarize(in, cfg);
    write_summary_text(std::cout, summary);

    std::filesystem::create_directories(cfg.out_dir);
    const auto dir = std::filesystem::path(cfg.out_dir);
    std::ofstream csv(dir / "summary.csv");
    write_summary_csv(csv, summary);
    std::ofstream actions(dir / "actions.csv");
    write_actions_csv(actions, summary);
    std::ofstream timeline(dir / "timeline.csv");
    write_timeline_csv(timeline, summary);
    std::printf("wrote %s, %s, %s\n", (dir / "summary.csv").c_str(),
                (dir / "actions.csv").c_str(), (dir / "timeline.csv").c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qrm-edge: energy-aware edge reconfiguration testbed"};
    app.require_subcommand(1);

    GlobalArgs global;
    app.add_option("--config", global.config_path,
                   "Scenario config file (TOML); falls back to $QRM_EDGE_CONFIG, then to "
                   "built-in defaults");
    app.add_option("--out", global.out_dir, "Output directory (default from config)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the run seed");

    auto* evaluate = app.add_subcommand("evaluate", "Closed-form policy evaluation");
    evaluate->fallthrough();
    std::vector<std::string> eval_names;
    bool eval_all = false;
    std::string baseline;
    evaluate->add_option("policies", eval_names, "Policy names to evaluate");
    evaluate->add_flag("--all", eval_all, "Evaluate every configured policy");
    evaluate->add_option("--baseline", baseline, "Add extension/F1-loss columns vs this policy");

    auto* simulate = app.add_subcommand("simulate", "Run the node fleet against the collector");
    simulate->fallthrough();
    bool realtime = false;
    double speedup_value = 0.0;
    std::uint16_t port_value = 0;
    simulate->add_flag("--realtime", realtime, "Pace the virtual clock against the wall clock");
    auto* speedup_opt =
        simulate->add_option("--speedup", speedup_value, "Realtime clock multiplier");
    auto* port_opt = simulate->add_option("--port", port_value, "Collector TCP port (realtime)");

    auto* metrics = app.add_subcommand("metrics", "Metrics over a prediction NDJSON file");
    metrics->fallthrough();
    std::string predictions_path;
    metrics->add_option("predictions", predictions_path, "PredictionRecord NDJSON file")
        ->required();

    auto* report = app.add_subcommand("report", "Re-summarize an existing monitoring log");
    report->fallthrough();
    std::string log_path;
    report->add_option("log", log_path, "monitoring.ndjson file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    if (*seed_opt) global.seed = seed_value;

    try {
        const qrmedge::ScenarioConfig cfg = load_config(global);
        if (*evaluate) return cmd_evaluate(cfg, eval_names, eval_all, baseline);
        if (*simulate)
            return cmd_simulate(cfg, realtime,
                                *speedup_opt ? std::optional<double>(speedup_value)
                                             : std::nullopt,
                                *port_opt ? std::optional<std::uint16_t>(port_value)
                                          : std::nullopt);
        if (*metrics) return cmd_metrics(cfg, predictions_path);
        if (*report) return cmd_report(cfg, log_path);
    } catch (const qrmedge::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitOk;
}
