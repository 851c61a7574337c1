#include "doctest.h"

#include <cmath>
#include <sstream>

#include "qrmedge/nodesim.hpp"
#include "qrmedge/rng.hpp"

using namespace qrmedge;

namespace {

std::vector<ModeProfile> test_profiles() {
    return {
        {0, "m0", 49.9, 1.58, 4.77, 27.0, 84.24, 78.14},
        {1, "m1", 47.6, 1.37, 4.43, 33.0, 81.0, 74.99},
        {2, "m2", 26.9, 0.25, 2.61, 270.0, 76.27, 70.08},
    };
}

std::vector<std::string> labels4() { return {"a", "b", "c", "d"}; }

NodeConfig base_config(double capacity_wh, std::uint64_t seed = 11) {
    NodeConfig nc;
    nc.node_id = "n1";
    nc.initial_mode = 0;
    nc.battery = full_battery(capacity_wh);
    nc.class_distribution = {0.4, 0.3, 0.2, 0.1};
    for (const auto& p : test_profiles())
        nc.confusion_profiles[p.mode_id] = uniform_error_matrix(p.accuracy_pct, 4);
    nc.rng_seed = seed;
    return nc;
}

NodeSim make_node(double capacity_wh, std::uint64_t seed = 11) {
    return NodeSim(base_config(capacity_wh, seed), test_profiles(), labels4());
}

std::string render_events(const std::vector<NodeEvent>& events) {
    std::ostringstream os;
    for (const auto& e : events) {
        if (const auto* b = std::get_if<BatchCompleted>(&e))
            os << "B " << b->t_ms << ' ' << b->true_class << ' ' << b->predicted_class << ' '
               << b->confidence << '\n';
        else if (const auto* t = std::get_if<TelemetryDue>(&e))
            os << "T " << t->t_ms << ' ' << t->sample.battery_pct << ' ' << t->sample.mode
               << ' ' << t->sample.label << '\n';
        else if (const auto* m = std::get_if<ModeSwitched>(&e))
            os << "M " << m->t_ms << ' ' << m->from << "->" << m->to << '\n';
        else if (const auto* x = std::get_if<BatteryExhausted>(&e))
            os << "X " << x->t_ms << '\n';
    }
    return os.str();
}

}  // namespace

TEST_CASE("a 10 second window yields 3 batches and 100 telemetry events") {
    auto node = make_node(47.7);
    const auto events = node.step(10000.0);
    int batches = 0, telemetry = 0;
    std::vector<double> batch_times;
    for (const auto& e : events) {
        if (std::holds_alternative<BatchCompleted>(e)) {
            ++batches;
            batch_times.push_back(event_time_ms(e));
        }
        if (std::holds_alternative<TelemetryDue>(e)) ++telemetry;
    }
    CHECK(batches == 3);
    CHECK(telemetry == 100);
    REQUIRE(batch_times.size() == 3);
    CHECK(batch_times[0] == doctest::Approx(2560.0));
    CHECK(batch_times[1] == doctest::Approx(5120.0));
    CHECK(batch_times[2] == doctest::Approx(7680.0));
}

TEST_CASE("a zero-width window emits nothing and changes nothing") {
    auto node = make_node(47.7);
    const auto events = node.step(0.0);
    CHECK(events.empty());
    CHECK(node.now_ms() == 0.0);
    CHECK(node.battery().remaining_wh == doctest::Approx(47.7));
    CHECK_FALSE(node.exhausted());
}

TEST_CASE("mode 0 on a 47.7 Wh battery exhausts at exactly ten hours") {
    auto node = make_node(47.7);
    double prev = 0.0;
    std::optional<double> exhausted_at;
    std::size_t monotonic_violations = 0, after_exhaustion = 0;
    while (!node.exhausted()) {
        for (const auto& e : node.step(node.now_ms() + 3.6e6)) {
            if (event_time_ms(e) < prev) ++monotonic_violations;
            prev = event_time_ms(e);
            if (exhausted_at) ++after_exhaustion;
            if (const auto* x = std::get_if<BatteryExhausted>(&e)) exhausted_at = x->t_ms;
        }
    }
    REQUIRE(exhausted_at.has_value());
    CHECK(*exhausted_at == doctest::Approx(36000000.0).epsilon(1e-9));
    CHECK(monotonic_violations == 0);
    CHECK(after_exhaustion == 0);
    CHECK(node.step(node.now_ms() + 1000.0).empty());
}

TEST_CASE("energy bookkeeping balances the battery at exhaustion") {
    auto node = make_node(0.5);
    while (!node.exhausted()) node.step(node.now_ms() + 1e6);
    double by_mode = 0.0;
    for (const auto& [mode, wh] : node.energy_by_mode_wh()) by_mode += wh;
    CHECK(node.energy_drained_wh() == doctest::Approx(0.5).epsilon(1e-6 / 0.5));
    CHECK(by_mode == doctest::Approx(node.energy_drained_wh()));
    CHECK(node.battery().remaining_wh == 0.0);
}

TEST_CASE("battery percentage is affine in time while no command arrives") {
    auto node = make_node(47.7);
    std::vector<std::pair<double, double>> points;  // (t_ms, pct)
    for (const auto& e : node.step(20000.0)) {
        if (const auto* t = std::get_if<TelemetryDue>(&e))
            points.emplace_back(t->t_ms, t->sample.battery_pct);
    }
    REQUIRE(points.size() == 200);
    const double slope = (points[1].second - points[0].second) /
                         (points[1].first - points[0].first);
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double predicted =
            points[0].second + slope * (points[i].first - points[0].first);
        CHECK(points[i].second == doctest::Approx(predicted).epsilon(1e-9));
    }
}

TEST_CASE("synth_classify is pinned by degenerate confusion profiles") {
    auto identity_cfg = base_config(47.7);
    ConfusionProfile identity(4, std::vector<double>(4, 0.0));
    for (int i = 0; i < 4; ++i) identity[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1.0;
    identity_cfg.confusion_profiles[0] = identity;
    NodeSim id_node(identity_cfg, test_profiles(), labels4());
    for (std::size_t c = 0; c < 4; ++c)
        for (int i = 0; i < 50; ++i) CHECK(id_node.synth_classify(c).first == c);

    auto zero_diag_cfg = base_config(47.7);
    ConfusionProfile zero_diag(4, std::vector<double>(4, 1.0 / 3.0));
    for (int i = 0; i < 4; ++i) zero_diag[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0.0;
    zero_diag_cfg.confusion_profiles[0] = zero_diag;
    NodeSim zd_node(zero_diag_cfg, test_profiles(), labels4());
    for (std::size_t c = 0; c < 4; ++c)
        for (int i = 0; i < 50; ++i) CHECK(zd_node.synth_classify(c).first != c);
}

TEST_CASE("default mode profiles land near their configured accuracy") {
    // Empirical accuracy over 10000 draws stays within +-1.5 points.
    const auto profiles = test_profiles();
    for (const auto& profile : profiles) {
        auto cfg = base_config(47.7, 99 + profile.mode_id);
        cfg.initial_mode = profile.mode_id;
        NodeSim node(cfg, profiles, labels4());
        Rng true_draws(1234 + profile.mode_id);
        int correct = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const std::size_t true_class = true_draws.categorical(cfg.class_distribution);
            if (node.synth_classify(true_class).first == true_class) ++correct;
        }
        const double accuracy_pct = 100.0 * correct / n;
        CHECK(std::fabs(accuracy_pct - profile.accuracy_pct) <= 1.5);
    }
}

TEST_CASE("confidence ranges split by argmax agreement") {
    auto node = make_node(47.7);
    for (int i = 0; i < 2000; ++i) {
        const auto [predicted, confidence] = node.synth_classify(1);
        if (predicted == 1) {  // argmax of a diagonal-dominant row is the class itself
            CHECK(confidence >= 0.5);
            CHECK(confidence <= 1.0);
        } else {
            CHECK(confidence >= 0.2);
            CHECK(confidence <= 0.8);
        }
    }
}

TEST_CASE("apply_reconfig with zero latency switches immediately") {
    auto node = make_node(47.7);
    node.step(5000.0);
    const auto switched = node.apply_reconfig({1, "n1", 1, 5000});
    REQUIRE(switched.has_value());
    CHECK(switched->from == 0);
    CHECK(switched->to == 1);
    CHECK(switched->t_ms == doctest::Approx(5000.0));
    CHECK(node.mode() == 1);
}

TEST_CASE("apply_reconfig to the current mode is a no-op") {
    auto node = make_node(47.7);
    node.step(5000.0);
    const auto before = node.battery().remaining_wh;
    CHECK_FALSE(node.apply_reconfig({1, "n1", 0, 5000}).has_value());
    CHECK(node.mode() == 0);
    CHECK(node.battery().remaining_wh == before);
}

TEST_CASE("apply_reconfig rejects a target without a profile") {
    auto node = make_node(47.7);
    CHECK_THROWS_AS(node.apply_reconfig({1, "n1", 9, 0}), std::invalid_argument);
}

TEST_CASE("switch latency drains old-mode power and pauses inference") {
    auto cfg = base_config(47.7);
    cfg.switch_latency_s = 5.0;
    NodeSim node(cfg, test_profiles(), labels4());
    node.step(10000.0);
    const double drained_before = node.energy_drained_wh();

    CHECK_FALSE(node.apply_reconfig({1, "n1", 2, 10000}).has_value());
    CHECK(node.mode() == 0);  // still redeploying

    const auto events = node.step(20000.0);
    const double switch_time = 15000.0;
    bool saw_switch = false;
    for (const auto& e : events) {
        if (const auto* m = std::get_if<ModeSwitched>(&e)) {
            saw_switch = true;
            CHECK(m->t_ms == doctest::Approx(switch_time));
            CHECK(m->from == 0);
            CHECK(m->to == 2);
        }
        if (const auto* b = std::get_if<BatchCompleted>(&e)) {
            // Inference paused during the switch; first batch completes a
            // full period after redeploy.
            CHECK(b->t_ms >= switch_time + 2560.0 - 1e-9);
        }
    }
    CHECK(saw_switch);
    CHECK(node.mode() == 2);

    // Energy over [10s, 15s] at old 4.77 W, then [15s, 20s] at 2.61 W.
    const double expected =
        4.77 * 5.0 / 3600.0 + 2.61 * 5.0 / 3600.0;
    CHECK(node.energy_drained_wh() - drained_before == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("commands arriving during a switch queue up behind it") {
    auto cfg = base_config(47.7);
    cfg.switch_latency_s = 2.0;
    NodeSim node(cfg, test_profiles(), labels4());
    CHECK_FALSE(node.apply_reconfig({1, "n1", 1, 0}).has_value());
    CHECK_FALSE(node.apply_reconfig({2, "n1", 2, 0}).has_value());  // queued
    const auto events = node.step(10000.0);
    std::vector<std::pair<double, ModeId>> switches;
    for (const auto& e : events)
        if (const auto* m = std::get_if<ModeSwitched>(&e)) switches.emplace_back(m->t_ms, m->to);
    REQUIRE(switches.size() == 2);
    CHECK(switches[0] == std::pair{2000.0, ModeId{1}});
    CHECK(switches[1] == std::pair{4000.0, ModeId{2}});
    CHECK(node.mode() == 2);
}

TEST_CASE("identical config and seed produce byte-identical event streams") {
    auto run = [] {
        auto node = make_node(0.2, 777);
        std::string out;
        while (!node.exhausted()) {
            out += render_events(node.step(node.now_ms() + 50000.0));
            if (node.now_ms() > 4e8) break;
        }
        return out;
    };
    const std::string a = run();
    const std::string b = run();
    CHECK(a == b);
    CHECK(!a.empty());

    auto other = make_node(0.2, 778);
    std::string c;
    while (!other.exhausted()) c += render_events(other.step(other.now_ms() + 50000.0));
    CHECK(a != c);  // different seed, different draws
}

TEST_CASE("telemetry reports the active mode's parameters and latest label") {
    auto node = make_node(47.7);
    const auto events = node.step(3000.0);  // one batch at 2.56 s, telemetry after
    std::optional<BatchCompleted> batch;
    std::optional<TelemetrySample> after_batch;
    for (const auto& e : events) {
        if (const auto* b = std::get_if<BatchCompleted>(&e)) batch = *b;
        if (const auto* t = std::get_if<TelemetryDue>(&e)) {
            if (batch && t->t_ms > batch->t_ms && !after_batch) after_batch = t->sample;
            if (!batch) CHECK(t->sample.label.empty());
        }
    }
    REQUIRE(batch.has_value());
    REQUIRE(after_batch.has_value());
    CHECK(after_batch->label == labels4()[batch->predicted_class]);
    CHECK(after_batch->confidence == doctest::Approx(batch->confidence));
    CHECK(after_batch->device_power_w == doctest::Approx(4.77));
    CHECK(after_batch->fps == doctest::Approx(27.0));
    CHECK(after_batch->node_id == "n1");
}

TEST_CASE("config validation rejects inconsistent distributions and profiles") {
    auto bad_dist = base_config(47.7);
    bad_dist.class_distribution = {0.5, 0.5, 0.1, 0.0};
    CHECK_THROWS_AS(NodeSim(bad_dist, test_profiles(), labels4()), std::invalid_argument);

    auto missing_profile = base_config(47.7);
    missing_profile.confusion_profiles.erase(2);
    CHECK_THROWS_AS(NodeSim(missing_profile, test_profiles(), labels4()),
                    std::invalid_argument);

    auto bad_rows = base_config(47.7);
    bad_rows.confusion_profiles[0][2][1] += 0.5;
    CHECK_THROWS_AS(NodeSim(bad_rows, test_profiles(), labels4()), std::invalid_argument);

    auto unknown_initial = base_config(47.7);
    unknown_initial.initial_mode = 7;
    CHECK_THROWS_AS(NodeSim(unknown_initial, test_profiles(), labels4()),
                    std::invalid_argument);
}

TEST_CASE("uniform_error_matrix rows are stochastic with the accuracy on the diagonal") {
    const auto m = uniform_error_matrix(84.24, 18);
    for (std::size_t i = 0; i < m.size(); ++i) {
        double sum = 0.0;
        for (double v : m[i]) sum += v;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m[i][i] == doctest::Approx(0.8424));
    }
    const auto single = uniform_error_matrix(50.0, 1);
    CHECK(single[0][0] == doctest::Approx(1.0));
}

TEST_CASE("spread_confidences keeps the prediction as the argmax") {
    const auto v = spread_confidences(18, 4, 0.2);
    CHECK(v[4] == doctest::Approx(0.2));
    double sum = 0.0;
    for (double x : v) sum += x;
    CHECK(sum == doctest::Approx(1.0));
    for (std::size_t i = 0; i < v.size(); ++i)
        if (i != 4) CHECK(v[i] < v[4]);
}
