#pragma once
// Deterministic discrete-event simulation of one edge node: inference
// batches complete on a fixed cadence, a synthetic classifier draws
// outcomes from per-mode confusion profiles, the battery drains at the
// active mode's device power, telemetry fires on its own period, and
// mode switches arrive as commands between steps.
//
// Identical NodeConfig (seed included) yields a byte-identical event
// stream; all draws go through rng.hpp.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qrmedge/domain.hpp"
#include "qrmedge/rng.hpp"

namespace qrmedge {

using ConfusionProfile = std::vector<std::vector<double>>;  // row-stochastic KxK

// "Uniform error" profile: the diagonal carries the mode's accuracy, the
// remaining mass splits evenly over the other classes.
inline ConfusionProfile uniform_error_matrix(double accuracy_pct, std::size_t num_classes) {
    if (num_classes == 0) throw std::invalid_argument("uniform_error_matrix: no classes");
    const double diag = accuracy_pct / 100.0;
    const double off =
        num_classes == 1 ? 0.0 : (1.0 - diag) / static_cast<double>(num_classes - 1);
    ConfusionProfile m(num_classes, std::vector<double>(num_classes, off));
    for (std::size_t i = 0; i < num_classes; ++i)
        m[i][i] = num_classes == 1 ? 1.0 : diag;
    return m;
}

// Expands a (predicted, confidence) pair into a full confidence vector:
// the predicted class gets the confidence, the rest share the remainder.
inline std::vector<double> spread_confidences(std::size_t num_classes, std::size_t predicted,
                                              double confidence) {
    if (predicted >= num_classes) throw std::invalid_argument("spread_confidences: bad class");
    const double rest =
        num_classes == 1 ? 0.0 : (1.0 - confidence) / static_cast<double>(num_classes - 1);
    std::vector<double> v(num_classes, rest);
    v[predicted] = confidence;
    return v;
}

// Fully resolved per-node simulation parameters.
struct NodeConfig {
    std::string node_id;
    ModeId initial_mode = 0;
    BatteryState battery;
    std::vector<double> class_distribution;       // length K, sums to 1
    std::map<ModeId, ConfusionProfile> confusion_profiles;
    double input_fps = 25.0;
    int batch_frames = 64;
    std::int64_t telemetry_period_ms = 100;
    double switch_latency_s = 0.0;
    std::uint64_t rng_seed = 0;
};

struct BatchCompleted {
    double t_ms = 0.0;
    std::size_t true_class = 0;
    std::size_t predicted_class = 0;
    double confidence = 0.0;
};

struct TelemetryDue {
    double t_ms = 0.0;
    TelemetrySample sample;
};

struct ModeSwitched {
    double t_ms = 0.0;
    ModeId from = 0;
    ModeId to = 0;
};

struct BatteryExhausted {
    double t_ms = 0.0;
};

using NodeEvent = std::variant<BatchCompleted, TelemetryDue, ModeSwitched, BatteryExhausted>;

inline double event_time_ms(const NodeEvent& e) {
    return std::visit([](const auto& ev) { return ev.t_ms; }, e);
}

class NodeSim {
  public:
    NodeSim(NodeConfig config, std::vector<ModeProfile> profiles,
            std::vector<std::string> class_labels)
        : cfg_(std::move(config)),
          profiles_(std::move(profiles)),
          labels_(std::move(class_labels)),
          rng_(cfg_.rng_seed) {
        if (cfg_.node_id.empty()) throw std::invalid_argument("nodesim: empty node id");
        validate_battery(cfg_.battery);
        if (labels_.empty()) throw std::invalid_argument("nodesim: no class labels");
        const std::size_t k = labels_.size();
        if (cfg_.class_distribution.size() != k)
            throw std::invalid_argument("nodesim: class_distribution length != K");
        double sum = 0.0;
        for (double p : cfg_.class_distribution) {
            if (p < 0.0) throw std::invalid_argument("nodesim: negative class probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("nodesim: class_distribution must sum to 1");
        if (!(cfg_.input_fps > 0.0) || cfg_.batch_frames < 1)
            throw std::invalid_argument("nodesim: bad batch parameters");
        if (cfg_.telemetry_period_ms < 1)
            throw std::invalid_argument("nodesim: telemetry period must be >= 1 ms");
        if (cfg_.switch_latency_s < 0.0)
            throw std::invalid_argument("nodesim: negative switch latency");
        for (const auto& p : profiles_) {
            const auto it = cfg_.confusion_profiles.find(p.mode_id);
            if (it == cfg_.confusion_profiles.end())
                throw std::invalid_argument("nodesim: mode " + std::to_string(p.mode_id) +
                                            " has no confusion profile");
            check_row_stochastic(it->second, k);
        }
        if (!find_profile(profiles_, cfg_.initial_mode))
            throw std::invalid_argument("nodesim: initial mode has no profile");
        mode_ = cfg_.initial_mode;
        battery_ = cfg_.battery;
        batch_period_ms_ = static_cast<double>(cfg_.batch_frames) * 1000.0 / cfg_.input_fps;
        next_batch_ms_ = batch_period_ms_;
    }

    // Advances the virtual clock to until_ms, draining the battery and
    // emitting every event due on the way (timestamps non-decreasing; a
    // BatteryExhausted event is always last).
    std::vector<NodeEvent> step(double until_ms) {
        std::vector<NodeEvent> events;
        if (until_ms < t_ms_) throw std::invalid_argument("nodesim: time moves forward only");
        while (!exhausted_) {
            const double power_w = active_power_w();
            const double exhaust_at =
                t_ms_ + battery_.remaining_wh * kMsPerHour / power_w;
            double t_next = std::min(until_ms, exhaust_at);
            const double switch_at =
                pending_switch_ ? pending_switch_->complete_at_ms : kNever;
            t_next = std::min({t_next, switch_at, next_batch_ms_, next_telemetry_due_ms()});

            drain(power_w, t_next - t_ms_);
            t_ms_ = t_next;

            if (pending_switch_ && t_ms_ == switch_at) {
                complete_switch(events);
                continue;
            }
            if (t_ms_ == next_batch_ms_) {
                run_batch(events);
                continue;
            }
            if (t_ms_ == next_telemetry_due_ms()) {
                ++telemetry_emitted_;
                events.push_back(TelemetryDue{t_ms_, current_sample()});
                continue;
            }
            if (t_ms_ == exhaust_at) {
                battery_.remaining_wh = 0.0;
                exhausted_ = true;
                events.push_back(BatteryExhausted{t_ms_});
                break;
            }
            break;  // reached until_ms
        }
        return events;
    }

    // Draws a prediction for true_class from the active mode's confusion
    // row; confidence is high when the draw lands on the row's argmax.
    std::pair<std::size_t, double> synth_classify(std::size_t true_class) {
        const ConfusionProfile& profile = cfg_.confusion_profiles.at(mode_);
        if (true_class >= profile.size())
            throw std::invalid_argument("synth_classify: class out of range");
        const auto& row = profile[true_class];
        const std::size_t predicted = rng_.categorical(row);
        std::size_t row_argmax = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[row_argmax]) row_argmax = j;
        const double confidence =
            predicted == row_argmax ? rng_.uniform(0.5, 1.0) : rng_.uniform(0.2, 0.8);
        return {predicted, confidence};
    }

    // Applies a mode-switch command at the current virtual time. With zero
    // latency the switch is immediate and the event is returned; with a
    // latency, inference pauses and step() emits ModeSwitched once the
    // redeploy completes (power keeps draining at the old mode's rate).
    // Commanding the current mode is a no-op. Commands arriving during a
    // switch queue up behind it.
    std::optional<ModeSwitched> apply_reconfig(const ReconfigCommand& cmd) {
        if (!find_profile(profiles_, cmd.target_mode))
            throw std::invalid_argument("apply_reconfig: unknown target mode " +
                                        std::to_string(cmd.target_mode));
        if (pending_switch_) {
            switch_queue_.push_back(cmd.target_mode);
            return std::nullopt;
        }
        return start_switch(cmd.target_mode);
    }

    double now_ms() const { return t_ms_; }
    bool exhausted() const { return exhausted_; }
    ModeId mode() const { return mode_; }
    const BatteryState& battery() const { return battery_; }
    const std::vector<std::string>& class_labels() const { return labels_; }
    const NodeConfig& config() const { return cfg_; }
    double energy_drained_wh() const { return energy_drained_wh_; }
    const std::map<ModeId, double>& energy_by_mode_wh() const { return energy_by_mode_wh_; }

    double next_telemetry_due_ms() const {
        return static_cast<double>((telemetry_emitted_ + 1) * cfg_.telemetry_period_ms);
    }

    // Snapshot of what the node would report right now.
    TelemetrySample current_sample() const {
        const ModeProfile& p = *find_profile(profiles_, mode_);
        TelemetrySample s;
        s.node_id = cfg_.node_id;
        s.timestamp_ms = static_cast<std::int64_t>(std::llround(t_ms_));
        s.mode = mode_;
        s.gpu_power_w = p.gpu_power_w;
        s.device_power_w = p.device_power_w;
        s.temperature_c = synth_temperature(p);
        s.fps = p.throughput_fps;
        s.battery_pct = std::min(100.0, std::max(0.0, battery_.percentage()));
        s.label = last_prediction_ ? labels_[last_prediction_->first] : "";
        s.confidence = last_prediction_ ? last_prediction_->second : 0.0;
        return s;
    }

  private:
    static constexpr double kMsPerHour = 3.6e6;
    static constexpr double kNever = std::numeric_limits<double>::infinity();

    struct PendingSwitch {
        ModeId target;
        double complete_at_ms;
    };

    static void check_row_stochastic(const ConfusionProfile& m, std::size_t k) {
        if (m.size() != k) throw std::invalid_argument("nodesim: confusion profile must be KxK");
        for (const auto& row : m) {
            if (row.size() != k)
                throw std::invalid_argument("nodesim: confusion profile must be KxK");
            double sum = 0.0;
            for (double v : row) {
                if (v < 0.0) throw std::invalid_argument("nodesim: negative confusion entry");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw std::invalid_argument("nodesim: confusion rows must sum to 1");
        }
    }

    double active_power_w() const { return find_profile(profiles_, mode_)->device_power_w; }

    // Constant plus a mode-dependent offset; synthetic stand-in since the
    // real sensor is out of scope.
    static double synth_temperature(const ModeProfile& p) {
        return 38.0 + 1.5 * p.device_power_w;
    }

    void drain(double power_w, double dt_ms) {
        if (dt_ms <= 0.0) return;
        const double wh = power_w * dt_ms / kMsPerHour;
        battery_.remaining_wh = std::max(0.0, battery_.remaining_wh - wh);
        energy_drained_wh_ += wh;
        energy_by_mode_wh_[mode_] += wh;
    }

    void run_batch(std::vector<NodeEvent>& events) {
        const std::size_t true_class = rng_.categorical(cfg_.class_distribution);
        const auto [predicted, confidence] = synth_classify(true_class);
        last_prediction_ = {predicted, confidence};
        events.push_back(BatchCompleted{t_ms_, true_class, predicted, confidence});
        next_batch_ms_ += batch_period_ms_;
    }

    std::optional<ModeSwitched> start_switch(ModeId target) {
        if (target == mode_) return std::nullopt;
        if (cfg_.switch_latency_s <= 0.0) {
            const ModeId from = mode_;
            mode_ = target;
            next_batch_ms_ = t_ms_ + batch_period_ms_;  // redeploy restarts the batch cycle
            return ModeSwitched{t_ms_, from, target};
        }
        pending_switch_ = {target, t_ms_ + cfg_.switch_latency_s * 1000.0};
        next_batch_ms_ = kNever;  // inference paused while redeploying
        return std::nullopt;
    }

    void complete_switch(std::vector<NodeEvent>& events) {
        const ModeId from = mode_;
        mode_ = pending_switch_->target;
        pending_switch_.reset();
        next_batch_ms_ = t_ms_ + batch_period_ms_;
        events.push_back(ModeSwitched{t_ms_, from, mode_});
        while (!switch_queue_.empty()) {
            const ModeId next = switch_queue_.front();
            switch_queue_.pop_front();
            if (next == mode_) continue;
            if (auto ev = start_switch(next)) events.push_back(*ev);
            break;
        }
    }

    NodeConfig cfg_;
    std::vector<ModeProfile> profiles_;
    std::vector<std::string> labels_;
    Rng rng_;

    double t_ms_ = 0.0;
    ModeId mode_ = 0;
    BatteryState battery_;
    bool exhausted_ = false;

    double batch_period_ms_ = 0.0;
    double next_batch_ms_ = 0.0;
    std::int64_t telemetry_emitted_ = 0;
    std::optional<PendingSwitch> pending_switch_;
    std::deque<ModeId> switch_queue_;
    std::optional<std::pair<std::size_t, double>> last_prediction_;

    double energy_drained_wh_ = 0.0;
    std::map<ModeId, double> energy_by_mode_wh_;
};

}  // namespace qrmedge
