#pragma once
// Core value types shared by every module: operating modes, policies,
// battery state, classification records, and the node<->collector records.
// All types are immutable values after validation; no shared mutable state.

#include <cstdint>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qrmedge {

using ModeId = std::uint32_t;

// One deployable operating mode: its cost (power, size) and quality
// (throughput, accuracy, F1) parameters. Percentages are 0..100.
struct ModeProfile {
    ModeId mode_id = 0;
    std::string model_name;
    double model_size_mb = 0.0;
    double gpu_power_w = 0.0;
    double device_power_w = 0.0;
    double throughput_fps = 0.0;
    double accuracy_pct = 0.0;
    double f1_pct = 0.0;
};

// Minimum sustained throughput for keeping up with a live 25 fps feed.
inline constexpr double kMinRealtimeFps = 25.0;

inline const ModeProfile& validate_profile(const ModeProfile& p) {
    if (p.model_name.empty())
        throw std::invalid_argument("mode " + std::to_string(p.mode_id) + ": empty model name");
    if (!(p.model_size_mb > 0.0))
        throw std::invalid_argument("mode " + std::to_string(p.mode_id) + ": model_size_mb must be > 0");
    if (!(p.gpu_power_w > 0.0) || !(p.device_power_w > 0.0))
        throw std::invalid_argument("mode " + std::to_string(p.mode_id) + ": power must be > 0");
    if (p.gpu_power_w > p.device_power_w)
        throw std::invalid_argument("mode " + std::to_string(p.mode_id) +
                                    ": gpu_power_w exceeds device_power_w");
    if (!(p.throughput_fps >= kMinRealtimeFps))
        throw std::invalid_argument("mode " + std::to_string(p.mode_id) +
                                    ": throughput_fps below real-time floor of 25");
    if (!(p.accuracy_pct >= 0.0 && p.accuracy_pct <= 100.0) ||
        !(p.f1_pct >= 0.0 && p.f1_pct <= 100.0))
        throw std::invalid_argument("mode " + std::to_string(p.mode_id) +
                                    ": accuracy/f1 percentages out of [0,100]");
    return p;
}

inline const ModeProfile* find_profile(std::span<const ModeProfile> profiles, ModeId id) {
    for (const auto& p : profiles)
        if (p.mode_id == id) return &p;
    return nullptr;
}

// One battery band of a policy: percentage x falls in the band when
// lower_pct < x <= upper_pct.
struct PolicyBand {
    double upper_pct = 100.0;  // inclusive
    double lower_pct = 0.0;    // exclusive
    ModeId mode = 0;
};

// Ordered battery bands mapped to mode ids, descending by battery
// percentage; bands must tile (0,100] exactly.
struct Policy {
    std::string name;
    std::vector<PolicyBand> bands;
};

namespace detail {
inline constexpr double kBandEps = 1e-9;
inline bool near(double a, double b) { return std::fabs(a - b) <= kBandEps; }
}  // namespace detail

// Checks band structure: contiguous, non-overlapping, covering (0,100],
// descending. Throws std::invalid_argument naming the first violation.
inline const Policy& validate_policy(const Policy& p) {
    if (p.bands.empty())
        throw std::invalid_argument("policy '" + p.name + "': no bands");
    if (!detail::near(p.bands.front().upper_pct, 100.0))
        throw std::invalid_argument("policy '" + p.name + "': first band must start at 100%");
    for (std::size_t i = 0; i < p.bands.size(); ++i) {
        const auto& b = p.bands[i];
        if (!(b.lower_pct < b.upper_pct))
            throw std::invalid_argument("policy '" + p.name + "': band " + std::to_string(i) +
                                        " is empty or inverted");
        if (i + 1 < p.bands.size() && !detail::near(b.lower_pct, p.bands[i + 1].upper_pct)) {
            const char* what = b.lower_pct > p.bands[i + 1].upper_pct ? "gap" : "overlap";
            throw std::invalid_argument("policy '" + p.name + "': " + what + " between bands " +
                                        std::to_string(i) + " and " + std::to_string(i + 1));
        }
    }
    if (!detail::near(p.bands.back().lower_pct, 0.0))
        throw std::invalid_argument("policy '" + p.name + "': bands do not reach 0%");
    return p;
}

// Full validation: band structure plus every referenced mode resolving to
// a profile.
inline const Policy& validate_policy(const Policy& p, std::span<const ModeProfile> profiles) {
    validate_policy(p);
    for (const auto& b : p.bands)
        if (!find_profile(profiles, b.mode))
            throw std::invalid_argument("policy '" + p.name + "': band references unknown mode " +
                                        std::to_string(b.mode));
    return p;
}

// Index of the unique band containing battery_pct under the (lo,hi] rule.
// battery_pct == 0 means the node is dead: that is an end-of-run signal,
// not a band, and is rejected here.
inline std::size_t band_index_for(const Policy& p, double battery_pct) {
    if (!(battery_pct > 0.0) || battery_pct > 100.0 + detail::kBandEps)
        throw std::invalid_argument("battery percentage " + std::to_string(battery_pct) +
                                    " outside (0,100]");
    for (std::size_t i = 0; i < p.bands.size(); ++i) {
        const auto& b = p.bands[i];
        if (battery_pct > b.lower_pct && battery_pct <= b.upper_pct + detail::kBandEps) return i;
    }
    throw std::invalid_argument("policy '" + p.name + "' has no band for " +
                                std::to_string(battery_pct) + "%");
}

inline ModeId band_for(const Policy& p, double battery_pct) {
    return p.bands[band_index_for(p, battery_pct)].mode;
}

// Remaining energy of one node's battery. percentage() is derived, never
// stored, so it cannot drift from the energy bookkeeping.
struct BatteryState {
    double capacity_wh = 0.0;
    double remaining_wh = 0.0;

    double percentage() const { return 100.0 * remaining_wh / capacity_wh; }
    bool exhausted() const { return remaining_wh <= 0.0; }
};

inline BatteryState full_battery(double capacity_wh) {
    if (!(capacity_wh > 0.0)) throw std::invalid_argument("battery capacity must be > 0");
    return BatteryState{capacity_wh, capacity_wh};
}

inline const BatteryState& validate_battery(const BatteryState& b) {
    if (!(b.capacity_wh > 0.0)) throw std::invalid_argument("battery capacity must be > 0");
    if (b.remaining_wh < 0.0 || b.remaining_wh > b.capacity_wh)
        throw std::invalid_argument("remaining_wh outside [0, capacity]");
    return b;
}

// Per-class tally of classification outcomes.
struct ClassCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
};

// K x K count grid, rows = true class, columns = predicted class.
struct ConfusionMatrix {
    std::vector<std::string> labels;                  // length K
    std::vector<std::vector<std::uint64_t>> counts;   // K x K

    std::size_t num_classes() const { return labels.size(); }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (const auto& row : counts)
            for (auto c : row) n += c;
        return n;
    }
};

inline ConfusionMatrix make_confusion(std::vector<std::string> labels) {
    if (labels.empty()) throw std::invalid_argument("confusion matrix needs >= 1 class");
    ConfusionMatrix cm;
    const std::size_t k = labels.size();
    cm.labels = std::move(labels);
    cm.counts.assign(k, std::vector<std::uint64_t>(k, 0));
    return cm;
}

inline ConfusionMatrix make_confusion(std::size_t num_classes) {
    std::vector<std::string> labels;
    labels.reserve(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) labels.push_back("class" + std::to_string(i));
    return make_confusion(std::move(labels));
}

inline const ConfusionMatrix& validate_confusion(const ConfusionMatrix& cm) {
    const std::size_t k = cm.labels.size();
    if (k == 0) throw std::invalid_argument("confusion matrix needs >= 1 class");
    if (cm.counts.size() != k) throw std::invalid_argument("confusion matrix rows != K");
    for (const auto& row : cm.counts)
        if (row.size() != k) throw std::invalid_argument("confusion matrix is not square");
    return cm;
}

// One classified sample: the true class and the per-class confidence
// vector (each value in [0,1]). Carrying confidences instead of raw
// inputs is the privacy contract of the whole system.
struct PredictionRecord {
    std::size_t true_class = 0;
    std::vector<double> confidences;
};

// Ties resolve to the lowest class index.
inline std::size_t argmax_confidence(const PredictionRecord& r) {
    if (r.confidences.empty()) throw std::invalid_argument("prediction record has no confidences");
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.confidences.size(); ++i)
        if (r.confidences[i] > r.confidences[best]) best = i;
    return best;
}

inline ConfusionMatrix confusion_from_records(std::span<const PredictionRecord> records,
                                              std::vector<std::string> labels) {
    ConfusionMatrix cm = make_confusion(std::move(labels));
    const std::size_t k = cm.num_classes();
    for (const auto& r : records) {
        if (r.true_class >= k || r.confidences.size() != k)
            throw std::invalid_argument("prediction record does not match class count");
        cm.counts[r.true_class][argmax_confidence(r)]++;
    }
    return cm;
}

inline ConfusionMatrix confusion_from_records(std::span<const PredictionRecord> records,
                                              std::size_t num_classes) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < num_classes; ++i) labels.push_back("class" + std::to_string(i));
    return confusion_from_records(records, std::move(labels));
}

// One periodic node->collector report. The schema is closed: these fields
// and nothing else ever cross the wire (see protocol.hpp).
struct TelemetrySample {
    std::string node_id;
    std::int64_t timestamp_ms = 0;  // node virtual clock
    ModeId mode = 0;
    double gpu_power_w = 0.0;
    double device_power_w = 0.0;
    double temperature_c = 0.0;
    double fps = 0.0;
    double battery_pct = 0.0;
    std::string label;      // latest recognized action ("" before first batch)
    double confidence = 0.0;

    bool operator==(const TelemetrySample&) const = default;
};

// Collector->node instruction to switch operating mode. command_id is
// strictly increasing per node across distinct commands.
struct ReconfigCommand {
    std::uint64_t command_id = 0;
    std::string node_id;
    ModeId target_mode = 0;
    std::int64_t issued_at_ms = 0;

    bool operator==(const ReconfigCommand&) const = default;
};

}  // namespace qrmedge
