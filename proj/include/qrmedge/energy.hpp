#pragma once
// Continuous battery discharge model and the closed-form evaluator that
// turns a policy into total working time, per-band segments, and the
// duration-weighted F1 of the run.
//
// The model is piecewise linear: each mode drains the battery at its
// constant device power; reconfiguration itself costs nothing here (the
// node simulator makes it a configurable latency).

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qrmedge/domain.hpp"
#include "qrmedge/metrics.hpp"

namespace qrmedge {

inline constexpr double kSecondsPerHour = 3600.0;

// Drains power_w for duration_s, clamping at empty.
inline BatteryState discharge(BatteryState b, double power_w, double duration_s) {
    if (!(power_w > 0.0)) throw std::invalid_argument("discharge: power must be > 0");
    if (duration_s < 0.0) throw std::invalid_argument("discharge: negative duration");
    b.remaining_wh -= power_w * duration_s / kSecondsPerHour;
    if (b.remaining_wh < 0.0) b.remaining_wh = 0.0;
    return b;
}

// Seconds of constant-power drain until the battery reaches threshold_pct.
inline double time_to_threshold(const BatteryState& b, double power_w, double threshold_pct) {
    if (!(power_w > 0.0)) throw std::invalid_argument("time_to_threshold: power must be > 0");
    const double threshold_wh = threshold_pct / 100.0 * b.capacity_wh;
    if (threshold_wh > b.remaining_wh + 1e-12)
        throw std::invalid_argument("time_to_threshold: threshold above current charge");
    const double span_wh = b.remaining_wh - threshold_wh;
    return span_wh <= 0.0 ? 0.0 : span_wh * kSecondsPerHour / power_w;
}

// Capacity sized so that the given mode runs for exactly target_hours.
inline double calibrate_capacity(const ModeProfile& profile, double target_hours) {
    if (!(target_hours > 0.0)) throw std::invalid_argument("calibrate_capacity: hours must be > 0");
    return profile.device_power_w * target_hours;
}

struct SegmentReport {
    ModeId mode = 0;
    double duration_s = 0.0;
    double energy_wh = 0.0;
    double f1_pct = 0.0;
};

// Outcome of running one policy from full battery to empty.
struct ScenarioReport {
    std::string policy;
    double total_working_time_s = 0.0;
    std::vector<SegmentReport> segments;  // one per band, highest battery first
    double weighted_f1_pct = 0.0;
    int reconfiguration_count = 0;
};

// Closed form: band i covers capacity fraction (upper-lower)/100 and is
// drained at its mode's device power, so its duration and energy follow
// directly. Reconfigurations are counted at adjacent bands whose modes
// differ.
inline ScenarioReport evaluate_policy(const Policy& policy,
                                      std::span<const ModeProfile> profiles,
                                      double capacity_wh) {
    validate_policy(policy, profiles);
    if (!(capacity_wh > 0.0)) throw std::invalid_argument("evaluate_policy: capacity must be > 0");

    ScenarioReport report;
    report.policy = policy.name;
    std::vector<TimedSegment> f1_segments;
    for (std::size_t i = 0; i < policy.bands.size(); ++i) {
        const auto& band = policy.bands[i];
        const ModeProfile& profile = *find_profile(profiles, band.mode);
        SegmentReport seg;
        seg.mode = band.mode;
        seg.energy_wh = capacity_wh * (band.upper_pct - band.lower_pct) / 100.0;
        seg.duration_s = seg.energy_wh * kSecondsPerHour / profile.device_power_w;
        seg.f1_pct = profile.f1_pct;
        report.total_working_time_s += seg.duration_s;
        f1_segments.push_back({seg.duration_s, seg.f1_pct});
        report.segments.push_back(seg);
        if (i > 0 && policy.bands[i - 1].mode != band.mode) report.reconfiguration_count++;
    }
    report.weighted_f1_pct = time_weighted_f1(f1_segments);
    return report;
}

// Working-time gain of `report` over `baseline`, in percent.
inline double extension_ratio(const ScenarioReport& report, const ScenarioReport& baseline) {
    if (!(baseline.total_working_time_s > 0.0))
        throw std::invalid_argument("extension_ratio: baseline time must be > 0");
    return 100.0 * (report.total_working_time_s - baseline.total_working_time_s) /
           baseline.total_working_time_s;
}

// "Hh MM'" rendering, minutes rounded half-up (10h 00', 12h 16').
inline std::string format_duration(double seconds) {
    if (seconds < 0.0) throw std::invalid_argument("format_duration: negative duration");
    long long minutes = static_cast<long long>(std::floor(seconds / 60.0 + 0.5));
    const long long hours = minutes / 60;
    minutes %= 60;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lldh %02lld'", hours, minutes);
    return buf;
}

// Report CSV: `scenario,total_seconds,display_time,weighted_f1,reconfig_count`,
// plus extension/F1-loss columns when a baseline is given.
inline void write_report_csv(std::ostream& os, std::span<const ScenarioReport> reports,
                             const ScenarioReport* baseline = nullptr) {
    os << "scenario,total_seconds,display_time,weighted_f1,reconfig_count";
    if (baseline) os << ",extension_pct,f1_loss";
    os << '\n';
    char buf[160];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%s,%.3f,%s,%.2f,%d", r.policy.c_str(),
                      r.total_working_time_s, format_duration(r.total_working_time_s).c_str(),
                      r.weighted_f1_pct, r.reconfiguration_count);
        os << buf;
        if (baseline) {
            std::snprintf(buf, sizeof buf, ",%.2f,%.2f", extension_ratio(r, *baseline),
                          baseline->weighted_f1_pct - r.weighted_f1_pct);
            os << buf;
        }
        os << '\n';
    }
}

// One JSON object per report, for the NDJSON side of the reporting
// contract.
inline void write_report_ndjson(std::ostream& os, std::span<const ScenarioReport> reports) {
    char buf[200];
    for (const auto& r : reports) {
        os << "{\"scenario\":\"" << r.policy << "\"";
        std::snprintf(buf, sizeof buf,
                      ",\"total_seconds\":%.3f,\"display_time\":\"%s\",\"weighted_f1\":%.2f,"
                      "\"reconfig_count\":%d,\"segments\":[",
                      r.total_working_time_s, format_duration(r.total_working_time_s).c_str(),
                      r.weighted_f1_pct, r.reconfiguration_count);
        os << buf;
        for (std::size_t i = 0; i < r.segments.size(); ++i) {
            const auto& s = r.segments[i];
            std::snprintf(buf, sizeof buf,
                          "%s{\"mode\":%u,\"duration_s\":%.3f,\"energy_wh\":%.6f}",
                          i ? "," : "", s.mode, s.duration_s, s.energy_wh);
            os << buf;
        }
        os << "]}\n";
    }
}

}  // namespace qrmedge
