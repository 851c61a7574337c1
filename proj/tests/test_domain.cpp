#include "doctest.h"

#include <random>

#include "qrmedge/domain.hpp"
#include "qrmedge/rng.hpp"

using namespace qrmedge;

namespace {

Policy three_band(const char* name, ModeId hi, ModeId mid, ModeId lo) {
    return Policy{name, {{100.0, 50.0, hi}, {50.0, 25.0, mid}, {25.0, 0.0, lo}}};
}

std::vector<ModeProfile> test_profiles() {
    return {
        {0, "m0", 49.9, 1.58, 4.77, 27.0, 84.24, 78.14},
        {1, "m1", 47.6, 1.37, 4.43, 33.0, 81.0, 74.99},
        {2, "m2", 26.9, 0.25, 2.61, 270.0, 76.27, 70.08},
    };
}

}  // namespace

TEST_CASE("validate_policy accepts the three-band reconfiguration policy") {
    const auto profiles = test_profiles();
    const Policy p = three_band("scenario7", 0, 1, 2);
    CHECK_NOTHROW(validate_policy(p, profiles));
}

TEST_CASE("validate_policy accepts a whole-range single band") {
    const Policy p{"whole", {{100.0, 0.0, 0}}};
    CHECK_NOTHROW(validate_policy(p));
}

TEST_CASE("validate_policy rejects gaps, overlaps, and unknown modes") {
    const auto profiles = test_profiles();
    const Policy gap{"gap", {{100.0, 50.0, 0}, {40.0, 0.0, 1}}};
    CHECK_THROWS_WITH_AS(validate_policy(gap), doctest::Contains("gap"), std::invalid_argument);

    const Policy overlap{"ovl", {{100.0, 40.0, 0}, {50.0, 0.0, 1}}};
    CHECK_THROWS_WITH_AS(validate_policy(overlap), doctest::Contains("overlap"),
                         std::invalid_argument);

    const Policy unknown{"unk", {{100.0, 0.0, 9}}};
    CHECK_NOTHROW(validate_policy(unknown));  // structure alone is fine
    CHECK_THROWS_AS(validate_policy(unknown, profiles), std::invalid_argument);

    const Policy hole_top{"top", {{90.0, 0.0, 0}}};
    CHECK_THROWS_AS(validate_policy(hole_top), std::invalid_argument);
    const Policy hole_bottom{"bot", {{100.0, 10.0, 0}}};
    CHECK_THROWS_AS(validate_policy(hole_bottom), std::invalid_argument);
    CHECK_THROWS_AS(validate_policy(Policy{"empty", {}}), std::invalid_argument);
}

TEST_CASE("validate_policy is idempotent") {
    const Policy p = three_band("scenario7", 0, 1, 2);
    const Policy& once = validate_policy(p);
    const Policy& twice = validate_policy(once);
    CHECK(twice.bands.size() == p.bands.size());
    CHECK(twice.name == p.name);
}

TEST_CASE("band_for maps battery percentages with the (lo,hi] rule") {
    const Policy s7 = three_band("scenario7", 0, 1, 2);
    CHECK(band_for(s7, 60.0) == 0);
    CHECK(band_for(s7, 50.0) == 1);  // boundary belongs to the lower band
    CHECK(band_for(s7, 25.0) == 2);
    CHECK(band_for(s7, 100.0) == 0);
    CHECK(band_for(s7, 0.001) == 2);

    const Policy s2 = three_band("scenario2", 1, 1, 1);
    CHECK(band_for(s2, 10.0) == 1);
}

TEST_CASE("band_for rejects a dead battery and out-of-range values") {
    const Policy s7 = three_band("scenario7", 0, 1, 2);
    CHECK_THROWS_AS(band_for(s7, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(band_for(s7, -3.0), std::invalid_argument);
    CHECK_THROWS_AS(band_for(s7, 101.0), std::invalid_argument);
}

TEST_CASE("band_for is total over (0,100] for random valid policies") {
    Rng rng(20260808);
    for (int trial = 0; trial < 200; ++trial) {
        // Random cut points make 1..5 contiguous bands over (0,100].
        const int cuts = 1 + static_cast<int>(rng.next_u64() % 4);
        std::vector<double> edges{100.0};
        for (int i = 0; i < cuts; ++i) edges.push_back(rng.uniform(1.0, 99.0));
        edges.push_back(0.0);
        std::sort(edges.rbegin(), edges.rend());
        Policy p{"r", {}};
        for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
            if (edges[i] - edges[i + 1] < 1e-6) continue;
            p.bands.push_back({edges[i], edges[i + 1], static_cast<ModeId>(rng.next_u64() % 3)});
        }
        if (p.bands.empty()) continue;
        p.bands.back().lower_pct = 0.0;
        p.bands.front().upper_pct = 100.0;
        validate_policy(p);
        for (int s = 0; s < 50; ++s) {
            const double pct = rng.uniform(1e-9, 100.0);
            std::size_t hits = 0;
            for (const auto& b : p.bands)
                if (pct > b.lower_pct && pct <= b.upper_pct) ++hits;
            CHECK(hits == 1);
            CHECK_NOTHROW(band_for(p, pct));
        }
        CHECK(band_for(p, 100.0) == p.bands.front().mode);
    }
}

TEST_CASE("mode profile invariants") {
    auto ok = test_profiles()[0];
    CHECK_NOTHROW(validate_profile(ok));

    auto gpu_heavy = ok;
    gpu_heavy.gpu_power_w = gpu_heavy.device_power_w + 1.0;
    CHECK_THROWS_AS(validate_profile(gpu_heavy), std::invalid_argument);

    auto slow = ok;
    slow.throughput_fps = 24.9;
    CHECK_THROWS_AS(validate_profile(slow), std::invalid_argument);

    auto bad_pct = ok;
    bad_pct.accuracy_pct = 130.0;
    CHECK_THROWS_AS(validate_profile(bad_pct), std::invalid_argument);
}

TEST_CASE("battery state bounds and percentage") {
    const BatteryState b = full_battery(47.7);
    CHECK(b.percentage() == doctest::Approx(100.0));
    CHECK_NOTHROW(validate_battery(b));
    CHECK_THROWS_AS(full_battery(0.0), std::invalid_argument);
    CHECK_THROWS_AS(validate_battery(BatteryState{10.0, 11.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate_battery(BatteryState{10.0, -0.1}), std::invalid_argument);
}

TEST_CASE("confusion matrix built from N records has total N") {
    Rng rng(7);
    const std::size_t k = 4;
    std::vector<PredictionRecord> records;
    for (int i = 0; i < 500; ++i) {
        PredictionRecord r;
        r.true_class = rng.next_u64() % k;
        for (std::size_t j = 0; j < k; ++j) r.confidences.push_back(rng.uniform01());
        records.push_back(std::move(r));
    }
    const auto cm = confusion_from_records(records, k);
    CHECK(cm.total() == records.size());
}

TEST_CASE("argmax ties resolve to the lowest class index") {
    PredictionRecord r;
    r.true_class = 0;
    r.confidences = {0.3, 0.7, 0.7};
    CHECK(argmax_confidence(r) == 1);
}
