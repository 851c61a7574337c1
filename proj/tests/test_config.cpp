#include "doctest.h"

#include <fstream>
#include <sstream>

#include "qrmedge/config.hpp"
#include "qrmedge/nodesim.hpp"
#include "qrmedge/toml.hpp"

using namespace qrmedge;

TEST_CASE("default configuration loads and validates") {
    const ScenarioConfig cfg = default_config();
    CHECK(cfg.battery_capacity_wh == doctest::Approx(47.7));
    CHECK(cfg.class_labels.size() == 18);
    CHECK(cfg.modes.size() == 3);
    CHECK(cfg.policies.size() == 7);
    CHECK(cfg.nodes.size() == 1);
    CHECK(cfg.active_policy == "scenario7");
    CHECK(cfg.modes[0].device_power_w == doctest::Approx(4.77));
    CHECK(cfg.modes[1].device_power_w == doctest::Approx(4.43));
    CHECK(cfg.modes[2].device_power_w == doctest::Approx(2.61));
    CHECK(cfg.modes[0].f1_pct == doctest::Approx(78.14));
    CHECK(cfg.modes[1].f1_pct == doctest::Approx(74.99));
    CHECK(cfg.modes[2].f1_pct == doctest::Approx(70.08));
}

TEST_CASE("default class distribution carries the test-split proportions") {
    const ScenarioConfig cfg = default_config();
    double sum = 0.0;
    for (double p : cfg.class_distribution) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    const auto index_of = [&](const char* label) {
        for (std::size_t i = 0; i < cfg.class_labels.size(); ++i)
            if (cfg.class_labels[i] == label) return i;
        FAIL("missing label ", label);
        return std::size_t{0};
    };
    CHECK(cfg.class_distribution[index_of("cooking")] == doctest::Approx(332.0 / 2495.0));
    CHECK(cfg.class_distribution[index_of("no action")] == doctest::Approx(200.0 / 2495.0));
    CHECK(cfg.class_distribution[index_of("lying on bed or sofa")] ==
          doctest::Approx(40.0 / 2495.0));
}

TEST_CASE("scenario policies map the battery bands from the configuration") {
    const ScenarioConfig cfg = default_config();
    const Policy* s7 = cfg.find_policy("scenario7");
    REQUIRE(s7 != nullptr);
    CHECK(band_for(*s7, 60.0) == 0);
    CHECK(band_for(*s7, 50.0) == 1);
    CHECK(band_for(*s7, 25.0) == 2);
    const Policy* s2 = cfg.find_policy("scenario2");
    REQUIRE(s2 != nullptr);
    CHECK(band_for(*s2, 10.0) == 1);
    CHECK(band_for(*s2, 99.0) == 1);
}

TEST_CASE("config round-trips through serialize and parse") {
    const ScenarioConfig cfg = default_config();
    const std::string text = serialize_config(cfg);
    const ScenarioConfig back = parse_config(text);
    CHECK(config_equal(cfg, back));
    // And the round trip is a fixed point.
    CHECK(serialize_config(back) == text);
}

TEST_CASE("round trip preserves optional node fields and confusion overrides") {
    ScenarioConfig cfg = default_config();
    cfg.nodes[0].initial_mode = 2;
    cfg.nodes[0].capacity_wh = 10.5;
    cfg.nodes[0].policy_name = "scenario3";
    cfg.nodes[0].seed = 42;
    cfg.nodes.push_back(NodeSpec{"n2", std::nullopt, std::nullopt, std::nullopt, 30.0, 32, 50,
                                 1.5, std::nullopt});
    const std::size_t k = cfg.class_labels.size();
    cfg.confusion_overrides[1] = uniform_error_matrix(90.0, k);
    validate_config(cfg);
    const ScenarioConfig back = parse_config(serialize_config(cfg));
    CHECK(config_equal(cfg, back));
    REQUIRE(back.nodes.size() == 2);
    CHECK(back.nodes[0].initial_mode == ModeId{2});
    CHECK(back.nodes[0].capacity_wh == doctest::Approx(10.5));
    CHECK(back.nodes[1].input_fps == doctest::Approx(30.0));
    CHECK(back.confusion_overrides.count(1) == 1);
}

TEST_CASE("the shipped defaults file matches the built-in configuration") {
    const std::string path = std::string(QRMEDGE_SOURCE_DIR) + "/configs/paper_defaults.toml";
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), path);
    std::ostringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == kDefaultConfigToml);
    CHECK(config_equal(parse_config(ss.str()), default_config()));
}

TEST_CASE("validation rejects broken configurations") {
    const auto check_broken = [](auto mutate) {
        ScenarioConfig cfg = default_config();
        mutate(cfg);
        CHECK_THROWS_AS(validate_config(cfg), ConfigError);
    };
    check_broken([](ScenarioConfig& c) { c.active_policy = "nope"; });
    check_broken([](ScenarioConfig& c) {
        c.policies[0].bands[1].upper_pct = 40.0;  // gap below band 0
    });
    check_broken([](ScenarioConfig& c) { c.class_distribution.pop_back(); });
    check_broken([](ScenarioConfig& c) { c.nodes.push_back(c.nodes[0]); });
    check_broken([](ScenarioConfig& c) {
        c.confusion_overrides[0] = ConfusionProfile(3, std::vector<double>(3, 0.3));
    });
    check_broken([](ScenarioConfig& c) { c.nodes[0].policy_name = "ghost"; });
    check_broken([](ScenarioConfig& c) { c.modes[0].gpu_power_w = 99.0; });
}

TEST_CASE("unknown configuration keys are rejected, not ignored") {
    try {
        parse_config(std::string(kDefaultConfigToml) + "\nbatery_capacity_wh = 10.0\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("batery_capacity_wh") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(std::string(kDefaultConfigToml) + "\n[[widget]]\nx = 1\n"),
                    ConfigError);
    CHECK_THROWS_AS(
        parse_config(std::string(kDefaultConfigToml) + "\n[[node]]\nid = \"n9\"\ntypo = 1\n"),
        ConfigError);
}

TEST_CASE("parse_config reports syntax errors with line numbers") {
    try {
        parse_config("seed = 1\nbroken line here\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("per-node policy resolution falls back to the active policy") {
    ScenarioConfig cfg = default_config();
    NodeSpec n2;
    n2.node_id = "n2";
    cfg.nodes.push_back(n2);
    cfg.nodes[1].policy_name = "scenario1";
    validate_config(cfg);
    CHECK(cfg.policy_for(cfg.nodes[0]).name == "scenario7");
    CHECK(cfg.policy_for(cfg.nodes[1]).name == "scenario1");
}

TEST_CASE("toml subset covers the shapes the schema needs") {
    const auto root = toml::parse(
        "title = \"x\"\n"
        "n = 42\n"
        "f = 1.5\n"
        "neg = -2.25e1\n"
        "flag = true\n"
        "arr = [1, 2, 3]\n"
        "nested = [[1.0, 2.0], [3.0, 4.0]]  # comment\n"
        "multi = [\n  \"a\",\n  \"b\",\n]\n"
        "[table_a]\nx = 1\n"
        "[[rows]]\nv = 1\n"
        "[[rows]]\nv = 2\n");
    CHECK(root.find("title")->as_string() == "x");
    CHECK(root.find("n")->as_int() == 42);
    CHECK(root.find("f")->as_float() == doctest::Approx(1.5));
    CHECK(root.find("neg")->as_float() == doctest::Approx(-22.5));
    CHECK(root.find("flag")->as_bool());
    CHECK(root.find("arr")->as_array().size() == 3);
    CHECK(root.find("nested")->as_array()[1].as_array()[0].as_float() == doctest::Approx(3.0));
    CHECK(root.find("multi")->as_array().size() == 2);
    CHECK(root.tables.at("table_a").find("x")->as_int() == 1);
    CHECK(root.table_arrays.at("rows").size() == 2);

    CHECK_THROWS_AS(toml::parse("[a.b]\n"), toml::ParseError);
    CHECK_THROWS_AS(toml::parse("x = 1\nx = 2\n"), toml::ParseError);
    CHECK_THROWS_AS(toml::parse("x = [1, 2\n"), toml::ParseError);
    CHECK_THROWS_AS(toml::parse("x = 'literal'\n"), toml::ParseError);
}

TEST_CASE("load_config_file reports missing files as config errors") {
    CHECK_THROWS_AS(load_config_file("/nonexistent/path.toml"), ConfigError);
}
