#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "plumeseek/plots.hpp"
#include "plumeseek/run_config.hpp"

using namespace plumeseek;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("plumeseek_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

std::vector<TraceRow> walk(int steps) {
    std::vector<TraceRow> rows;
    for (int k = 0; k <= steps; ++k) {
        TraceRow r;
        r.step = k;
        r.position = {1.0 + 0.5 * k, 2.0 + 0.25 * k};
        r.action = k == 0 ? "-" : "NE";
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_SUITE("run_config") {

TEST_CASE("empty document gives the defaults") {
    const RunConfig cfg = parse_config_text("{}");
    const RunConfig def;
    CHECK(cfg.experiment.filter.particle_count == 2000);
    CHECK(cfg.experiment.filter.ess_fraction == 0.6);
    CHECK(cfg.experiment.n_scenarios == 100);
    CHECK(cfg.experiment.success_radius == 1.0);
    CHECK(cfg.experiment.distribution.max_steps == 150);
    CHECK(cfg.experiment.fields.size() == 7);
    CHECK(to_json(cfg) == to_json(def));
}

TEST_CASE("file values and overrides") {
    const std::string text = R"({"filter": {"particle_count": 500}, "master_seed": 9, "worker_count": 2,
                                 "experiment": {"methods": ["random"], "fields": ["gas", "energy"]}})";
    RunConfig cfg = parse_config_text(text);
    CHECK(cfg.experiment.filter.particle_count == 500);
    CHECK(cfg.experiment.master_seed == 9);
    CHECK(cfg.experiment.methods == std::vector<Method>{Method::Random});
    CHECK(cfg.experiment.fields.size() == 2);

    ConfigOverrides ov;
    ov.seed = 11;
    ov.workers = 3;
    ov.assignments = {"filter.particle_count=800", "planner.dcee_kappa=0.5", "master_seed=4"};
    cfg = parse_config_text(text, ov);
    CHECK(cfg.experiment.filter.particle_count == 800);
    CHECK(cfg.experiment.planner.dcee_kappa == 0.5);
    CHECK(cfg.experiment.master_seed == 11);  // the flag beats --set and the file
    CHECK(cfg.experiment.worker_count == 3);
}

TEST_CASE("unknown keys and bad types name the key") {
    try {
        parse_config_text(R"({"filter": {"particel_count": 10}})");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("filter.particel_count") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config_text(R"({"filter": {"particle_count": "many"}})"), UsageError);
    CHECK_THROWS_AS(parse_config_text(R"({"filter": {"tempering": 1}})"), UsageError);
    CHECK_THROWS_AS(parse_config_text(R"({"experiment": {"methods": ["ppo"]}})"), UsageError);
    CHECK_THROWS_AS(parse_config_text(R"({"filter": {"attention_placement": "sideways"}})"), UsageError);
    CHECK_THROWS_AS(parse_config_text("[1, 2]"), UsageError);
    CHECK_THROWS_AS(parse_config_text("{ nope"), UsageError);
    ConfigOverrides ov;
    ov.assignments = {"no_equals_sign"};
    CHECK_THROWS_AS(parse_config_text("{}", ov), UsageError);
}

TEST_CASE("attention placement and its boolean alias") {
    CHECK(parse_config_text(R"({"filter": {"attention_placement": "move_covariance"}})").experiment.filter.attention_placement ==
          AttentionPlacement::MoveCovariance);
    CHECK(parse_config_text(R"({"filter": {"attention_after_resample": false}})").experiment.filter.attention_placement ==
          AttentionPlacement::BeforeResample);
    CHECK_THROWS_AS(
        parse_config_text(R"({"filter": {"attention_after_resample": true, "attention_placement": "after_resample"}})"),
        UsageError);
}

TEST_CASE("worker count from the environment sits between file and flags") {
    ::setenv("PLUMESEEK_WORKERS", "5", 1);
    CHECK(parse_config_text(R"({"worker_count": 2})").experiment.worker_count == 5);
    ConfigOverrides ov;
    ov.workers = 1;
    CHECK(parse_config_text("{}", ov).experiment.worker_count == 1);
    ::setenv("PLUMESEEK_WORKERS", "zero", 1);
    CHECK_THROWS_AS(parse_config_text("{}"), UsageError);
    ::unsetenv("PLUMESEEK_WORKERS");
}

TEST_CASE("resolved config parses back to itself") {
    ConfigOverrides ov;
    ov.assignments = {"scenario.source_box=[10, 15, 10, 15]", "training.episodes=20"};
    const RunConfig cfg = parse_config_text("{}", ov);
    REQUIRE(cfg.experiment.distribution.source_box.has_value());
    const RunConfig again = parse_config_text(to_json(cfg).dump());
    CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("config file on disk") {
    const fs::path dir = scratch_dir("cfg");
    std::ofstream(dir / "c.json") << R"({"simulate": {"method": "dcee", "field": "noise", "episodes": 2}})";
    const RunConfig cfg = parse_config((dir / "c.json").string());
    CHECK(cfg.simulate.method == Method::Dcee);
    CHECK(cfg.simulate.field == FieldKind::Noise);
    CHECK(cfg.simulate.episodes == 2);
    CHECK_THROWS_AS(parse_config((dir / "missing.json").string()), UsageError);
}

}

TEST_SUITE("plots") {

TEST_CASE("one path segment per step") {
    const SourceParams src{12.0, 15.0, 500.0, 1.0, 0.0, 5.0, 2.0};
    const Box2 dom{0, 20, 0, 20};
    const std::string svg = heatmap_svg(src, dom, walk(17));
    CHECK(count(svg, "class=\"path-seg\"") == 17);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg == heatmap_svg(src, dom, walk(17)));
    CHECK(count(heatmap_svg(std::nullopt, dom, walk(0)), "path-seg") == 0);
    CHECK(count(heatmap_svg(src, dom, {}), "path-seg") == 0);
}

TEST_CASE("other charts render") {
    const std::vector<ReportRow> rows{{"att-pfp", "gas", "all", "oce", 0.7, 0.1, 100},
                                      {"random", "gas", "all", "lps", NAN, NAN, 0}};
    CHECK(metric_bars_svg(rows).find("<svg") == 0);
    CHECK(learning_curve_svg({{0, 0.0, 150, 1.0}, {1, 1.0, 30, 0.9}}).find("<svg") == 0);
    CHECK(particles_svg({{0, {{1, 2}, {3, 4}}}}, {0, 20, 0, 20}, std::nullopt).find("<svg") == 0);
}

TEST_CASE("scenario sidecar round trip") {
    Scenario sc;
    sc.source = {12.5, 17.25, 1234.5, 0.5, 2.0, 3.0, 1.5};
    sc.field_type = FieldKind::Magnetic;
    std::ostringstream out;
    write_scenario_json(sc, out);
    std::istringstream in(out.str());
    const Scenario back = read_scenario_json(in);
    CHECK(back.source == sc.source);
    CHECK(back.field_type == FieldKind::Magnetic);
}

TEST_CASE("emit_plots over a run directory") {
    const fs::path in = scratch_dir("plot_in"), out = scratch_dir("plot_out");
    {
        std::ofstream t(in / "trace_000.csv");
        write_trace_csv(walk(5), t);
        std::ofstream r(in / "report.csv");
        write_report_csv({{"random", "gas", "all", "oce", 0.0, 0.0, 10}}, r);
        std::ofstream p(in / "particles_000_step0000.csv");
        p << "x_s,y_s,q_s,u_x,u_y,lambda,psi,weight\n10,12,100,1,1,2,2,1\n";
    }
    const auto files = emit_plots(in, out);
    CHECK(files.size() == 3);
    CHECK(std::is_sorted(files.begin(), files.end()));
    std::ifstream h(out / "heatmap_000.svg");
    std::stringstream ss;
    ss << h.rdbuf();
    CHECK(count(ss.str(), "path-seg") == 5);

    std::ofstream(in / "trace_001.csv") << "garbage\n";
    try {
        emit_plots(in, out);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("trace_001.csv") != std::string::npos);
    }
    CHECK_THROWS_AS(emit_plots(in / "nope", out), UsageError);
}

}
