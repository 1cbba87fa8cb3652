#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "plumeseek/experiments.hpp"
#include "support.hpp"

using namespace plumeseek;

namespace {

FieldPresetTable presets() { return load_field_presets(default_field_presets_path()); }

// Aggregation written independently of the library: sums of squares, then the textbook sample variance.
struct Oracle {
    double oce = 0, ade = 0, lps = 0, oce_sd = 0, ade_sd = 0, lps_sd = 0;
    std::size_t ceased = 0;
};

Oracle brute_force(const std::vector<EpisodeRecord>& recs, double radius) {
    Oracle o;
    const double n = static_cast<double>(recs.size());
    double s_hit = 0, s_hit2 = 0, s_len = 0, s_len2 = 0, s_err = 0, s_err2 = 0;
    for (const auto& r : recs) {
        const double hit = (r.ceased && r.position_error <= radius) ? 1.0 : 0.0;
        s_hit += hit;
        s_hit2 += hit * hit;
        s_len += r.path_length;
        s_len2 += r.path_length * r.path_length;
        if (r.ceased) {
            ++o.ceased;
            s_err += r.position_error;
            s_err2 += r.position_error * r.position_error;
        }
    }
    auto sd = [](double s, double s2, double k) { return k > 1 ? std::sqrt((s2 - s * s / k) / (k - 1)) : 0.0; };
    o.oce = s_hit / n;
    o.ade = s_len / n;
    o.oce_sd = sd(s_hit, s_hit2, n);
    o.ade_sd = sd(s_len, s_len2, n);
    if (o.ceased) {
        o.lps = s_err / o.ceased;
        o.lps_sd = sd(s_err, s_err2, static_cast<double>(o.ceased));
    }
    return o;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.presets = presets();
    cfg.filter.particle_count = 200;
    cfg.planner.n_predictive_samples = 8;
    cfg.distribution.max_steps = 25;
    cfg.n_scenarios = 3;
    cfg.fields = {FieldKind::Gas};
    return cfg;
}


}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("sample_scenario moments and bounds") {
    const ScenarioDistribution dist;
    const auto gas = presets().at(FieldKind::Gas);
    std::mt19937_64 rng(17);
    const int n = 10000;
    double lo = INFINITY, hi = -INFINITY, sum_q = 0.0, sum_q2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const Scenario sc = sample_scenario(dist, gas, rng);
        lo = std::min(lo, sc.source.x_s);
        hi = std::max(hi, sc.source.x_s);
        sum_q += sc.source.q_s;
        sum_q2 += sc.source.q_s * sc.source.q_s;
        CHECK(sc.source.lambda >= 1e-3);
        CHECK(sc.source.y_s >= 10.0);
        CHECK(sc.source.y_s <= 20.0);
        CHECK(sc.noise.sensor_noise == 0.5);
        CHECK(sc.noise.env_noise == 0.4);
    }
    CHECK(lo > 5.0);
    CHECK(hi < 20.0);
    const double mean = sum_q / n;
    const double se = std::sqrt((sum_q2 / n - mean * mean) / n);
    CHECK(std::abs(mean - 1505.0) < 3.0 * se);

    std::mt19937_64 a(3), b(3);
    CHECK(sample_scenario(dist, gas, a).source == sample_scenario(dist, gas, b).source);
}

TEST_CASE("lambda floor") {
    ScenarioDistribution dist;
    dist.ranges[kLambda] = {0.0, 0.0};
    std::mt19937_64 rng(1);
    CHECK(sample_scenario(dist, presets().at(FieldKind::Gas), rng).source.lambda == 1e-3);
}

TEST_CASE("presets scale the ranges") {
    const ScenarioDistribution dist;
    const auto table = presets();
    const auto& energy = table.at(FieldKind::Energy);
    const PriorBox p = field_prior(dist, energy);
    CHECK(p.bounds[kQs][1] == doctest::Approx(3000.0 * energy.q_scale));
    CHECK(p.bounds[kPsi][0] == doctest::Approx(1.0 * energy.psi_range[0]));
    CHECK(p.bounds[kPsi][1] == doctest::Approx(5.0 * energy.psi_range[1]));
    CHECK(p.bounds[kXs] == dist.ranges[kXs]);
    std::mt19937_64 rng(2);
    const Scenario sc = sample_scenario(dist, energy, rng);
    CHECK(sc.noise.sensor_noise == doctest::Approx(0.5 * energy.sensor_noise));
    CHECK(sc.field_type == FieldKind::Energy);
}

TEST_CASE("paired scenarios across fields") {
    const ScenarioDistribution dist;
    const auto table = presets();
    for (std::size_t i = 0; i < 20; ++i) {
        const auto seeds = episode_seeds(7, i);
        std::mt19937_64 r1(seeds.scenario), r2(seeds.scenario);
        const Scenario a = sample_scenario(dist, table.at(FieldKind::Gas), r1);
        const Scenario b = sample_scenario(dist, table.at(FieldKind::Noise), r2);
        CHECK(a.source.x_s == b.source.x_s);
        CHECK(a.source.y_s == b.source.y_s);
        CHECK(a.source.u_x == b.source.u_x);
    }
}

TEST_CASE("source boxes") {
    ScenarioDistribution dist;
    const auto gas = presets().at(FieldKind::Gas);
    std::mt19937_64 rng(5);
    dist.source_box = kOodTrainBox;
    for (int k = 0; k < 2000; ++k) {
        const Scenario sc = sample_scenario(dist, gas, rng);
        CHECK(kOodTrainBox.contains(Vec2{sc.source.x_s, sc.source.y_s}));
    }
    for (const Box2& box : {kOodTestBoxA, kOodTestBoxB}) {
        dist.source_box = box;
        for (int k = 0; k < 2000; ++k) {
            const Scenario sc = sample_scenario(dist, gas, rng);
            const Vec2 p{sc.source.x_s, sc.source.y_s};
            CHECK((kOodTestBoxA.contains(p) || kOodTestBoxB.contains(p)));
        }
    }
    dist.source_box = Box2{15.0, 25.0, 0.0, 5.0};
    CHECK_THROWS_AS(sample_scenario(dist, gas, rng), ParameterError);
}

TEST_CASE("compute_metrics: constant records") {
    std::vector<EpisodeRecord> recs(10);
    for (auto& r : recs) {
        r.ceased = true;
        r.steps = 20;
        r.path_length = 20.0;
        r.position_error = 0.05;
        r.total_reward = 1.0;
        r.wall_seconds = 0.5;
    }
    const MetricReport m = compute_metrics(recs, 1.0);
    CHECK(m.oce.mean == 1.0);
    CHECK(m.ade.mean == 20.0);
    REQUIRE(m.lps);
    CHECK(m.lps->mean == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(m.oce.std == 0.0);
    CHECK(m.oce.n == 10);
    CHECK(audit_metrics(recs, 1.0, m).empty());
}

TEST_CASE("compute_metrics: nothing ceased") {
    std::vector<EpisodeRecord> recs(4);
    for (auto& r : recs) r.path_length = 150.0;
    const MetricReport m = compute_metrics(recs, 1.0);
    CHECK(m.oce.mean == 0.0);
    CHECK_FALSE(m.lps.has_value());
    CHECK(audit_metrics(recs, 1.0, m).empty());
    CHECK_THROWS_AS(compute_metrics(std::vector<EpisodeRecord>{}, 1.0), ParameterError);
}

TEST_CASE("compute_metrics against the brute-force oracle") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<EpisodeRecord> recs(1 + trial * 3);
        for (auto& r : recs) {
            r.ceased = u(rng) < 0.6;
            r.steps = 1 + static_cast<int>(u(rng) * 149);
            r.path_length = r.steps;
            r.position_error = 3.0 * u(rng);
            r.wall_seconds = u(rng);
        }
        const MetricReport m = compute_metrics(recs, 1.0);
        const Oracle o = brute_force(recs, 1.0);
        CHECK(m.oce.mean == doctest::Approx(o.oce).epsilon(1e-12));
        CHECK(m.ade.mean == doctest::Approx(o.ade).epsilon(1e-12));
        CHECK(std::abs(m.oce.std - o.oce_sd) < 1e-9);
        CHECK(std::abs(m.ade.std - o.ade_sd) < 1e-9 * std::max(1.0, o.ade_sd));
        CHECK(m.lps.has_value() == (o.ceased > 0));
        if (m.lps) {
            CHECK(m.lps->n == o.ceased);
            CHECK(m.lps->mean == doctest::Approx(o.lps).epsilon(1e-12));
            CHECK(std::abs(m.lps->std - o.lps_sd) < 1e-9);
        }
        CHECK(audit_metrics(recs, 1.0, m).empty());
    }
}

TEST_CASE("audit catches a tampered report") {
    std::vector<EpisodeRecord> recs(5);
    for (std::size_t i = 0; i < 5; ++i) {
        recs[i].ceased = i % 2 == 0;
        recs[i].path_length = 10.0 * i;
        recs[i].position_error = 0.1 * i;
    }
    MetricReport m = compute_metrics(recs, 1.0);
    m.ade.mean += 1e-6;
    CHECK_FALSE(audit_metrics(recs, 1.0, m).empty());
    m = compute_metrics(recs, 1.0);
    m.lps.reset();
    CHECK_FALSE(audit_metrics(recs, 1.0, m).empty());
}

TEST_CASE("success radius is inclusive") {
    EpisodeRecord r;
    r.ceased = true;
    r.position_error = 1.0;
    CHECK(record_success(r, 1.0));
    r.ceased = false;
    CHECK_FALSE(record_success(r, 1.0));
}

TEST_CASE("seed derivation") {
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto s = episode_seeds(1, i);
        seen.insert(s.scenario);
        seen.insert(s.env);
        seen.insert(s.policy);
    }
    CHECK(seen.size() == 300);
    CHECK(derive_seed(1, "train", 0) == derive_seed(1, "train", 0));
    CHECK(derive_seed(1, "train", 0) != derive_seed(2, "train", 0));
}

TEST_CASE("method names") {
    for (Method m : kAllMethods) CHECK(method_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(method_from_string("ppo"), UsageError);
    CHECK(uses_attention(Method::AttPfp));
    CHECK_FALSE(uses_attention(Method::Pfp));
    CHECK(is_learning(Method::Pfrl));
}

TEST_CASE("two-proportion z") {
    // 60/100 vs 5/100: pooled 0.325
    const double se = std::sqrt(0.325 * 0.675 * 0.02);
    CHECK(two_proportion_z(60, 100, 5, 100) == doctest::Approx(0.55 / se).epsilon(1e-12));
    CHECK(two_proportion_z(0, 10, 0, 10) == 0.0);
    CHECK(normal_upper_tail(0.0) == 0.5);
    CHECK(normal_upper_tail(2.326347874040841) == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("report csv round trip and NA") {
    const std::vector<ReportRow> rows{{"att-pfp", "gas", "all", "oce", 0.68, 0.4688, 100},
                                      {"random", "gas", "all", "lps", NAN, NAN, 0}};
    std::ostringstream out;
    write_report_csv(rows, out);
    CHECK(out.str().find("random,gas,all,lps,NA,NA,0") != std::string::npos);
    std::istringstream in(out.str());
    const auto back = read_report_csv(in);
    REQUIRE(back.size() == 2);
    CHECK(back[0].mean == 0.68);
    CHECK(std::isnan(back[1].mean));
    std::istringstream bad("method,field,scope,metric,mean,std,n\na,b,c\n");
    CHECK_THROWS_AS(read_report_csv(bad), FormatError);
}

TEST_CASE("run_parallel keeps index order and rethrows") {
    auto fn = [](std::size_t i) {
        EpisodeRecord r;
        r.scenario_index = i;
        r.steps = static_cast<int>(i * i);
        return r;
    };
    for (int workers : {1, 3}) {
        const auto out = run_parallel(50, workers, fn);
        for (std::size_t i = 0; i < 50; ++i) CHECK(out[i].steps == static_cast<int>(i * i));
    }
    CHECK_THROWS_AS(run_parallel(10, 2,
                                 [](std::size_t i) -> EpisodeRecord {
                                     if (i == 7) throw NumericalError("boom");
                                     return {};
                                 }),
                    NumericalError);
}

TEST_CASE("experiment config validation") {
    ExperimentConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.n_scenarios = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
    cfg = small_config();
    cfg.worker_count = 0;
    CHECK_THROWS_AS(cfg.validate(), UsageError);
}

TEST_CASE("episode records are consistent") {
    const ExperimentConfig cfg = small_config();
    std::mt19937_64 rng(episode_seeds(1, 0).scenario);
    const Scenario sc = sample_scenario(cfg.distribution, cfg.presets.at(FieldKind::Gas), rng);
    EpisodeTrace trace;
    trace.snapshot_every = 10;
    const EpisodeRecord r = run_episode(sc, Method::Random, cfg, episode_seeds(1, 0), nullptr, &trace);
    CHECK(r.path_length == r.steps);
    CHECK((r.total_reward == 0.0 || r.total_reward == 1.0));
    CHECK((r.total_reward == 1.0) == r.ceased);
    CHECK(trace.rows.size() == static_cast<std::size_t>(r.steps) + 1);
    CHECK(trace.rows.front().action == "-");
    CHECK(trace.snapshots.back().first == r.steps);
    CHECK_THROWS_AS(run_episode(sc, Method::Pfrl, cfg, episode_seeds(1, 0)), UsageError);
}

TEST_CASE("pfp with attention off matches infotaxis") {
    ExperimentConfig cfg = small_config();
    cfg.methods = {Method::Pfp, Method::Infotaxis};
    const ExperimentResult res = run_fundamental(cfg);
    CHECK(res.audit_failures.empty());
    REQUIRE(res.rows.size() == 6);
    for (int k = 0; k < 3; ++k) {
        CHECK(res.rows[k].metric == res.rows[k + 3].metric);
        if (std::isnan(res.rows[k].mean)) {
            CHECK(std::isnan(res.rows[k + 3].mean));
        } else {
            CHECK(res.rows[k].mean == res.rows[k + 3].mean);
            CHECK(res.rows[k].std == res.rows[k + 3].std);
        }
        CHECK(res.rows[k].n == res.rows[k + 3].n);
    }
    CHECK(res.timing.size() == 2);
    for (const auto& r : res.rows) CHECK(r.metric != "rev");
}

}
