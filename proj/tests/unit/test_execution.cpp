#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "plumeseek/execution.hpp"
#include "plumeseek/value_function.hpp"
#include "support.hpp"

using namespace plumeseek;
using testsupport::calm_source;
using testsupport::make_state;

namespace {

struct Fixture {
    Scenario scenario = testsupport::make_scenario(calm_source(12.0, 15.0));
    FilterConfig filter;
    PlannerConfig planner;

    PlanContext ctx() const { return {scenario, filter, planner}; }
};

// Sharp, short-range field: a reading only tells something right next to the source.
SourceParams pin(double x, double y) { return {x, y, 500.0, 0.0, 0.0, 0.05, 1.0}; }

CompositeState random_belief(std::uint64_t seed, std::size_t n = 120) {
    std::mt19937_64 rng(seed);
    ParticleSet ps = init_particles(testsupport::table_prior(), n, rng);
    std::exponential_distribution<double> e(1.0);
    std::vector<double> w(n);
    for (double& x : w) x = e(rng);
    CompositeState s = make_state(ps.states, w, {2.0 + seed % 5, 3.0}, testsupport::table_prior());
    s.agent.step_count = 4;
    s.last_obs = {s.agent.position, 1.7, 4};
    return s;
}

CompositeState permuted(const CompositeState& s, std::uint64_t seed) {
    std::vector<std::size_t> perm(s.belief.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
    CompositeState p = s;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        p.belief.states[i] = s.belief.states[perm[i]];
        p.belief.weights[i] = s.belief.weights[perm[i]];
    }
    return p;
}

using Planner = Action (*)(const CompositeState&, const PlanContext&, std::mt19937_64&);
const std::array<Planner, 4> kPlanners = {plan_att_pfp, infotaxis_action, entrotaxis_action, dcee_action};

}  // namespace

TEST_SUITE("execution") {

TEST_CASE("collapsed belief north of the agent") {
    Fixture f;
    f.planner.n_predictive_samples = 1;
    const CompositeState s = make_state({calm_source(10.0, 14.0)}, {1.0}, {10.0, 10.0});
    std::mt19937_64 rng(1);
    // one hypothesis: every posterior is a point mass, entropy 0 for every move, ties go to index 0
    const auto h = expected_entropy_by_action(s, f.ctx(), rng);
    for (double v : h) CHECK(v == 0.0);
    CHECK(plan_att_pfp(s, f.ctx(), rng) == Action::North);
    CHECK(infotaxis_action(s, f.ctx(), rng) == Action::North);
}

TEST_CASE("symmetric belief ties to index 0") {
    Fixture f;
    f.planner.n_predictive_samples = 4;
    // four atoms arranged symmetrically around the agent at equal distance, identical fields
    const CompositeState s = make_state({pin(13, 10), pin(7, 10), pin(10, 13), pin(10, 7)}, {1, 1, 1, 1}, {10, 10});
    std::mt19937_64 rng(2);
    CHECK(plan_att_pfp(s, f.ctx(), rng) == Action::North);
    CHECK(entrotaxis_action(s, f.ctx(), rng) == Action::North);
}

TEST_CASE("two atoms, one discriminating move") {
    Fixture f;
    f.planner.n_predictive_samples = 2;
    // only stepping East lands on an atom; everywhere else both atoms predict ~0
    const CompositeState s = make_state({pin(11.0, 10.0), pin(15.0, 15.0)}, {0.5, 0.5}, {10.0, 10.0});
    std::mt19937_64 rng(3);

    const auto h = expected_entropy_by_action(s, f.ctx(), rng);
    CHECK(h[static_cast<int>(Action::East)] == doctest::Approx(0.0));
    for (int k = 0; k < kActionCount; ++k)
        if (k != static_cast<int>(Action::East)) CHECK(h[k] == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(plan_att_pfp(s, f.ctx(), rng) == Action::East);
    CHECK(infotaxis_action(s, f.ctx(), rng) == Action::East);

    // two equally likely, well separated readings at E: predictive entropy ln 2, zero elsewhere
    const auto p = predictive_entropy_by_action(s, f.ctx(), rng);
    CHECK(p[static_cast<int>(Action::East)] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    for (int k = 0; k < kActionCount; ++k)
        if (k != static_cast<int>(Action::East)) CHECK(p[k] == 0.0);
    CHECK(entrotaxis_action(s, f.ctx(), rng) == Action::East);
}

TEST_CASE("entrotaxis on a single hypothesis") {
    Fixture f;
    f.planner.n_predictive_samples = 1;
    const CompositeState s = make_state({calm_source(16.0, 12.0)}, {1.0}, {4.0, 4.0});
    std::mt19937_64 rng(4);
    const auto p = predictive_entropy_by_action(s, f.ctx(), rng);
    for (double v : p) CHECK(v == 0.0);
    CHECK(entrotaxis_action(s, f.ctx(), rng) == Action::North);
}

TEST_CASE("dcee: exploration bonus flips the greedy move") {
    Fixture f;
    f.planner.n_predictive_samples = 2;
    f.filter.noise = {0.05, 0.0};
    // estimate at (11.5, 11.5); NE is closest but sees both atoms at the same range
    const CompositeState s = make_state({calm_source(10.0, 13.0), calm_source(13.0, 10.0)}, {0.5, 0.5}, {10.0, 10.0});
    std::mt19937_64 rng(5);

    const double diag = std::sqrt(0.5);
    const double ne_dist = 2.0 * (1.5 - diag) * (1.5 - diag);
    const double prior_trace = 2.25 + 2.25;

    f.planner.dcee_kappa = 0.0;
    auto sc = dcee_scores(s, f.ctx(), rng);
    CHECK(sc[1] == doctest::Approx(ne_dist).epsilon(1e-12));
    CHECK(sc[0] == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(dcee_action(s, f.ctx(), rng) == Action::NorthEast);

    f.planner.dcee_kappa = 1.0;
    sc = dcee_scores(s, f.ctx(), rng);
    // NE learns nothing; N and E separate the atoms completely under this noise
    CHECK(sc[1] == doctest::Approx(ne_dist + prior_trace).epsilon(1e-9));
    CHECK(sc[0] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(sc[2] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(dcee_action(s, f.ctx(), rng) == Action::North);
}

TEST_CASE("dcee: zero uncertainty goes straight for the estimate") {
    Fixture f;
    const CompositeState s = make_state({calm_source(4.0, 14.0)}, {1.0}, {10.0, 10.0});
    f.planner.n_predictive_samples = 1;
    std::mt19937_64 rng(6);
    CHECK(dcee_action(s, f.ctx(), rng) == Action::NorthWest);
}

TEST_CASE("planners ignore particle order") {
    Fixture f;
    f.planner.n_predictive_samples = 16;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const CompositeState s = random_belief(seed);
        const CompositeState p = permuted(s, seed + 100);
        for (Planner plan : kPlanners) {
            std::mt19937_64 a(seed), b(seed);
            CHECK(plan(s, f.ctx(), a) == plan(p, f.ctx(), b));
        }
    }
}

TEST_CASE("attention off with horizon 1 is infotaxis") {
    Fixture f;
    f.planner.attention_enabled = false;
    f.planner.n_predictive_samples = 16;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const CompositeState s = random_belief(seed + 50);
        std::mt19937_64 a(seed), b(seed);
        CHECK(plan_att_pfp(s, f.ctx(), a) == infotaxis_action(s, f.ctx(), b));
    }
}

TEST_CASE("attention is a no-op on uniform weights") {
    Fixture f;
    f.planner.n_predictive_samples = 16;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CompositeState s = random_belief(seed + 9);
        std::fill(s.belief.weights.begin(), s.belief.weights.end(), 1.0 / s.belief.size());
        Fixture off = f;
        off.planner.attention_enabled = false;
        std::mt19937_64 a(seed), b(seed);
        CHECK(plan_att_pfp(s, f.ctx(), a) == plan_att_pfp(s, off.ctx(), b));
    }
}

TEST_CASE("horizon 2 runs and stays deterministic") {
    Fixture f;
    f.planner.horizon = 2;
    f.planner.n_predictive_samples = 8;
    const CompositeState s = random_belief(3, 60);
    std::mt19937_64 a(1), b(1);
    CHECK(plan_att_pfp(s, f.ctx(), a) == plan_att_pfp(s, f.ctx(), b));
}

TEST_CASE("predictive sampler never draws a zero-weight tail") {
    const std::vector<double> w{0.7, 0.2, 0.1, 0.0, 0.0};
    for (double u : {0.0, 0.5, std::nextafter(1.0, 0.0)}) {
        const auto idx = systematic_sample(w, 1000, u);
        REQUIRE(idx.size() == 1000);
        CHECK(*std::max_element(idx.begin(), idx.end()) <= 2);
        CHECK(std::count(idx.begin(), idx.end(), 0u) == doctest::Approx(700).epsilon(0.002));
    }
}

TEST_CASE("planner config validation") {
    PlannerConfig p;
    CHECK_NOTHROW(p.validate(2000));
    p.n_predictive_samples = 3000;
    CHECK_THROWS_AS(p.validate(2000), ParameterError);
    p = {};
    p.horizon = 0;
    CHECK_THROWS_AS(p.validate(2000), ParameterError);
}

TEST_CASE("random action is uniform") {
    std::mt19937_64 rng(123);
    std::array<int, kActionCount> counts{};
    const int n = 100000;
    for (int k = 0; k < n; ++k) ++counts[static_cast<int>(random_action(rng))];
    const double expect = n / 8.0;
    const double sd = std::sqrt(n * (1.0 / 8.0) * (7.0 / 8.0));
    for (int c : counts) CHECK(std::abs(c - expect) < 3.0 * sd);
    std::mt19937_64 a(7), b(7);
    for (int k = 0; k < 20; ++k) CHECK(random_action(a) == random_action(b));
}

TEST_CASE("tie-aware argmin and argmax") {
    const std::vector<double> v{3.0, 1.0, 1.0 + 1e-14, 5.0, 5.0 - 1e-13};
    CHECK(argmin_with_ties(v) == 1);
    CHECK(argmax_with_ties(v) == 3);
    CHECK(argmin_with_ties(std::vector<double>(8, 2.0)) == 0);
}

TEST_CASE("position entropy") {
    std::vector<SourceParams> s{calm_source(1.5, 1.5), calm_source(1.7, 1.2), calm_source(8.5, 3.5)};
    CHECK(position_entropy(s, std::vector<double>{0.25, 0.25, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK(position_entropy(s, std::vector<double>{1.0, 0.0, 0.0}) == 0.0);
}

TEST_CASE("belief features") {
    const Scenario sc = testsupport::make_scenario(calm_source(12.0, 15.0));
    for (bool att : {false, true}) {
        const CompositeState s = random_belief(11);
        const BeliefFeatures f = belief_features(s, sc, att);
        for (double v : f) CHECK(std::isfinite(v));
        for (std::size_t d = 7; d < 14; ++d) CHECK(f[d] >= 0.0);
        CHECK(f[14] == doctest::Approx(s.agent.position.x / 20.0));
        CHECK(f[17] * f[17] + f[18] * f[18] == doctest::Approx(1.0));
        CHECK(f[19] == doctest::Approx(4.0 / 150.0));
    }
}

}

TEST_SUITE("value_function") {

namespace {
BeliefFeatures random_features(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BeliefFeatures x{};
    for (double& v : x) v = u(rng);
    return x;
}

// Head layer sits at the end of the flattened vector: 8 x 64 weights, then 8 biases.
std::size_t head_bias(const ValueFunction& vf) { return vf.parameter_count() - kActionCount; }
}  // namespace

TEST_CASE("shape") {
    ValueFunction vf;
    CHECK(vf.parameter_count() == 20 * 64 + 64 + 64 * 64 + 64 + 64 * 8 + 8);
    std::mt19937_64 rng(1);
    for (double q : vf.action_values(random_features(rng))) CHECK(std::isfinite(q));
    CHECK_THROWS_AS(vf.set_parameters(std::vector<double>(5, 0.0)), DimensionError);
    CHECK_THROWS_AS(ValueFunction(0.0), ParameterError);
    CHECK_THROWS_AS(ValueFunction(1e-3, 1.5), ParameterError);
}

TEST_CASE("td fixed point leaves parameters unchanged") {
    ValueFunction vf(1e-2, 1.0, 9);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const BeliefFeatures x = random_features(rng);
        const auto q = vf.action_values(x);
        const int greedy = argmax_with_ties(q);
        const auto before = vf.parameters();
        const double delta = td_update(vf, {x, greedy, 0.0, x, false});
        CHECK(delta == 0.0);
        const auto after = vf.parameters();
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(std::abs(after[i] - before[i]) <= 1e-12);
    }
}

TEST_CASE("terminal target is the reward") {
    ValueFunction vf(1e-2, 0.99, 4);
    std::mt19937_64 rng(3);
    const BeliefFeatures x = random_features(rng), x2 = random_features(rng);
    const double q = vf.action_values(x)[5];
    CHECK(td_update(vf, {x, 5, 1.0, x2, true}) == doctest::Approx(1.0 - q).epsilon(1e-15));
}

TEST_CASE("td update is one gradient step") {
    ValueFunction vf(3e-3, 0.9, 5);
    std::mt19937_64 rng(4);
    const BeliefFeatures x = random_features(rng), x2 = random_features(rng);
    const auto q2 = vf.action_values(x2);
    const double target = 0.3 + 0.9 * *std::max_element(q2.begin(), q2.end());
    const auto grad = vf.loss_gradient(x, 2, target);
    const auto before = vf.parameters();
    td_update(vf, {x, 2, 0.3, x2, false});
    const auto after = vf.parameters();
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(after[i] == doctest::Approx(before[i] - 3e-3 * grad[i]).epsilon(1e-14));
    // only the taken head moves
    const std::size_t hb = head_bias(vf);
    for (int a = 0; a < kActionCount; ++a)
        if (a != 2) CHECK(after[hb + a] == before[hb + a]);
}

TEST_CASE("gradient against central differences") {
    ValueFunction vf(1e-3, 0.99, 6);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    const auto base = vf.parameters();
    int checked = 0;
    for (int probe = 0; probe < 100; ++probe) {
        const BeliefFeatures x = random_features(rng);
        const int action = probe % kActionCount;
        const double target = n(rng);
        std::vector<double> dir(base.size());
        for (double& d : dir) d = n(rng);
        const auto g = vf.loss_gradient(x, action, target);
        double analytic = 0.0;
        for (std::size_t i = 0; i < dir.size(); ++i) analytic += g[i] * dir[i];

        const double h = 1e-5;
        ValueFunction probe_vf = vf;
        std::vector<double> p(base);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = base[i] + h * dir[i];
        probe_vf.set_parameters(p);
        const double up = probe_vf.loss(x, action, target);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = base[i] - h * dir[i];
        probe_vf.set_parameters(p);
        const double down = probe_vf.loss(x, action, target);
        const double numeric = (up - down) / (2.0 * h);
        CHECK(std::abs(analytic - numeric) <= 1e-4 * std::max(std::abs(numeric), 1e-8));
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("non-finite delta is a training error") {
    ValueFunction vf;
    BeliefFeatures x{};
    x[0] = NAN;
    CHECK_THROWS_AS(td_update(vf, {x, 0, 0.0, {}, false}), TrainingError);
    CHECK_THROWS_AS(td_update(vf, {{}, 0, INFINITY, {}, true}), TrainingError);
}

TEST_CASE("act_pfrl") {
    const Scenario sc = testsupport::make_scenario(calm_source(12.0, 15.0));
    const CompositeState s = random_belief(2);
    ValueFunction vf(1e-3, 0.99, 7);
    auto p = vf.parameters();
    std::fill(p.begin(), p.end(), 0.0);
    p[head_bias(vf) + 3] = 1.0;
    vf.set_parameters(p);

    SUBCASE("greedy picks the dominant head") {
        std::mt19937_64 rng(1);
        for (int k = 0; k < 10; ++k) CHECK(act_pfrl(s, sc, vf, 0.0, true, rng) == Action::SouthEast);
    }
    SUBCASE("invariant under a positive affine map of the outputs") {
        ValueFunction base(1e-3, 0.99, 8);
        auto q = base.parameters();
        ValueFunction shifted = base;
        const std::size_t hb = head_bias(base);
        for (std::size_t i = hb - 64 * kActionCount; i < q.size(); ++i) q[i] *= 2.5;  // head weights and biases
        for (int a = 0; a < kActionCount; ++a) q[hb + a] += 7.0;
        shifted.set_parameters(q);
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const CompositeState r = random_belief(seed);
            std::mt19937_64 a(seed), b(seed);
            CHECK(act_pfrl(r, sc, base, 0.0, false, a) == act_pfrl(r, sc, shifted, 0.0, false, b));
        }
    }
    SUBCASE("epsilon 1 is uniform") {
        std::mt19937_64 rng(2);
        std::array<int, kActionCount> counts{};
        const int n = 20000;
        for (int k = 0; k < n; ++k) ++counts[static_cast<int>(act_pfrl(s, sc, vf, 1.0, false, rng))];
        const double sd = std::sqrt(n / 8.0 * 7.0 / 8.0);
        for (int c : counts) CHECK(std::abs(c - n / 8.0) < 3.0 * sd);
    }
    SUBCASE("bad epsilon") {
        std::mt19937_64 rng(3);
        CHECK_THROWS_AS(act_pfrl(s, sc, vf, 1.5, false, rng), ParameterError);
    }
}

TEST_CASE("epsilon schedule") {
    TrainingSchedule s;
    CHECK(s.epsilon_at(0) == 1.0);
    CHECK(s.epsilon_at(200) == doctest::Approx(0.525));
    CHECK(s.epsilon_at(400) == 0.05);
    CHECK(s.epsilon_at(499) == 0.05);
    s.episodes = -1;
    CHECK_THROWS_AS(s.validate(), ParameterError);
}

TEST_CASE("train_pfrl") {
    FilterConfig filter;
    filter.particle_count = 60;
    auto factory = [](std::mt19937_64& rng) {
        Scenario sc = testsupport::make_scenario(calm_source(12.0, 15.0));
        sc.source.x_s = std::uniform_real_distribution<double>(10.0, 15.0)(rng);
        sc.max_steps = 8;
        return sc;
    };
    TrainingSchedule sched;
    sched.episodes = 0;
    ValueFunction vf(1e-2, 0.99, 1);
    const auto before = vf.parameters();
    std::mt19937_64 rng(1);
    CHECK(train_pfrl(factory, filter, vf, sched, true, rng).empty());
    CHECK(vf.parameters() == before);

    sched.episodes = 3;
    sched.decay_episodes = 2;
    auto run = [&]() {
        ValueFunction v(1e-2, 0.99, 1);
        std::mt19937_64 r(5);
        auto curve = train_pfrl(factory, filter, v, sched, true, r);
        return std::make_pair(curve, v.parameters());
    };
    const auto [c1, p1] = run();
    const auto [c2, p2] = run();
    REQUIRE(c1.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(c1[k].episode == static_cast<int>(k));
        CHECK(c1[k].episode_return == c2[k].episode_return);
        CHECK(c1[k].steps == c2[k].steps);
        CHECK(c1[k].epsilon == sched.epsilon_at(static_cast<int>(k)));
        CHECK((c1[k].episode_return == 0.0 || c1[k].episode_return == kGoalReward));
    }
    CHECK(p1 == p2);
}

TEST_CASE("checkpoint round trip") {
    ValueFunction vf(2e-3, 0.95, 77);
    std::ostringstream out;
    vf.save_json(out);
    std::istringstream in(out.str());
    const ValueFunction back = ValueFunction::load_json(in);
    CHECK(back.parameters() == vf.parameters());
    CHECK(back.alpha_lr() == 2e-3);
    CHECK(back.gamma_discount() == 0.95);

    std::istringstream junk("{not json");
    CHECK_THROWS_AS(ValueFunction::load_json(junk), FormatError);
    std::string wrong = out.str();
    wrong.replace(wrong.find("plumeseek-value-function"), 9, "elsewhere");
    std::istringstream wrong_in(wrong);
    CHECK_THROWS_AS(ValueFunction::load_json(wrong_in), FormatError);
}

TEST_CASE("learning curve csv round trip") {
    const std::vector<LearningCurveRow> rows{{0, 0.0, 150, 1.0}, {1, 1.0, 37, 0.9975}};
    std::ostringstream out;
    write_learning_curve_csv(rows, out);
    std::istringstream in(out.str());
    const auto back = read_learning_curve_csv(in);
    REQUIRE(back.size() == 2);
    CHECK(back[1].steps == 37);
    CHECK(back[1].epsilon == 0.9975);
    std::istringstream bad("episode,return,steps,epsilon\n1,x,2,3\n");
    CHECK_THROWS_AS(read_learning_curve_csv(bad), FormatError);
}

}
