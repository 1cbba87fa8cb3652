#include "plumeseek/execution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "plumeseek/kernels.hpp"

namespace plumeseek {

namespace {

int entropy_cell(const SourceParams& s) {
    const int cx = std::clamp(static_cast<int>(std::floor(s.x_s)), 0, kEntropyGrid - 1);
    const int cy = std::clamp(static_cast<int>(std::floor(s.y_s)), 0, kEntropyGrid - 1);
    return cx * kEntropyGrid + cy;
}

double histogram_entropy(std::span<const int> cells, std::span<const double> weights) {
    std::array<double, kEntropyGrid * kEntropyGrid> mass{};
    for (std::size_t i = 0; i < cells.size(); ++i) mass[cells[i]] += weights[i];
    double total = 0.0;
    for (double m : mass) total += m;
    double h = 0.0;
    for (double m : mass) {
        if (m > 0.0) {
            const double p = m / total;
            h -= p * std::log(p);
        }
    }
    return h;
}

// The belief viewed in canonical order, with the pieces every planner needs.
struct PlanningBelief {
    std::vector<SourceParams> states;
    std::vector<double> weights;
    std::vector<int> cells;
};

PlanningBelief planning_belief(const ParticleSet& ps) {
    PlanningBelief b;
    const auto order = canonical_order(ps);
    b.states.reserve(order.size());
    b.weights.reserve(order.size());
    b.cells.reserve(order.size());
    for (std::size_t i : order) {
        b.states.push_back(ps.states[i]);
        b.weights.push_back(ps.weights[i]);
        b.cells.push_back(entropy_cell(ps.states[i]));
    }
    return b;
}

std::vector<std::size_t> draw_hypotheses(std::span<const double> weights, std::size_t n, bool attention,
                                         double key_dim, std::mt19937_64& rng) {
    const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (attention) {
        const auto refined = attention_refine(weights, key_dim);
        return systematic_sample(refined, n, offset);
    }
    return systematic_sample(weights, n, offset);
}

// Normalized posterior weights after a hypothetical reading `z` at a point where particle i predicts phi[i].
void hypothetical_update(std::span<const double> weights, std::span<const double> phi, double z,
                         const NoiseModel& noise, std::vector<double>& out) {
    const std::size_t n = weights.size();
    out.resize(n);
    double max_lw = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = weights[i] > 0.0 ? std::log(weights[i]) + kernels::observation_log_density(z, phi[i], noise) : -INFINITY;
        max_lw = std::max(max_lw, out[i]);
    }
    double total = 0.0;
    for (double& v : out) {
        v = std::exp(v - max_lw);
        total += v;
    }
    for (double& v : out) v /= total;
}

Vec2 successor(Vec2 pos, Action a, const Box2& domain) {
    const Vec2 d = action_direction(a);
    return domain.clamp({pos.x + d.x, pos.y + d.y});
}

double lookahead_entropy(const PlanningBelief& b, std::span<const double> weights, Vec2 pos, Action a, int depth,
                         std::size_t n_samples, bool attention, const PlanContext& ctx, std::mt19937_64& rng) {
    const Vec2 next = successor(pos, a, ctx.scenario.domain);
    std::vector<double> phi(b.states.size());
    kernels::predict_intensity(b.states, next, phi);
    const auto samples = draw_hypotheses(weights, n_samples, attention, ctx.filter.key_dim, rng);

    std::vector<double> posterior;
    double acc = 0.0;
    for (std::size_t s : samples) {
        hypothetical_update(weights, phi, phi[s], ctx.filter.noise, posterior);
        if (depth <= 1) {
            acc += histogram_entropy(b.cells, posterior);
        } else {
            const std::size_t next_samples = std::max<std::size_t>(1, n_samples / 2);
            double best = INFINITY;
            for (int k = 0; k < kActionCount; ++k)
                best = std::min(best, lookahead_entropy(b, posterior, next, action_from_index(k), depth - 1,
                                                        next_samples, attention, ctx, rng));
            acc += best;
        }
    }
    return acc / static_cast<double>(samples.size());
}

// Variance-stabilized reading: unit noise per unit of the returned value.
double stabilized_reading(double z, const NoiseModel& noise) {
    const double eps = noise.sensor_noise;
    const double sig = noise.env_noise;
    if (sig > 0.0 && eps > 0.0) return std::asinh(sig * z / eps) / sig;
    if (sig > 0.0) return std::log(std::max(z, 1e-300)) / sig;
    if (eps > 0.0) return z / eps;
    return z;
}

}  // namespace

void PlannerConfig::validate(std::size_t particle_count) const {
    if (horizon < 1) throw ParameterError("planner horizon must be at least 1");
    if (n_predictive_samples < 1) throw ParameterError("n_predictive_samples must be at least 1");
    if (static_cast<std::size_t>(n_predictive_samples) > particle_count)
        throw ParameterError("n_predictive_samples cannot exceed the particle count");
    if (!(dcee_kappa >= 0.0)) throw ParameterError("dcee_kappa must be non-negative");
}

double position_entropy(std::span<const SourceParams> states, std::span<const double> weights) {
    std::vector<int> cells(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) cells[i] = entropy_cell(states[i]);
    return histogram_entropy(cells, weights);
}

std::vector<std::size_t> canonical_order(const ParticleSet& ps) {
    std::vector<std::size_t> order(ps.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ta = ps.states[a].to_array();
        const auto tb = ps.states[b].to_array();
        if (ta != tb) return ta < tb;
        return ps.weights[a] < ps.weights[b];
    });
    return order;
}

std::vector<std::size_t> systematic_sample(std::span<const double> weights, std::size_t n, double offset) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::size_t last = weights.size() - 1;
    while (last > 0 && !(weights[last] > 0.0)) --last;
    std::vector<std::size_t> out(n);
    std::size_t j = 0;
    double cumulative = weights[0] / total;
    for (std::size_t k = 0; k < n; ++k) {
        const double position = (offset + static_cast<double>(k)) / static_cast<double>(n);
        while (j < last && cumulative <= position) {
            ++j;
            cumulative += weights[j] / total;
        }
        out[k] = j;
    }
    return out;
}

int argmin_with_ties(std::span<const double> scores) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(scores.size()); ++k) {
        const double tol = 1e-12 * std::max(1.0, std::abs(scores[best]));
        if (scores[k] < scores[best] - tol) best = k;
    }
    return best;
}

int argmax_with_ties(std::span<const double> scores) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(scores.size()); ++k) {
        const double tol = 1e-12 * std::max(1.0, std::abs(scores[best]));
        if (scores[k] > scores[best] + tol) best = k;
    }
    return best;
}

std::array<double, kActionCount> expected_entropy_by_action(const CompositeState& state, const PlanContext& ctx,
                                                            std::mt19937_64& rng) {
    const PlanningBelief b = planning_belief(state.belief);
    const auto n_samples = static_cast<std::size_t>(ctx.planner.n_predictive_samples);
    std::array<double, kActionCount> out{};
    // Every action is scored against the same hypothesis draws.
    const auto seed = rng();
    for (int k = 0; k < kActionCount; ++k) {
        std::mt19937_64 local(seed);
        out[k] = lookahead_entropy(b, b.weights, state.agent.position, action_from_index(k), ctx.planner.horizon,
                                   n_samples, ctx.planner.attention_enabled, ctx, local);
    }
    return out;
}

Action plan_att_pfp(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng) {
    const auto scores = expected_entropy_by_action(state, ctx, rng);
    return action_from_index(argmin_with_ties(scores));
}

Action infotaxis_action(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng) {
    PlannerConfig one_step = ctx.planner;
    one_step.horizon = 1;
    one_step.attention_enabled = false;
    const PlanContext local{ctx.scenario, ctx.filter, one_step};
    return plan_att_pfp(state, local, rng);
}

std::array<double, kActionCount> predictive_entropy_by_action(const CompositeState& state, const PlanContext& ctx,
                                                              std::mt19937_64& rng) {
    const PlanningBelief b = planning_belief(state.belief);
    const auto samples = draw_hypotheses(b.weights, static_cast<std::size_t>(ctx.planner.n_predictive_samples),
                                         false, ctx.filter.key_dim, rng);
    std::array<double, kActionCount> out{};
    for (int k = 0; k < kActionCount; ++k) {
        const Vec2 next = successor(state.agent.position, action_from_index(k), ctx.scenario.domain);
        std::unordered_map<long long, double> bins;
        for (std::size_t s : samples) {
            const double z = plume_concentration_unchecked(b.states[s], next.x, next.y);
            const auto bin = static_cast<long long>(std::floor(stabilized_reading(z, ctx.filter.noise)));
            bins[bin] += 1.0;
        }
        // Sum over bins in key order so the result does not depend on hash iteration order.
        std::vector<std::pair<long long, double>> sorted(bins.begin(), bins.end());
        std::sort(sorted.begin(), sorted.end());
        double h = 0.0;
        for (const auto& [bin, count] : sorted) {
            const double p = count / static_cast<double>(samples.size());
            h -= p * std::log(p);
        }
        out[k] = h;
    }
    return out;
}

Action entrotaxis_action(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng) {
    const auto h = predictive_entropy_by_action(state, ctx, rng);
    return action_from_index(argmax_with_ties(h));
}

std::array<double, kActionCount> dcee_scores(const CompositeState& state, const PlanContext& ctx,
                                             std::mt19937_64& rng) {
    const PlanningBelief b = planning_belief(state.belief);
    const auto samples = draw_hypotheses(b.weights, static_cast<std::size_t>(ctx.planner.n_predictive_samples),
                                         false, ctx.filter.key_dim, rng);
    const SourceParams estimate = belief_estimate(state.belief);
    std::array<double, kActionCount> out{};
    std::vector<double> phi(b.states.size());
    std::vector<double> posterior;
    for (int k = 0; k < kActionCount; ++k) {
        const Vec2 next = successor(state.agent.position, action_from_index(k), ctx.scenario.domain);
        const double dx = next.x - estimate.x_s;
        const double dy = next.y - estimate.y_s;
        double trace = 0.0;
        if (ctx.planner.dcee_kappa > 0.0) {
            kernels::predict_intensity(b.states, next, phi);
            for (std::size_t s : samples) {
                hypothetical_update(b.weights, phi, phi[s], ctx.filter.noise, posterior);
                double mx = 0.0, my = 0.0;
                for (std::size_t i = 0; i < b.states.size(); ++i) {
                    mx += posterior[i] * b.states[i].x_s;
                    my += posterior[i] * b.states[i].y_s;
                }
                double vx = 0.0, vy = 0.0;
                for (std::size_t i = 0; i < b.states.size(); ++i) {
                    vx += posterior[i] * (b.states[i].x_s - mx) * (b.states[i].x_s - mx);
                    vy += posterior[i] * (b.states[i].y_s - my) * (b.states[i].y_s - my);
                }
                trace += vx + vy;
            }
            trace /= static_cast<double>(samples.size());
        }
        out[k] = dx * dx + dy * dy + ctx.planner.dcee_kappa * trace;
    }
    return out;
}

Action dcee_action(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng) {
    const auto scores = dcee_scores(state, ctx, rng);
    return action_from_index(argmin_with_ties(scores));
}

Action random_action(std::mt19937_64& rng) {
    return action_from_index(std::uniform_int_distribution<int>(0, kActionCount - 1)(rng));
}

BeliefFeatures belief_features(const CompositeState& state, const Scenario& scenario, bool attention_enabled,
                               double key_dim) {
    const ParticleSet& ps = state.belief;
    std::vector<double> weights = attention_enabled ? attention_refine(ps.weights, key_dim) : ps.weights;
    const auto m = kernels::weighted_moments(ps.states, weights);

    BeliefFeatures f{};
    std::size_t k = 0;
    for (std::size_t d = 0; d < kSourceDims; ++d) {
        const double lo = ps.prior.bounds[d][0];
        const double width = ps.prior.width(d);
        f[k++] = (m.mean[d] - lo) / width;
    }
    for (std::size_t d = 0; d < kSourceDims; ++d) f[k++] = std::sqrt(std::max(0.0, m.cov[d][d])) / ps.prior.width(d);

    const Box2& dom = scenario.domain;
    const Vec2 pos = state.agent.position;
    f[k++] = (pos.x - dom.x_lo) / (dom.x_hi - dom.x_lo);
    f[k++] = (pos.y - dom.y_lo) / (dom.y_hi - dom.y_lo);
    f[k++] = std::log1p(std::max(0.0, state.last_obs.intensity)) / 20.0;

    const double bx = m.mean[kXs] - pos.x;
    const double by = m.mean[kYs] - pos.y;
    const double dist = std::hypot(bx, by);
    f[k++] = dist > 0.0 ? by / dist : 0.0;
    f[k++] = dist > 0.0 ? bx / dist : 0.0;
    f[k++] = static_cast<double>(state.agent.step_count) / static_cast<double>(scenario.max_steps);
    return f;
}

}  // namespace plumeseek
