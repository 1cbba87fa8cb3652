#pragma once

#include <random>
#include <vector>

#include "plumeseek/execution.hpp"
#include "plumeseek/experiments.hpp"

namespace testsupport {

using namespace plumeseek;

inline PriorBox table_prior() {
    PriorBox p;
    p.bounds = {{{5.0, 20.0}, {10.0, 20.0}, {10.0, 3000.0}, {0.0, 6.0}, {0.0, 6.0}, {1e-3, 8.0}, {1.0, 5.0}}};
    return p;
}

inline PriorBox wide_prior() {
    PriorBox p;
    p.bounds = {{{0.0, 20.0}, {0.0, 20.0}, {1.0, 5000.0}, {-6.0, 6.0}, {-6.0, 6.0}, {1e-3, 20.0}, {0.5, 5.0}}};
    return p;
}

// Still air, long decay: the field only depends on distance.
inline SourceParams calm_source(double x, double y, double q = 500.0, double lambda = 50.0) {
    return {x, y, q, 0.0, 0.0, lambda, 1.0};
}

// Belief made of the given atoms with the given weights (normalized here).
inline CompositeState make_state(const std::vector<SourceParams>& atoms, std::vector<double> weights, Vec2 agent,
                                 const PriorBox& prior = wide_prior()) {
    CompositeState s;
    double total = 0.0;
    for (double w : weights) total += w;
    for (double& w : weights) w /= total;
    s.belief.states = atoms;
    s.belief.weights = weights;
    s.belief.history_loglik.assign(atoms.size(), 0.0);
    s.belief.prior = prior;
    s.agent.position = agent;
    return s;
}

inline Scenario make_scenario(const SourceParams& src, NoiseModel noise = {0.5, 0.4}) {
    Scenario sc;
    sc.source = src;
    sc.noise = noise;
    sc.prior = table_prior();
    return sc;
}

}  // namespace testsupport
