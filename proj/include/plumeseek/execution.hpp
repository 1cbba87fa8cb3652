#pragma once

#include <array>
#include <random>
#include <span>
#include <vector>

#include "plumeseek/particle_belief.hpp"
#include "plumeseek/pomdp_env.hpp"

namespace plumeseek {

struct PlannerConfig {
    int horizon = 1;
    int n_predictive_samples = 32;
    bool attention_enabled = true;
    // Weight of the expected remaining position uncertainty in the DCEE score.
    double dcee_kappa = 1.0;

    void validate(std::size_t particle_count) const;
};

// Everything a planner may look at besides the composite state.
struct PlanContext {
    const Scenario& scenario;
    const FilterConfig& filter;
    const PlannerConfig& planner;
};

// 1 m occupancy grid used for position entropy.
inline constexpr int kEntropyGrid = 20;

// Shannon entropy (nats) of the weighted x_s/y_s histogram on kEntropyGrid x kEntropyGrid unit cells.
double position_entropy(std::span<const SourceParams> states, std::span<const double> weights);

// Particle indices sorted by state, so planners see the belief in a canonical order.
std::vector<std::size_t> canonical_order(const ParticleSet& ps);

// n draws by systematic sampling from `weights` with the given offset in [0, 1).
std::vector<std::size_t> systematic_sample(std::span<const double> weights, std::size_t n, double offset);

/// Expected posterior position entropy after moving with each action and taking one reading,
/// averaged over predictive hypotheses drawn from the belief (attention-refined when enabled).
/// With horizon > 1 the lookahead recurses, halving the sample count per level.
std::array<double, kActionCount> expected_entropy_by_action(const CompositeState& state, const PlanContext& ctx,
                                                            std::mt19937_64& rng);

Action plan_att_pfp(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng);

// One-step expected-entropy lookahead without attention.
Action infotaxis_action(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng);

// Entropy of the predicted reading at each successor, binned at the sensor-noise resolution.
std::array<double, kActionCount> predictive_entropy_by_action(const CompositeState& state, const PlanContext& ctx,
                                                              std::mt19937_64& rng);
Action entrotaxis_action(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng);

// |next - estimate|^2 + kappa * expected trace of the posterior position covariance.
std::array<double, kActionCount> dcee_scores(const CompositeState& state, const PlanContext& ctx,
                                             std::mt19937_64& rng);
Action dcee_action(const CompositeState& state, const PlanContext& ctx, std::mt19937_64& rng);

Action random_action(std::mt19937_64& rng);

// Smallest index among the minimal scores; scores within 1e-12 relative count as ties.
int argmin_with_ties(std::span<const double> scores);
int argmax_with_ties(std::span<const double> scores);

inline constexpr std::size_t kFeatureDims = 20;
using BeliefFeatures = std::array<double, kFeatureDims>;

/// Scaled summary of the composite state: belief mean (7) and std (7) over the prior box,
/// agent position (2), compressed last reading (1), bearing to the estimate as sin/cos (2)
/// and the step count over max_steps (1). With attention the moments use refined weights.
BeliefFeatures belief_features(const CompositeState& state, const Scenario& scenario, bool attention_enabled,
                               double key_dim = 1.0);

}  // namespace plumeseek
