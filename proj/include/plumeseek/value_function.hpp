#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "plumeseek/execution.hpp"

namespace plumeseek {

// Action-value network 20 -> 64 -> 64 -> 8, tanh hidden layers, linear head.
class ValueFunction {
public:
    static constexpr std::array<std::size_t, 4> kLayerSizes = {kFeatureDims, 64, 64, kActionCount};

    ValueFunction(double alpha_lr = 1e-3, double gamma_discount = 0.99, std::uint64_t init_seed = 0);

    using Values = std::array<double, kActionCount>;
    Values action_values(const BeliefFeatures& x) const;

    std::size_t parameter_count() const;
    // Flattened layer by layer: weights (row-major, out x in) then bias.
    std::vector<double> parameters() const;
    void set_parameters(std::span<const double> params);

    // d/dparams of 0.5 * (target - Q(x, action))^2 with the target held fixed.
    std::vector<double> loss_gradient(const BeliefFeatures& x, int action, double target) const;
    double loss(const BeliefFeatures& x, int action, double target) const;

    double alpha_lr() const { return alpha_lr_; }
    double gamma_discount() const { return gamma_discount_; }

    void save_json(std::ostream& out) const;
    static ValueFunction load_json(std::istream& in);

private:
    struct Layer {
        std::size_t in = 0;
        std::size_t out = 0;
        std::vector<double> w;
        std::vector<double> b;
    };
    // Activations of every layer for one input, input included.
    std::vector<std::vector<double>> forward(const BeliefFeatures& x) const;

    std::array<Layer, 3> layers_;
    double alpha_lr_;
    double gamma_discount_;
};

struct Transition {
    BeliefFeatures features{};
    int action = 0;
    double reward = 0.0;
    BeliefFeatures next_features{};
    bool done = false;
};

// Semi-gradient Q-learning step on the taken action's head. Returns delta from before the update.
double td_update(ValueFunction& vf, const Transition& t);

// Epsilon-greedy over the network's action-values on the belief features.
Action act_pfrl(const CompositeState& state, const Scenario& scenario, const ValueFunction& vf, double epsilon,
                bool attention_enabled, std::mt19937_64& rng, double key_dim = 1.0);

struct TrainingSchedule {
    int episodes = 500;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    // Episodes over which epsilon falls linearly; afterwards it stays at epsilon_end.
    int decay_episodes = 400;

    double epsilon_at(int episode) const;
    void validate() const;
};

struct LearningCurveRow {
    int episode = 0;
    double episode_return = 0.0;
    int steps = 0;
    double epsilon = 0.0;
};

using ScenarioFactory = std::function<Scenario(std::mt19937_64&)>;

std::vector<LearningCurveRow> train_pfrl(const ScenarioFactory& make_scenario, const FilterConfig& filter,
                                         ValueFunction& vf, const TrainingSchedule& schedule, bool attention_enabled,
                                         std::mt19937_64& rng);

void write_learning_curve_csv(const std::vector<LearningCurveRow>& rows, std::ostream& out);
std::vector<LearningCurveRow> read_learning_curve_csv(std::istream& in);

}  // namespace plumeseek
