#include "plumeseek/value_function.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace plumeseek {

namespace {

constexpr const char* kCheckpointFormat = "plumeseek-value-function";
constexpr int kCheckpointVersion = 1;

}  // namespace

ValueFunction::ValueFunction(double alpha_lr, double gamma_discount, std::uint64_t init_seed)
    : alpha_lr_(alpha_lr), gamma_discount_(gamma_discount) {
    if (!(alpha_lr > 0.0) || !std::isfinite(alpha_lr)) throw ParameterError("alpha_lr must be positive");
    if (!(gamma_discount >= 0.0 && gamma_discount <= 1.0)) throw ParameterError("gamma_discount must lie in [0, 1]");
    std::mt19937_64 rng(init_seed);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        Layer& layer = layers_[l];
        layer.in = kLayerSizes[l];
        layer.out = kLayerSizes[l + 1];
        // Xavier/Glorot uniform
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        std::uniform_real_distribution<double> u(-limit, limit);
        layer.w.resize(layer.in * layer.out);
        for (double& w : layer.w) w = u(rng);
        layer.b.assign(layer.out, 0.0);
    }
}

std::vector<std::vector<double>> ValueFunction::forward(const BeliefFeatures& x) const {
    std::vector<std::vector<double>> acts;
    acts.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        const auto& prev = acts.back();
        std::vector<double> next(layer.out);
        for (std::size_t r = 0; r < layer.out; ++r) {
            double z = layer.b[r];
            const double* row = &layer.w[r * layer.in];
            for (std::size_t c = 0; c < layer.in; ++c) z += row[c] * prev[c];
            next[r] = (l + 1 < layers_.size()) ? std::tanh(z) : z;
        }
        acts.push_back(std::move(next));
    }
    return acts;
}

ValueFunction::Values ValueFunction::action_values(const BeliefFeatures& x) const {
    const auto acts = forward(x);
    Values q{};
    std::copy(acts.back().begin(), acts.back().end(), q.begin());
    return q;
}

std::size_t ValueFunction::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.w.size() + layer.b.size();
    return n;
}

std::vector<double> ValueFunction::parameters() const {
    std::vector<double> p;
    p.reserve(parameter_count());
    for (const auto& layer : layers_) {
        p.insert(p.end(), layer.w.begin(), layer.w.end());
        p.insert(p.end(), layer.b.begin(), layer.b.end());
    }
    return p;
}

void ValueFunction::set_parameters(std::span<const double> params) {
    if (params.size() != parameter_count())
        throw DimensionError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                             std::to_string(params.size()));
    std::size_t k = 0;
    for (auto& layer : layers_) {
        for (double& w : layer.w) w = params[k++];
        for (double& b : layer.b) b = params[k++];
    }
}

double ValueFunction::loss(const BeliefFeatures& x, int action, double target) const {
    const double d = target - action_values(x)[static_cast<std::size_t>(action)];
    return 0.5 * d * d;
}

std::vector<double> ValueFunction::loss_gradient(const BeliefFeatures& x, int action, double target) const {
    if (action < 0 || action >= kActionCount) throw ParameterError("action index out of range");
    const auto acts = forward(x);
    const std::size_t depth = layers_.size();

    // dL/dz for the output layer: only the taken head carries error.
    std::vector<double> delta(layers_.back().out, 0.0);
    delta[static_cast<std::size_t>(action)] = acts.back()[static_cast<std::size_t>(action)] - target;

    std::vector<std::vector<double>> grad_w(depth), grad_b(depth);
    for (std::size_t l = depth; l-- > 0;) {
        const Layer& layer = layers_[l];
        const auto& input = acts[l];
        grad_w[l].assign(layer.w.size(), 0.0);
        grad_b[l] = delta;
        for (std::size_t r = 0; r < layer.out; ++r)
            for (std::size_t c = 0; c < layer.in; ++c) grad_w[l][r * layer.in + c] = delta[r] * input[c];
        if (l == 0) break;
        std::vector<double> prev(layer.in, 0.0);
        for (std::size_t r = 0; r < layer.out; ++r)
            for (std::size_t c = 0; c < layer.in; ++c) prev[c] += layer.w[r * layer.in + c] * delta[r];
        // input[c] = tanh(z), so dtanh = 1 - input^2
        for (std::size_t c = 0; c < layer.in; ++c) prev[c] *= 1.0 - input[c] * input[c];
        delta = std::move(prev);
    }

    std::vector<double> g;
    g.reserve(parameter_count());
    for (std::size_t l = 0; l < depth; ++l) {
        g.insert(g.end(), grad_w[l].begin(), grad_w[l].end());
        g.insert(g.end(), grad_b[l].begin(), grad_b[l].end());
    }
    return g;
}

void ValueFunction::save_json(std::ostream& out) const {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["layer_sizes"] = kLayerSizes;
    j["alpha_lr"] = alpha_lr_;
    j["gamma_discount"] = gamma_discount_;
    j["activation"] = "tanh";
    auto& layers = j["layers"] = nlohmann::json::array();
    for (const auto& layer : layers_) layers.push_back({{"rows", layer.out}, {"cols", layer.in}, {"weights", layer.w}, {"bias", layer.b}});
    out << j.dump(1) << '\n';
}

ValueFunction ValueFunction::load_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw FormatError("checkpoint: unknown format");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw FormatError("checkpoint: unsupported version " + j.at("version").dump());
        if (j.at("layer_sizes").get<std::vector<std::size_t>>() !=
            std::vector<std::size_t>(kLayerSizes.begin(), kLayerSizes.end()))
            throw FormatError("checkpoint: layer_sizes do not match 20-64-64-8");
        ValueFunction vf(j.at("alpha_lr").get<double>(), j.at("gamma_discount").get<double>());
        const auto& layers = j.at("layers");
        if (layers.size() != vf.layers_.size()) throw FormatError("checkpoint: expected 3 layers");
        for (std::size_t l = 0; l < vf.layers_.size(); ++l) {
            auto w = layers[l].at("weights").get<std::vector<double>>();
            auto b = layers[l].at("bias").get<std::vector<double>>();
            if (w.size() != vf.layers_[l].w.size() || b.size() != vf.layers_[l].b.size())
                throw FormatError("checkpoint: layer " + std::to_string(l) + " has the wrong shape");
            vf.layers_[l].w = std::move(w);
            vf.layers_[l].b = std::move(b);
        }
        return vf;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
}

double td_update(ValueFunction& vf, const Transition& t) {
    const auto q = vf.action_values(t.features);
    double next_max = 0.0;
    if (!t.done) {
        const auto q_next = vf.action_values(t.next_features);
        next_max = *std::max_element(q_next.begin(), q_next.end());
    }
    const double target = t.reward + vf.gamma_discount() * next_max;
    const double delta = target - q[static_cast<std::size_t>(t.action)];
    if (!std::isfinite(delta)) {
        std::ostringstream msg;
        msg << "non-finite TD error: reward=" << t.reward << " target=" << target
            << " q=" << q[static_cast<std::size_t>(t.action)] << " action=" << t.action << " done=" << t.done;
        throw TrainingError(msg.str());
    }
    if (delta == 0.0) return delta;
    auto params = vf.parameters();
    const auto grad = vf.loss_gradient(t.features, t.action, target);
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= vf.alpha_lr() * grad[k];
    vf.set_parameters(params);
    return delta;
}

Action act_pfrl(const CompositeState& state, const Scenario& scenario, const ValueFunction& vf, double epsilon,
                bool attention_enabled, std::mt19937_64& rng, double key_dim) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ParameterError("epsilon must lie in [0, 1]");
    // Both draws always happen so the stream advances the same way for any epsilon.
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Action explore = random_action(rng);
    if (u < epsilon) return explore;
    const auto q = vf.action_values(belief_features(state, scenario, attention_enabled, key_dim));
    return action_from_index(argmax_with_ties(q));
}

double TrainingSchedule::epsilon_at(int episode) const {
    if (decay_episodes <= 0 || episode >= decay_episodes) return epsilon_end;
    const double frac = static_cast<double>(episode) / static_cast<double>(decay_episodes);
    return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

void TrainingSchedule::validate() const {
    if (episodes < 0) throw ParameterError("episodes must be non-negative");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
        throw ParameterError("epsilon bounds must lie in [0, 1]");
    if (decay_episodes < 0) throw ParameterError("decay_episodes must be non-negative");
}

std::vector<LearningCurveRow> train_pfrl(const ScenarioFactory& make_scenario, const FilterConfig& filter,
                                         ValueFunction& vf, const TrainingSchedule& schedule, bool attention_enabled,
                                         std::mt19937_64& rng) {
    schedule.validate();
    FilterConfig fc = filter;
    fc.attention_enabled = attention_enabled;
    std::vector<LearningCurveRow> curve;
    curve.reserve(static_cast<std::size_t>(schedule.episodes));
    for (int ep = 0; ep < schedule.episodes; ++ep) {
        const Scenario scenario = make_scenario(rng);
        EnvStreams streams = EnvStreams::from_seed(rng());
        std::mt19937_64 policy_rng(rng());
        const double eps = schedule.epsilon_at(ep);

        CompositeState state = reset(scenario, fc, streams);
        BeliefFeatures features = belief_features(state, scenario, attention_enabled, fc.key_dim);
        double ret = 0.0;
        for (;;) {
            const Action a = act_pfrl(state, scenario, vf, eps, attention_enabled, policy_rng, fc.key_dim);
            const StepOutcome out = step(state, a, scenario, fc, streams);
            const BeliefFeatures next = belief_features(state, scenario, attention_enabled, fc.key_dim);
            td_update(vf, Transition{features, static_cast<int>(a), out.reward, next, out.done});
            ret += out.reward;
            features = next;
            if (out.done) break;
        }
        curve.push_back(LearningCurveRow{ep, ret, state.agent.step_count, eps});
    }
    return curve;
}

void write_learning_curve_csv(const std::vector<LearningCurveRow>& rows, std::ostream& out) {
    out << "episode,return,steps,epsilon\n" << std::setprecision(12);
    for (const auto& r : rows) out << r.episode << ',' << r.episode_return << ',' << r.steps << ',' << r.epsilon << '\n';
}

std::vector<LearningCurveRow> read_learning_curve_csv(std::istream& in) {
    std::vector<LearningCurveRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "episode,return,steps,epsilon")
                throw FormatError("learning curve line 1: unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        std::stringstream ss(line);
        LearningCurveRow r;
        char c1 = 0, c2 = 0, c3 = 0;
        if (!(ss >> r.episode >> c1 >> r.episode_return >> c2 >> r.steps >> c3 >> r.epsilon) || c1 != ',' ||
            c2 != ',' || c3 != ',' || !(ss >> std::ws).eof())
            throw FormatError("learning curve line " + std::to_string(line_no) + ": malformed row");
        rows.push_back(r);
    }
    if (line_no == 0) throw FormatError("learning curve line 1: missing header");
    return rows;
}

}  // namespace plumeseek
