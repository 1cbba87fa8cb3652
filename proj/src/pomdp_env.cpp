#include "plumeseek/pomdp_env.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace plumeseek {

namespace {

constexpr double kDiag = 0.70710678118654752440;

constexpr std::array<Vec2, kActionCount> kDirections = {{
    {0.0, 1.0}, {kDiag, kDiag}, {1.0, 0.0}, {kDiag, -kDiag},
    {0.0, -1.0}, {-kDiag, -kDiag}, {-1.0, 0.0}, {-kDiag, kDiag},
}};

constexpr std::array<std::string_view, kActionCount> kActionNames = {"N", "NE", "E", "SE", "S", "SW", "W", "NW"};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

Vec2 action_direction(Action a) { return kDirections[static_cast<int>(a)]; }

std::string_view to_string(Action a) { return kActionNames[static_cast<int>(a)]; }

Action action_from_index(int index) {
    if (index < 0 || index >= kActionCount) throw ParameterError("action index out of range");
    return static_cast<Action>(index);
}

Vec2 Box2::clamp(Vec2 p) const { return {std::clamp(p.x, x_lo, x_hi), std::clamp(p.y, y_lo, y_hi)}; }

void Scenario::validate() const {
    validate_source(source);
    if (!(domain.x_lo < domain.x_hi && domain.y_lo < domain.y_hi)) throw ParameterError("empty domain");
    if (!domain.contains(Vec2{source.x_s, source.y_s})) throw ParameterError("source lies outside the domain");
    if (!(start_region.x_lo <= start_region.x_hi && start_region.y_lo <= start_region.y_hi))
        throw ParameterError("inverted start region");
    if (!domain.contains(start_region)) throw ParameterError("start region must lie inside the domain");
    if (max_steps < 1) throw ParameterError("max_steps must be at least 1");
    if (noise.sensor_noise < 0.0 || noise.env_noise < 0.0) throw ParameterError("noise levels must be non-negative");
    prior.validate();
}

std::string_view to_string(DoneReason r) { return r == DoneReason::Cessation ? "cessation" : "max_steps"; }

EnvStreams EnvStreams::from_seed(std::uint64_t seed) {
    return EnvStreams{std::mt19937_64(splitmix64(seed ^ 0x5EED0001ull)), std::mt19937_64(splitmix64(seed ^ 0x5EED0002ull))};
}

FilterConfig episode_filter_config(const Scenario& scenario, FilterConfig cfg) {
    cfg.noise = scenario.noise;
    return cfg;
}

CompositeState reset(const Scenario& scenario, const FilterConfig& cfg, EnvStreams& streams) {
    scenario.validate();
    cfg.validate();
    const FilterConfig fc = episode_filter_config(scenario, cfg);

    CompositeState state;
    const auto& s = scenario.start_region;
    const double x = std::uniform_real_distribution<double>(s.x_lo, s.x_hi)(streams.world);
    const double y = std::uniform_real_distribution<double>(s.y_lo, s.y_hi)(streams.world);
    state.agent.position = {x, y};

    state.belief = init_particles(scenario.prior, fc.particle_count, streams.filter);
    state.last_obs = sense(scenario.source, state.agent.position, scenario.noise.sensor_noise,
                           scenario.noise.env_noise, streams.world, 0);
    sis_update(state.belief, state.last_obs, fc);
    return state;
}

StepOutcome step(CompositeState& state, Action action, const Scenario& scenario, const FilterConfig& cfg,
                 EnvStreams& streams) {
    if (state.finished) throw LifecycleError("step called on a finished episode");
    const FilterConfig fc = episode_filter_config(scenario, cfg);

    const Vec2 dir = action_direction(action);
    auto& agent = state.agent;
    agent.position = scenario.domain.clamp({agent.position.x + dir.x, agent.position.y + dir.y});
    agent.step_count += 1;
    agent.path_length = static_cast<double>(agent.step_count);

    state.last_obs = sense(scenario.source, agent.position, scenario.noise.sensor_noise, scenario.noise.env_noise,
                           streams.world, agent.step_count);
    state.last_filter = filter_step(state.belief, state.last_obs, fc, streams.filter);

    StepOutcome out;
    if (check_cessation(state.belief, fc)) {
        out.reward = kGoalReward;
        out.done = true;
        out.done_reason = DoneReason::Cessation;
    } else if (agent.step_count >= scenario.max_steps) {
        out.done = true;
        out.done_reason = DoneReason::MaxSteps;
    }
    state.finished = out.done;
    state.done_reason = out.done_reason;
    return out;
}

double position_error(const SourceParams& estimate, const SourceParams& truth) {
    return std::hypot(estimate.x_s - truth.x_s, estimate.y_s - truth.y_s);
}

bool episode_success(const CompositeState& state, const Scenario& scenario, double success_radius) {
    if (state.done_reason != DoneReason::Cessation) return false;
    return position_error(belief_estimate(state.belief), scenario.source) <= success_radius;
}

TraceRow make_trace_row(const CompositeState& state, std::string_view action, double reward) {
    TraceRow row;
    row.step = state.agent.step_count;
    row.position = state.agent.position;
    row.action = std::string(action);
    row.intensity = state.last_obs.intensity;
    row.ess = effective_sample_size(state.belief);
    row.belief_std = belief_std(state.belief);
    row.reward = reward;
    return row;
}

void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out) {
    out << "step,x,y,action,intensity,ess";
    for (const char* name : kSourceDimNames) out << ",std_" << name;
    out << ",reward\n";
    out << std::setprecision(12);
    for (const auto& r : rows) {
        out << r.step << ',' << r.position.x << ',' << r.position.y << ',' << r.action << ',' << r.intensity << ','
            << r.ess;
        for (double s : r.belief_std) out << ',' << s;
        out << ',' << r.reward << '\n';
    }
}

std::vector<TraceRow> read_trace_csv(std::istream& in) {
    std::vector<TraceRow> rows;
    std::string line;
    int line_no = 0;
    constexpr std::size_t kColumns = 6 + kSourceDims + 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line.rfind("step,x,y,action", 0) != 0)
                throw FormatError("trace line 1: unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != kColumns)
            throw FormatError("trace line " + std::to_string(line_no) + ": expected " + std::to_string(kColumns) +
                              " columns, got " + std::to_string(cells.size()));
        try {
            std::size_t used = 0;
            auto num = [&](const std::string& s) {
                const double v = std::stod(s, &used);
                if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
                return v;
            };
            TraceRow r;
            r.step = static_cast<int>(num(cells[0]));
            r.position = {num(cells[1]), num(cells[2])};
            r.action = cells[3];
            r.intensity = num(cells[4]);
            r.ess = num(cells[5]);
            for (std::size_t d = 0; d < kSourceDims; ++d) r.belief_std[d] = num(cells[6 + d]);
            r.reward = num(cells[6 + kSourceDims]);
            rows.push_back(std::move(r));
        } catch (const std::exception&) {
            throw FormatError("trace line " + std::to_string(line_no) + ": malformed numeric field");
        }
    }
    if (line_no == 0) throw FormatError("trace line 1: missing header");
    return rows;
}

}  // namespace plumeseek
