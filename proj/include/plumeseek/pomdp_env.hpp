#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "plumeseek/particle_belief.hpp"
#include "plumeseek/plume_field.hpp"
#include "plumeseek/types.hpp"

namespace plumeseek {

inline constexpr int kActionCount = 8;

// Compass moves, clockwise from North. The index order is the planners' tie-break order.
enum class Action : int { North = 0, NorthEast, East, SouthEast, South, SouthWest, West, NorthWest };

Vec2 action_direction(Action a);
std::string_view to_string(Action a);
Action action_from_index(int index);

struct Box2 {
    double x_lo = 0.0;
    double x_hi = 0.0;
    double y_lo = 0.0;
    double y_hi = 0.0;

    bool contains(Vec2 p) const { return p.x >= x_lo && p.x <= x_hi && p.y >= y_lo && p.y <= y_hi; }
    bool contains(const Box2& other) const {
        return other.x_lo >= x_lo && other.x_hi <= x_hi && other.y_lo >= y_lo && other.y_hi <= y_hi;
    }
    Vec2 clamp(Vec2 p) const;
};

struct Scenario {
    SourceParams source;
    FieldKind field_type = FieldKind::Gas;
    Box2 domain{0.0, 20.0, 0.0, 20.0};
    Box2 start_region{0.0, 5.0, 0.0, 5.0};
    int max_steps = 150;
    NoiseModel noise;
    // Support the belief is initialized over.
    PriorBox prior;

    void validate() const;
};

struct AgentState {
    Vec2 position;
    int step_count = 0;
    double path_length = 0.0;
};

enum class DoneReason { Cessation, MaxSteps };

std::string_view to_string(DoneReason r);

inline constexpr double kGoalReward = 1.0;

struct CompositeState {
    ParticleSet belief;
    Observation last_obs;
    AgentState agent;
    bool finished = false;
    std::optional<DoneReason> done_reason;
    FilterStepStats last_filter;
};

// Random streams for one episode: `world` drives placement and sensor noise, `filter` the
// particle filter. Keeping them apart means the same world sees the same noise sequence.
struct EnvStreams {
    std::mt19937_64 world;
    std::mt19937_64 filter;

    static EnvStreams from_seed(std::uint64_t seed);
};

// Scenario noise forwarded into the filter configuration used for this episode.
FilterConfig episode_filter_config(const Scenario& scenario, FilterConfig cfg);

CompositeState reset(const Scenario& scenario, const FilterConfig& cfg, EnvStreams& streams);

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
    std::optional<DoneReason> done_reason;
};

// Moves the agent one metre, senses, advances the belief and applies the cessation reward.
StepOutcome step(CompositeState& state, Action action, const Scenario& scenario, const FilterConfig& cfg,
                 EnvStreams& streams);

bool episode_success(const CompositeState& state, const Scenario& scenario, double success_radius);

double position_error(const SourceParams& estimate, const SourceParams& truth);

// One row of the per-step episode trace.
struct TraceRow {
    int step = 0;
    Vec2 position;
    std::string action;  // "-" on the initial row
    double intensity = 0.0;
    double ess = 0.0;
    std::array<double, kSourceDims> belief_std{};
    double reward = 0.0;
};

TraceRow make_trace_row(const CompositeState& state, std::string_view action, double reward);
void write_trace_csv(const std::vector<TraceRow>& rows, std::ostream& out);
// Throws FormatError naming the 1-based line of the first malformed row.
std::vector<TraceRow> read_trace_csv(std::istream& in);

}  // namespace plumeseek
