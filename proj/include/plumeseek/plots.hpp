#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "plumeseek/experiments.hpp"

namespace plumeseek {

// Field heatmap (log scale) with the agent path drawn as one <line class="path-seg"> per step.
// Without a source the background is left blank.
std::string heatmap_svg(const std::optional<SourceParams>& source, const Box2& domain, const std::vector<TraceRow>& rows);

struct CloudSnapshot {
    int step = 0;
    std::vector<Vec2> positions;  // (x_s, y_s) per particle
};

// One panel per snapshot, true source marked when known.
std::string particles_svg(const std::vector<CloudSnapshot>& snapshots, const Box2& domain,
                          const std::optional<SourceParams>& truth);

// Bars of oce, ade and lps per (method, field) row of a report. NA values are skipped.
std::string metric_bars_svg(const std::vector<ReportRow>& rows);

std::string learning_curve_svg(const std::vector<LearningCurveRow>& rows);

// Reads (x_s, y_s) from a particle snapshot CSV.
CloudSnapshot read_particles_csv(std::istream& in, int step);

// Scenario sidecar written next to each trace.
void write_scenario_json(const Scenario& sc, std::ostream& out);
Scenario read_scenario_json(std::istream& in);

// Turns every trace, snapshot, report and learning curve in `in_dir` into SVGs in `out_dir`.
// Returns the written paths in sorted order.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir);

}  // namespace plumeseek
