#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plumeseek/execution.hpp"
#include "plumeseek/plume_field.hpp"
#include "plumeseek/value_function.hpp"

namespace plumeseek {

// Training/testing parameter ranges; defaults are the base table for the Gas field.
struct ScenarioDistribution {
    std::array<std::array<double, 2>, kSourceDims> ranges = {{
        {5.0, 20.0}, {10.0, 20.0}, {10.0, 3000.0}, {0.0, 6.0}, {0.0, 6.0}, {0.0, 8.0}, {1.0, 5.0},
    }};
    double lambda_floor = 1e-3;
    NoiseModel noise{0.5, 0.4};
    Box2 domain{0.0, 20.0, 0.0, 20.0};
    Box2 start_region{0.0, 5.0, 0.0, 5.0};
    int max_steps = 150;
    // Restricts where the true source is drawn (out-of-distribution splits). The filter prior keeps the full ranges.
    std::optional<Box2> source_box;

    void validate() const;
};

// Ranges after the field preset is applied, with lambda floored. Used as the filter prior.
PriorBox field_prior(const ScenarioDistribution& dist, const FieldPreset& preset);

// One uniform draw per dimension mapped into the preset-scaled ranges. Source positions come from
// source_box when set. The same rng state gives paired scenarios across field kinds.
Scenario sample_scenario(const ScenarioDistribution& dist, const FieldPreset& preset, std::mt19937_64& rng);

enum class Method { AttPfp, Pfp, Infotaxis, Entrotaxis, Dcee, Random, AttPfrl, Pfrl };

inline constexpr std::array<Method, 8> kAllMethods = {Method::AttPfp, Method::Pfp,    Method::Infotaxis,
                                                      Method::Entrotaxis, Method::Dcee, Method::Random,
                                                      Method::AttPfrl, Method::Pfrl};

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
bool uses_attention(Method m);
bool is_learning(Method m);

struct EpisodeRecord {
    std::size_t scenario_index = 0;
    bool ceased = false;
    int steps = 0;
    double path_length = 0.0;
    double position_error = 0.0;
    double total_reward = 0.0;
    double wall_seconds = 0.0;
};

struct MetricStat {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t n = 0;
};

struct MetricReport {
    MetricStat oce;
    MetricStat ade;
    MetricStat rev;
    std::optional<MetricStat> lps;  // absent when no episode ceased
};

bool record_success(const EpisodeRecord& r, double success_radius);
MetricReport compute_metrics(std::span<const EpisodeRecord> records, double success_radius);

// Independent recomputation of every field of `report`. Returns an empty string when it matches.
std::string audit_metrics(std::span<const EpisodeRecord> records, double success_radius, const MetricReport& report);

struct TrainingConfig {
    TrainingSchedule schedule;
    std::size_t particle_count = 200;
    int max_steps = 150;
    double alpha_lr = 1e-2;
    double gamma_discount = 0.99;
    // Narrows the training sources; the ood harness sets it to the training box.
    std::optional<Box2> source_box;
};

struct ExperimentConfig {
    ScenarioDistribution distribution;
    FilterConfig filter;
    PlannerConfig planner;
    TrainingConfig training;
    FieldPresetTable presets;
    std::vector<FieldKind> fields;
    std::vector<Method> methods;
    std::size_t n_scenarios = 100;
    double success_radius = 1.0;
    std::uint64_t master_seed = 1;
    int worker_count = 1;

    void validate() const;
};

// Deterministic child seed for (master, stream, index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index);

struct EpisodeSeeds {
    std::uint64_t scenario = 0;
    std::uint64_t env = 0;
    std::uint64_t policy = 0;
};
// Identical for every method and field: scenario i sees the same draws everywhere.
EpisodeSeeds episode_seeds(std::uint64_t master, std::size_t index);

struct EpisodeTrace {
    std::vector<TraceRow> rows;
    // Belief snapshots (step, set) every snapshot_every steps plus the final one.
    std::vector<std::pair<int, ParticleSet>> snapshots;
    int snapshot_every = 0;
};

EpisodeRecord run_episode(const Scenario& scenario, Method method, const ExperimentConfig& cfg,
                          const EpisodeSeeds& seeds, const ValueFunction* vf = nullptr, EpisodeTrace* trace = nullptr);

// Runs fn(i) for i in [0, count) on worker_count threads; results land in index order.
std::vector<EpisodeRecord> run_parallel(std::size_t count, int worker_count,
                                        const std::function<EpisodeRecord(std::size_t)>& fn);

struct ReportRow {
    std::string method;
    std::string field;
    std::string scope;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

struct ExperimentResult {
    std::vector<ReportRow> rows;    // reproducible rows
    std::vector<ReportRow> timing;  // wall-clock (REV) rows, kept apart
    std::vector<std::string> audit_failures;
    std::vector<std::string> notes;
};

void append_metric_rows(ExperimentResult& out, std::string_view method, std::string_view field, std::string_view scope,
                        const MetricReport& report);

ValueFunction train_agent(const ExperimentConfig& cfg, bool attention_enabled, std::uint64_t seed,
                          std::vector<LearningCurveRow>* curve = nullptr);

// Learning methods need a trained network in `vf` (ATT-PFRL) and `vf_plain` (PFRL); either may be null if unused.
ExperimentResult run_fundamental(const ExperimentConfig& cfg, const ValueFunction* vf_att = nullptr,
                                 const ValueFunction* vf_plain = nullptr);

inline constexpr Box2 kOodTrainBox{10.0, 15.0, 10.0, 15.0};
inline constexpr Box2 kOodTestBoxA{5.0, 10.0, 15.0, 20.0};
inline constexpr Box2 kOodTestBoxB{15.0, 20.0, 15.0, 20.0};

ExperimentResult run_ood(const ExperimentConfig& cfg);

ExperimentResult run_ablation(const ExperimentConfig& cfg);

// Pooled two-proportion z statistic for p1 - p2; 0 when both pools are all-success or all-failure.
double two_proportion_z(std::size_t successes1, std::size_t n1, std::size_t successes2, std::size_t n2);
double normal_upper_tail(double z);

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out);
std::vector<ReportRow> read_report_csv(std::istream& in);

// FNV-1a 64 over the bytes, printed as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace plumeseek
