#include "plumeseek/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include <omp.h>

namespace plumeseek {

namespace {

constexpr std::array<std::string_view, 8> kMethodNames = {"att-pfp",    "pfp",  "infotaxis", "entrotaxis",
                                                          "dcee",       "random", "att-pfrl", "pfrl"};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

MetricStat summarize(std::span<const double> values) {
    MetricStat s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

const FieldPreset& preset_for(const ExperimentConfig& cfg, FieldKind kind) { return cfg.presets.at(kind); }

std::vector<EpisodeRecord> evaluate_cell(const ExperimentConfig& cfg, const ScenarioDistribution& dist, FieldKind field,
                                         Method method, const ValueFunction* vf) {
    const FieldPreset& preset = preset_for(cfg, field);
    return run_parallel(cfg.n_scenarios, cfg.worker_count, [&](std::size_t i) {
        const EpisodeSeeds seeds = episode_seeds(cfg.master_seed, i);
        std::mt19937_64 scenario_rng(seeds.scenario);
        const Scenario sc = sample_scenario(dist, preset, scenario_rng);
        EpisodeRecord r = run_episode(sc, method, cfg, seeds, vf);
        r.scenario_index = i;
        return r;
    });
}

const ValueFunction* network_for(Method m, const ValueFunction* vf_att, const ValueFunction* vf_plain) {
    if (m == Method::AttPfrl) {
        if (!vf_att) throw UsageError("att-pfrl needs a trained checkpoint");
        return vf_att;
    }
    if (m == Method::Pfrl) {
        if (!vf_plain) throw UsageError("pfrl needs a trained checkpoint");
        return vf_plain;
    }
    return nullptr;
}

void audit(ExperimentResult& out, std::span<const EpisodeRecord> records, double radius, const MetricReport& report,
           std::string_view label) {
    const std::string msg = audit_metrics(records, radius, report);
    if (!msg.empty()) out.audit_failures.push_back(std::string(label) + ": " + msg);
}

std::size_t count_success(std::span<const EpisodeRecord> records, double radius) {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const EpisodeRecord& r) { return record_success(r, radius); }));
}

}  // namespace

void ScenarioDistribution::validate() const {
    for (std::size_t d = 0; d < kSourceDims; ++d)
        if (!(ranges[d][0] <= ranges[d][1]) || !std::isfinite(ranges[d][0]) || !std::isfinite(ranges[d][1]))
            throw ParameterError(std::string("scenario range for ") + kSourceDimNames[d] + " is inverted");
    if (!(lambda_floor > 0.0)) throw ParameterError("lambda_floor must be positive");
    if (!(ranges[kQs][0] > 0.0) || !(ranges[kPsi][0] > 0.0)) throw ParameterError("q_s and psi ranges must be positive");
    if (max_steps < 1) throw ParameterError("max_steps must be at least 1");
    if (source_box) {
        if (!domain.contains(*source_box)) throw ParameterError("source_box must lie inside the domain");
    }
}

PriorBox field_prior(const ScenarioDistribution& dist, const FieldPreset& preset) {
    PriorBox prior;
    prior.bounds = dist.ranges;
    prior.bounds[kQs] = {dist.ranges[kQs][0] * preset.q_scale, dist.ranges[kQs][1] * preset.q_scale};
    prior.bounds[kPsi] = {dist.ranges[kPsi][0] * preset.psi_range[0], dist.ranges[kPsi][1] * preset.psi_range[1]};
    prior.bounds[kLambda] = {std::max(dist.ranges[kLambda][0] * preset.lambda_range[0], dist.lambda_floor),
                             std::max(dist.ranges[kLambda][1] * preset.lambda_range[1], dist.lambda_floor)};
    // A degenerate range would make the prior box empty.
    for (auto& b : prior.bounds)
        if (!(b[0] < b[1])) b[1] = b[0] + 1e-9 * std::max(1.0, std::abs(b[0]));
    return prior;
}

Scenario sample_scenario(const ScenarioDistribution& dist, const FieldPreset& preset, std::mt19937_64& rng) {
    dist.validate();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::array<double, kSourceDims> u{};
    for (double& v : u) v = unit(rng);

    auto lerp = [](double lo, double hi, double t) { return lo + (hi - lo) * t; };
    Scenario sc;
    sc.field_type = preset.kind;
    sc.domain = dist.domain;
    sc.start_region = dist.start_region;
    sc.max_steps = dist.max_steps;
    sc.noise = {dist.noise.sensor_noise * preset.sensor_noise, dist.noise.env_noise};
    sc.prior = field_prior(dist, preset);

    std::array<double, kSourceDims> a{};
    for (std::size_t d = 0; d < kSourceDims; ++d) a[d] = lerp(sc.prior.bounds[d][0], sc.prior.bounds[d][1], u[d]);
    // lambda is drawn over the unfloored range and then floored
    const double lam_lo = dist.ranges[kLambda][0] * preset.lambda_range[0];
    const double lam_hi = dist.ranges[kLambda][1] * preset.lambda_range[1];
    a[kLambda] = std::max(lerp(lam_lo, lam_hi, u[kLambda]), dist.lambda_floor);
    if (dist.source_box) {
        a[kXs] = lerp(dist.source_box->x_lo, dist.source_box->x_hi, u[kXs]);
        a[kYs] = lerp(dist.source_box->y_lo, dist.source_box->y_hi, u[kYs]);
    }
    sc.source = SourceParams::from_array(a);
    return sc;
}

std::string_view to_string(Method m) { return kMethodNames[static_cast<std::size_t>(m)]; }

Method method_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kMethodNames.size(); ++i)
        if (kMethodNames[i] == name) return static_cast<Method>(i);
    throw UsageError("unknown method '" + std::string(name) + "'");
}

bool uses_attention(Method m) { return m == Method::AttPfp || m == Method::AttPfrl; }
bool is_learning(Method m) { return m == Method::AttPfrl || m == Method::Pfrl; }

bool record_success(const EpisodeRecord& r, double success_radius) {
    return r.ceased && r.position_error <= success_radius;
}

MetricReport compute_metrics(std::span<const EpisodeRecord> records, double success_radius) {
    if (records.empty()) throw ParameterError("compute_metrics needs at least one episode record");
    std::vector<double> success, path, wall, lps;
    for (const auto& r : records) {
        success.push_back(record_success(r, success_radius) ? 1.0 : 0.0);
        path.push_back(r.path_length);
        wall.push_back(r.wall_seconds);
        if (r.ceased) lps.push_back(r.position_error);
    }
    MetricReport rep;
    rep.oce = summarize(success);
    rep.ade = summarize(path);
    rep.rev = summarize(wall);
    if (!lps.empty()) rep.lps = summarize(lps);
    return rep;
}

std::string audit_metrics(std::span<const EpisodeRecord> records, double success_radius, const MetricReport& report) {
    // Straight per-metric loops, one pass for sums and one for deviations.
    auto check = [](const char* name, std::span<const EpisodeRecord> recs, auto include, auto value,
                    const std::optional<MetricStat>& got) -> std::string {
        long double sum = 0.0L;
        std::size_t n = 0;
        for (const auto& r : recs)
            if (include(r)) {
                sum += value(r);
                ++n;
            }
        if (n == 0) return got ? std::string(name) + " present with no contributing episodes" : "";
        if (!got) return std::string(name) + " missing";
        const long double mean = sum / n;
        long double ss = 0.0L;
        for (const auto& r : recs)
            if (include(r)) ss += (value(r) - mean) * (value(r) - mean);
        const long double sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0L;
        auto close = [](long double a, long double b) {
            return std::abs(a - b) <= 1e-12L * std::max<long double>(1.0L, std::abs(b));
        };
        if (got->n != n) return std::string(name) + " count mismatch";
        if (!close(got->mean, mean)) return std::string(name) + " mean mismatch";
        if (!close(got->std, sd)) return std::string(name) + " std mismatch";
        return "";
    };
    auto all = [](const EpisodeRecord&) { return true; };
    std::string msg;
    msg += check("oce", records, all, [&](const EpisodeRecord& r) { return r.ceased && r.position_error <= success_radius ? 1.0 : 0.0; }, report.oce);
    msg += check("ade", records, all, [](const EpisodeRecord& r) { return r.path_length; }, report.ade);
    msg += check("rev", records, all, [](const EpisodeRecord& r) { return r.wall_seconds; }, report.rev);
    msg += check("lps", records, [](const EpisodeRecord& r) { return r.ceased; },
                 [](const EpisodeRecord& r) { return r.position_error; }, report.lps);
    const bool bounds_ok = report.oce.mean >= 0.0 && report.oce.mean <= 1.0 && report.ade.mean >= 0.0 &&
                           report.rev.mean >= 0.0 && (!report.lps || report.lps->mean >= 0.0);
    if (!bounds_ok) msg += "metric outside its range";
    return msg;
}

void ExperimentConfig::validate() const {
    distribution.validate();
    filter.validate();
    planner.validate(filter.particle_count);
    training.schedule.validate();
    if (n_scenarios < 1) throw UsageError("n_scenarios must be at least 1");
    if (!(success_radius > 0.0)) throw ParameterError("success_radius must be positive");
    if (worker_count < 1) throw UsageError("worker_count must be at least 1");
    if (training.particle_count < 1) throw ParameterError("training particle_count must be at least 1");
    if (training.max_steps < 1) throw ParameterError("training max_steps must be at least 1");
    for (FieldKind f : fields) (void)presets.at(f);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index) {
    return splitmix64(splitmix64(master ^ fnv1a(stream)) + index);
}

EpisodeSeeds episode_seeds(std::uint64_t master, std::size_t index) {
    return EpisodeSeeds{derive_seed(master, "scenario", index), derive_seed(master, "env", index),
                        derive_seed(master, "policy", index)};
}

EpisodeRecord run_episode(const Scenario& scenario, Method method, const ExperimentConfig& cfg,
                          const EpisodeSeeds& seeds, const ValueFunction* vf, EpisodeTrace* trace) {
    if (is_learning(method) && !vf) throw UsageError(std::string(to_string(method)) + " needs a value function");
    FilterConfig fc = cfg.filter;
    fc.attention_enabled = uses_attention(method);
    PlannerConfig pc = cfg.planner;
    pc.attention_enabled = uses_attention(method);

    const auto t0 = std::chrono::steady_clock::now();
    EnvStreams streams = EnvStreams::from_seed(seeds.env);
    std::mt19937_64 policy(seeds.policy);
    CompositeState state = reset(scenario, fc, streams);
    const FilterConfig efc = episode_filter_config(scenario, fc);
    const PlanContext ctx{scenario, efc, pc};

    auto snapshot = [&](bool force) {
        if (!trace || trace->snapshot_every <= 0) return;
        const int k = state.agent.step_count;
        if (force || k % trace->snapshot_every == 0) {
            if (trace->snapshots.empty() || trace->snapshots.back().first != k) trace->snapshots.emplace_back(k, state.belief);
        }
    };
    if (trace) trace->rows.push_back(make_trace_row(state, "-", 0.0));
    snapshot(false);

    EpisodeRecord rec;
    for (;;) {
        Action a{};
        switch (method) {
            case Method::AttPfp:
            case Method::Pfp: a = plan_att_pfp(state, ctx, policy); break;
            case Method::Infotaxis: a = infotaxis_action(state, ctx, policy); break;
            case Method::Entrotaxis: a = entrotaxis_action(state, ctx, policy); break;
            case Method::Dcee: a = dcee_action(state, ctx, policy); break;
            case Method::Random: a = random_action(policy); break;
            case Method::AttPfrl:
            case Method::Pfrl: a = act_pfrl(state, scenario, *vf, 0.0, pc.attention_enabled, policy, efc.key_dim); break;
        }
        const StepOutcome out = step(state, a, scenario, fc, streams);
        rec.total_reward += out.reward;
        if (trace) trace->rows.push_back(make_trace_row(state, to_string(a), out.reward));
        snapshot(out.done);
        if (out.done) break;
    }
    const auto t1 = std::chrono::steady_clock::now();

    rec.ceased = state.done_reason == DoneReason::Cessation;
    rec.steps = state.agent.step_count;
    rec.path_length = state.agent.path_length;
    rec.position_error = position_error(belief_estimate(state.belief), scenario.source);
    rec.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
    return rec;
}

std::vector<EpisodeRecord> run_parallel(std::size_t count, int worker_count,
                                        const std::function<EpisodeRecord(std::size_t)>& fn) {
    std::vector<EpisodeRecord> out(count);
    if (worker_count <= 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::vector<std::exception_ptr> errors(count);
    omp_set_max_active_levels(1);
#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(count); ++i) {
        try {
            out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

void append_metric_rows(ExperimentResult& out, std::string_view method, std::string_view field, std::string_view scope,
                        const MetricReport& report) {
    auto row = [&](std::string_view metric, const MetricStat& s) {
        return ReportRow{std::string(method), std::string(field), std::string(scope), std::string(metric), s.mean, s.std, s.n};
    };
    out.rows.push_back(row("oce", report.oce));
    out.rows.push_back(row("ade", report.ade));
    if (report.lps) out.rows.push_back(row("lps", *report.lps));
    else out.rows.push_back(ReportRow{std::string(method), std::string(field), std::string(scope), "lps", NAN, NAN, 0});
    out.timing.push_back(row("rev", report.rev));
}

ValueFunction train_agent(const ExperimentConfig& cfg, bool attention_enabled, std::uint64_t seed,
                          std::vector<LearningCurveRow>* curve) {
    const TrainingConfig& tc = cfg.training;
    ScenarioDistribution dist = cfg.distribution;
    dist.max_steps = tc.max_steps;
    if (tc.source_box) dist.source_box = tc.source_box;
    const FieldKind field = cfg.fields.empty() ? FieldKind::Gas : cfg.fields.front();
    const FieldPreset preset = cfg.presets.at(field);
    FilterConfig fc = cfg.filter;
    fc.particle_count = tc.particle_count;

    ValueFunction vf(tc.alpha_lr, tc.gamma_discount, derive_seed(seed, "init", 0));
    std::mt19937_64 rng(derive_seed(seed, "train", 0));
    auto factory = [&](std::mt19937_64& g) { return sample_scenario(dist, preset, g); };
    auto rows = train_pfrl(factory, fc, vf, tc.schedule, attention_enabled, rng);
    if (curve) *curve = std::move(rows);
    return vf;
}

ExperimentResult run_fundamental(const ExperimentConfig& cfg, const ValueFunction* vf_att,
                                 const ValueFunction* vf_plain) {
    cfg.validate();
    ExperimentResult out;
    for (FieldKind field : cfg.fields) {
        for (Method m : cfg.methods) {
            const auto records = evaluate_cell(cfg, cfg.distribution, field, m, network_for(m, vf_att, vf_plain));
            const MetricReport rep = compute_metrics(records, cfg.success_radius);
            audit(out, records, cfg.success_radius, rep, std::string(to_string(m)) + "/" + std::string(to_string(field)));
            append_metric_rows(out, to_string(m), to_string(field), "all", rep);
        }
    }
    return out;
}

ExperimentResult run_ood(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult out;
    ExperimentConfig train_cfg = cfg;
    train_cfg.training.source_box = kOodTrainBox;
    const std::uint64_t train_seed = derive_seed(cfg.master_seed, "train", 0);

    std::optional<ValueFunction> vf_att, vf_plain;
    for (Method m : cfg.methods) {
        if (m == Method::AttPfrl && !vf_att) vf_att = train_agent(train_cfg, true, train_seed);
        if (m == Method::Pfrl && !vf_plain) vf_plain = train_agent(train_cfg, false, train_seed);
    }

    const std::array<std::pair<std::string_view, Box2>, 3> boxes = {{
        {"train_box", kOodTrainBox}, {"test_box_a", kOodTestBoxA}, {"test_box_b", kOodTestBoxB}}};
    for (FieldKind field : cfg.fields) {
        for (Method m : cfg.methods) {
            const ValueFunction* vf = m == Method::AttPfrl ? &*vf_att : m == Method::Pfrl ? &*vf_plain : nullptr;
            std::size_t train_success = 0, train_n = 0, test_success = 0, test_n = 0;
            for (const auto& [scope, box] : boxes) {
                ScenarioDistribution dist = cfg.distribution;
                dist.source_box = box;
                const auto records = evaluate_cell(cfg, dist, field, m, vf);
                const MetricReport rep = compute_metrics(records, cfg.success_radius);
                audit(out, records, cfg.success_radius, rep,
                      std::string(to_string(m)) + "/" + std::string(to_string(field)) + "/" + std::string(scope));
                append_metric_rows(out, to_string(m), to_string(field), scope, rep);
                const std::size_t s = count_success(records, cfg.success_radius);
                if (scope == "train_box") {
                    train_success += s;
                    train_n += records.size();
                } else {
                    test_success += s;
                    test_n += records.size();
                }
            }
            const double z = two_proportion_z(train_success, train_n, test_success, test_n);
            const double p = 2.0 * normal_upper_tail(std::abs(z));
            out.rows.push_back(ReportRow{std::string(to_string(m)), std::string(to_string(field)), "train_vs_test",
                                         "oce_two_proportion_p", p, z, train_n + test_n});
        }
    }
    return out;
}

ExperimentResult run_ablation(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult out;
    const std::uint64_t train_seed = derive_seed(cfg.master_seed, "train", 0);
    const ValueFunction vf_att = train_agent(cfg, true, train_seed);
    const ValueFunction vf_plain = train_agent(cfg, false, train_seed);

    const std::array<std::pair<Method, Method>, 2> pairs = {{{Method::AttPfp, Method::Pfp}, {Method::AttPfrl, Method::Pfrl}}};
    for (FieldKind field : cfg.fields) {
        const std::string fname(to_string(field));
        for (const auto& [att, plain] : pairs) {
            MetricReport reps[2];
            const Method arms[2] = {att, plain};
            for (int k = 0; k < 2; ++k) {
                const Method m = arms[k];
                out.rows.push_back(ReportRow{std::string(to_string(m)), fname, "config", "attention_enabled",
                                             uses_attention(m) ? 1.0 : 0.0, 0.0, 1});
                const auto records =
                    evaluate_cell(cfg, cfg.distribution, field, m, network_for(m, &vf_att, &vf_plain));
                reps[k] = compute_metrics(records, cfg.success_radius);
                audit(out, records, cfg.success_radius, reps[k], std::string(to_string(m)) + "/" + fname);
                append_metric_rows(out, to_string(m), fname, "arm", reps[k]);
            }
            const std::string label = std::string(to_string(att)) + "-minus-" + std::string(to_string(plain));
            out.rows.push_back(ReportRow{label, fname, "delta", "oce", reps[0].oce.mean - reps[1].oce.mean, 0.0, reps[0].oce.n});
            out.rows.push_back(ReportRow{label, fname, "delta", "ade", reps[0].ade.mean - reps[1].ade.mean, 0.0, reps[0].ade.n});
            if (reps[0].lps && reps[1].lps)
                out.rows.push_back(ReportRow{label, fname, "delta", "lps", reps[0].lps->mean - reps[1].lps->mean, 0.0,
                                             std::min(reps[0].lps->n, reps[1].lps->n)});
            else
                out.rows.push_back(ReportRow{label, fname, "delta", "lps", NAN, NAN, 0});
            out.timing.push_back(ReportRow{label, fname, "delta", "rev", reps[0].rev.mean - reps[1].rev.mean, 0.0, reps[0].rev.n});
        }
    }
    return out;
}

double two_proportion_z(std::size_t successes1, std::size_t n1, std::size_t successes2, std::size_t n2) {
    if (n1 == 0 || n2 == 0) throw ParameterError("two-proportion test needs non-empty samples");
    const double p1 = static_cast<double>(successes1) / static_cast<double>(n1);
    const double p2 = static_cast<double>(successes2) / static_cast<double>(n2);
    const double pooled = static_cast<double>(successes1 + successes2) / static_cast<double>(n1 + n2);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
    if (se == 0.0) return 0.0;
    return (p1 - p2) / se;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

void write_report_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
    out << "method,field,scope,metric,mean,std,n\n" << std::setprecision(12);
    for (const auto& r : rows) {
        out << r.method << ',' << r.field << ',' << r.scope << ',' << r.metric << ',';
        if (std::isnan(r.mean)) out << "NA";
        else out << r.mean;
        out << ',';
        if (std::isnan(r.std)) out << "NA";
        else out << r.std;
        out << ',' << r.n << '\n';
    }
}

std::vector<ReportRow> read_report_csv(std::istream& in) {
    std::vector<ReportRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line != "method,field,scope,metric,mean,std,n")
                throw FormatError("report line 1: unexpected header '" + line + "'");
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 7) throw FormatError("report line " + std::to_string(line_no) + ": expected 7 columns");
        try {
            auto num = [](const std::string& s) { return s == "NA" ? NAN : std::stod(s); };
            rows.push_back(ReportRow{cells[0], cells[1], cells[2], cells[3], num(cells[4]), num(cells[5]),
                                     static_cast<std::size_t>(std::stoull(cells[6]))});
        } catch (const std::exception&) {
            throw FormatError("report line " + std::to_string(line_no) + ": malformed number");
        }
    }
    if (line_no == 0) throw FormatError("report line 1: missing header");
    return rows;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << fnv1a(bytes);
    return s.str();
}

}  // namespace plumeseek
