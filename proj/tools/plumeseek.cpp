// plumeseek command-line entry point.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "plumeseek/experiments.hpp"
#include "plumeseek/plots.hpp"
#include "plumeseek/run_config.hpp"

namespace fs = std::filesystem;
using namespace plumeseek;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kAudit = 4 };

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_file(const fs::path& p, const std::string& body) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw UsageError("cannot write '" + p.string() + "'");
    o << body;
}

template <class Fn>
void write_with(const fs::path& p, Fn&& fn) {
    std::ofstream o(p, std::ios::binary);
    if (!o) throw UsageError("cannot write '" + p.string() + "'");
    fn(o);
}

struct Outputs {
    fs::path dir;
    std::vector<std::string> files;

    template <class Fn>
    void add(const std::string& name, Fn&& fn) {
        write_with(dir / name, fn);
        files.push_back(name);
    }
};

int finish(const std::string& command, const RunConfig& cfg, Outputs& out, const ExperimentResult* result,
           const std::string& started) {
    if (result) {
        out.add("report.csv", [&](std::ostream& o) { write_report_csv(result->rows, o); });
        out.add("timing.csv", [&](std::ostream& o) { write_report_csv(result->timing, o); });
    }
    const nlohmann::json resolved = to_json(cfg);
    nlohmann::json m;
    m["tool"] = "plumeseek";
    m["version"] = kVersion;
    m["command"] = command;
    m["config_hash"] = fnv1a_hex(resolved.dump());
    m["master_seed"] = cfg.experiment.master_seed;
    m["worker_count"] = cfg.experiment.worker_count;
    m["started_at"] = started;
    m["finished_at"] = utc_now();
    m["config"] = resolved;
    m["files"] = out.files;
    const bool audit_ok = !result || result->audit_failures.empty();
    m["audit"] = audit_ok ? nlohmann::json("pass") : nlohmann::json(result->audit_failures);
    if (result && !result->notes.empty()) m["notes"] = result->notes;
    write_file(out.dir / "manifest.json", m.dump(2) + "\n");
    if (!audit_ok) {
        for (const auto& f : result->audit_failures) std::cerr << "audit failure: " << f << '\n';
        return kAudit;
    }
    std::cout << "wrote " << out.files.size() + 1 << " files to " << out.dir.string() << '\n';
    return kOk;
}

Outputs prepare(const RunConfig& cfg) {
    Outputs out{fs::path(cfg.output_dir), {}};
    fs::create_directories(out.dir);
    return out;
}

ValueFunction load_checkpoint(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw UsageError("cannot open checkpoint '" + p.string() + "'");
    return ValueFunction::load_json(in);
}

// A directory holds one checkpoint per learning method; a single file serves both.
std::pair<std::optional<ValueFunction>, std::optional<ValueFunction>> load_networks(const std::string& path,
                                                                                    const std::vector<Method>& methods) {
    std::optional<ValueFunction> att, plain;
    const bool need_att = std::find(methods.begin(), methods.end(), Method::AttPfrl) != methods.end();
    const bool need_plain = std::find(methods.begin(), methods.end(), Method::Pfrl) != methods.end();
    if (!need_att && !need_plain) return {att, plain};
    if (path.empty()) throw UsageError("learning methods need --checkpoint");
    if (fs::is_directory(path)) {
        if (need_att) att = load_checkpoint(fs::path(path) / "checkpoint_att-pfrl.json");
        if (need_plain) plain = load_checkpoint(fs::path(path) / "checkpoint_pfrl.json");
    } else {
        if (need_att) att = load_checkpoint(path);
        if (need_plain) plain = load_checkpoint(path);
    }
    return {att, plain};
}

std::string indexed(const char* stem, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%03zu%s", stem, i, ext);
    return buf;
}

int cmd_simulate(const RunConfig& cfg, const std::string& checkpoint) {
    const std::string started = utc_now();
    const auto& sim = cfg.simulate;
    if (sim.episodes < 1) throw UsageError("simulate.episodes must be at least 1");
    ExperimentConfig e = cfg.experiment;
    e.fields = {sim.field};
    e.methods = {sim.method};
    e.validate();
    auto [att, plain] = load_networks(checkpoint, e.methods);
    const ValueFunction* vf = sim.method == Method::AttPfrl ? (att ? &*att : nullptr) : (plain ? &*plain : nullptr);

    Outputs out = prepare(cfg);
    std::vector<EpisodeRecord> records;
    for (std::size_t i = 0; i < sim.episodes; ++i) {
        const EpisodeSeeds seeds = episode_seeds(e.master_seed, i);
        std::mt19937_64 scenario_rng(seeds.scenario);
        const Scenario sc = sample_scenario(e.distribution, e.presets.at(sim.field), scenario_rng);
        EpisodeTrace trace;
        trace.snapshot_every = sim.snapshot_every;
        EpisodeRecord r = run_episode(sc, sim.method, e, seeds, vf, &trace);
        r.scenario_index = i;
        records.push_back(r);
        out.add(indexed("scenario", i, ".json"), [&](std::ostream& o) { write_scenario_json(sc, o); });
        out.add(indexed("trace", i, ".csv"), [&](std::ostream& o) { write_trace_csv(trace.rows, o); });
        for (const auto& [step, set] : trace.snapshots) {
            char name[64];
            std::snprintf(name, sizeof name, "particles_%03zu_step%04d.csv", i, step);
            out.add(name, [&](std::ostream& o) { write_particles_csv(set, o); });
        }
    }
    ExperimentResult result;
    const MetricReport rep = compute_metrics(records, e.success_radius);
    const std::string audit = audit_metrics(records, e.success_radius, rep);
    if (!audit.empty()) result.audit_failures.push_back(audit);
    append_metric_rows(result, to_string(sim.method), to_string(sim.field), "all", rep);
    return finish("simulate", cfg, out, &result, started);
}

int cmd_train(const RunConfig& cfg) {
    const std::string started = utc_now();
    Outputs out = prepare(cfg);
    const std::uint64_t seed = derive_seed(cfg.experiment.master_seed, "train", 0);
    for (const bool attention : {true, false}) {
        const std::string tag = attention ? "att-pfrl" : "pfrl";
        std::vector<LearningCurveRow> curve;
        const ValueFunction vf = train_agent(cfg.experiment, attention, seed, &curve);
        out.add("checkpoint_" + tag + ".json", [&](std::ostream& o) { vf.save_json(o); });
        out.add("learning_curve_" + tag + ".csv", [&](std::ostream& o) { write_learning_curve_csv(curve, o); });
    }
    return finish("train", cfg, out, nullptr, started);
}

int cmd_evaluate(const RunConfig& cfg, const std::string& checkpoint) {
    const std::string started = utc_now();
    auto [att, plain] = load_networks(checkpoint, cfg.experiment.methods);
    Outputs out = prepare(cfg);
    const ExperimentResult result = run_fundamental(cfg.experiment, att ? &*att : nullptr, plain ? &*plain : nullptr);
    return finish("evaluate", cfg, out, &result, started);
}

int cmd_ood(const RunConfig& cfg) {
    const std::string started = utc_now();
    Outputs out = prepare(cfg);
    const ExperimentResult result = run_ood(cfg.experiment);
    return finish("ood", cfg, out, &result, started);
}

int cmd_ablate(const RunConfig& cfg) {
    const std::string started = utc_now();
    Outputs out = prepare(cfg);
    const ExperimentResult result = run_ablation(cfg.experiment);
    return finish("ablate", cfg, out, &result, started);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Autonomous source search with particle-filter beliefs"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint, in_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::vector<std::string> sets;

    auto add_common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
        auto* o = sub->add_option("--out", out_dir, "output directory");
        if (out_required) o->required();
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--workers", workers, "episode worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--set", sets, "override one config key, e.g. filter.particle_count=500");
    };
    auto* simulate = app.add_subcommand("simulate", "run episodes and write traces");
    add_common(simulate, false);
    simulate->add_option("--checkpoint", checkpoint, "value-function checkpoint (learning methods)");
    auto* train = app.add_subcommand("train", "train the TD agents");
    add_common(train, true);
    auto* evaluate = app.add_subcommand("evaluate", "method x field comparison");
    add_common(evaluate, true);
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file or train output directory")->required();
    auto* ood = app.add_subcommand("ood", "train-box vs test-box evaluation");
    add_common(ood, true);
    auto* ablate = app.add_subcommand("ablate", "attention on/off ablation");
    add_common(ablate, true);
    auto* plot = app.add_subcommand("plot", "render SVGs from a run directory");
    plot->add_option("--in", in_dir, "run directory")->required();
    plot->add_option("--out", out_dir, "SVG directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (plot->parsed()) {
            const auto files = emit_plots(in_dir, out_dir);
            std::cout << "wrote " << files.size() << " plots to " << out_dir << '\n';
            return kOk;
        }
        ConfigOverrides ov;
        ov.seed = seed;
        if (!out_dir.empty()) ov.output_dir = out_dir;
        ov.workers = workers;
        ov.assignments = sets;
        const RunConfig cfg = parse_config(config_path, ov);
        if (simulate->parsed()) return cmd_simulate(cfg, checkpoint);
        if (train->parsed()) return cmd_train(cfg);
        if (evaluate->parsed()) return cmd_evaluate(cfg, checkpoint);
        if (ood->parsed()) return cmd_ood(cfg);
        if (ablate->parsed()) return cmd_ablate(cfg);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kData;
    } catch (const ParameterError& e) {
        std::cerr << "parameter error: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
