#include "plumeseek/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace plumeseek {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 3> kPlacementNames = {"before_resample", "after_resample", "move_covariance"};

// Keys whose default is null but which accept a box when set.
const std::set<std::string> kNullableBoxes = {"scenario.source_box", "training.source_box"};
const std::string kPlacementAlias = "filter.attention_after_resample";

json box_json(const Box2& b) { return json::array({b.x_lo, b.x_hi, b.y_lo, b.y_hi}); }

json optional_box_json(const std::optional<Box2>& b) { return b ? box_json(*b) : json(nullptr); }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const char* type_name(const json& v) {
    if (v.is_null()) return "null";
    if (v.is_boolean()) return "boolean";
    if (v.is_number()) return "number";
    if (v.is_string()) return "string";
    if (v.is_array()) return "array";
    return "object";
}

void merge(json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) throw UsageError("config " + (path.empty() ? std::string("root") : "'" + path + "'") + " must be an object");
    for (const auto& [key, value] : patch.items()) {
        const std::string kp = join(path, key);
        if (!base.contains(key)) throw UsageError("unknown config key '" + kp + "'");
        json& target = base[key];
        if (target.is_object()) {
            merge(target, value, kp);
            continue;
        }
        if (kp == kPlacementAlias) {
            if (!value.is_boolean() && !value.is_null())
                throw UsageError("config key '" + kp + "' expects boolean, got " + type_name(value));
            target = value;
            continue;
        }
        const bool nullable = kNullableBoxes.count(kp) > 0;
        const bool same_kind = (target.is_number() && value.is_number()) || (target.is_boolean() && value.is_boolean()) ||
                               (target.is_string() && value.is_string()) || (target.is_array() && value.is_array()) ||
                               (nullable && (value.is_null() || value.is_array()));
        if (!same_kind)
            throw UsageError("config key '" + kp + "' expects " + (nullable ? std::string("null or array") : type_name(target)) +
                             ", got " + type_name(value));
        target = value;
    }
}

// Typed readers that name the key on failure.
struct Reader {
    const json& root;

    const json& at(const std::string& path) const {
        const json* node = &root;
        std::stringstream ss(path);
        std::string part;
        while (std::getline(ss, part, '.')) node = &node->at(part);
        return *node;
    }
    double num(const std::string& path) const { return at(path).get<double>(); }
    bool flag(const std::string& path) const { return at(path).get<bool>(); }
    std::string str(const std::string& path) const { return at(path).get<std::string>(); }
    long long integer(const std::string& path) const {
        const json& v = at(path);
        if (!v.is_number_integer()) throw UsageError("config key '" + path + "' must be an integer");
        return v.get<long long>();
    }
    std::size_t count(const std::string& path) const {
        const long long v = integer(path);
        if (v < 0) throw UsageError("config key '" + path + "' must be non-negative");
        return static_cast<std::size_t>(v);
    }
    std::array<double, 2> pair(const std::string& path) const {
        const json& v = at(path);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw UsageError("config key '" + path + "' must be [low, high]");
        return {v[0].get<double>(), v[1].get<double>()};
    }
    Box2 box(const std::string& path) const {
        const json& v = at(path);
        if (!v.is_array() || v.size() != 4)
            throw UsageError("config key '" + path + "' must be [x_lo, x_hi, y_lo, y_hi]");
        for (const auto& e : v)
            if (!e.is_number()) throw UsageError("config key '" + path + "' must hold numbers");
        return Box2{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
    }
    std::optional<Box2> optional_box(const std::string& path) const {
        if (at(path).is_null()) return std::nullopt;
        return box(path);
    }
};

AttentionPlacement placement_from_string(const std::string& s) {
    for (std::size_t i = 0; i < kPlacementNames.size(); ++i)
        if (kPlacementNames[i] == s) return static_cast<AttentionPlacement>(i);
    throw UsageError("config key 'filter.attention_placement': unknown placement '" + s + "'");
}

RunConfig from_json(const json& j, const json& file_patch) {
    const Reader r{j};
    RunConfig cfg;
    ExperimentConfig& e = cfg.experiment;

    auto& dist = e.distribution;
    for (std::size_t d = 0; d < kSourceDims; ++d)
        dist.ranges[d] = r.pair(std::string("scenario.ranges.") + kSourceDimNames[d]);
    dist.lambda_floor = r.num("scenario.lambda_floor");
    dist.noise = {r.num("scenario.sensor_noise"), r.num("scenario.env_noise")};
    dist.domain = r.box("scenario.domain");
    dist.start_region = r.box("scenario.start_region");
    dist.max_steps = static_cast<int>(r.integer("scenario.max_steps"));
    dist.source_box = r.optional_box("scenario.source_box");

    auto& f = e.filter;
    f.particle_count = r.count("filter.particle_count");
    f.ess_fraction = r.num("filter.ess_fraction");
    f.zeta = r.pair("filter.zeta");
    f.eps_reg = r.num("filter.eps_reg");
    f.key_dim = r.num("filter.key_dim");
    f.attention_placement = placement_from_string(r.str("filter.attention_placement"));
    // The boolean spelling is accepted too, but not together with the named one.
    const bool file_has = file_patch.contains("filter") && file_patch["filter"].is_object();
    const bool named = file_has && file_patch["filter"].contains("attention_placement");
    const bool boolean = !r.at("filter.attention_after_resample").is_null();
    if (named && boolean) throw UsageError("config keys 'filter.attention_placement' and 'filter.attention_after_resample' conflict");
    if (boolean)
        f.attention_placement = r.flag("filter.attention_after_resample") ? AttentionPlacement::AfterResample
                                                                           : AttentionPlacement::BeforeResample;
    f.beta_paper_strict = r.flag("filter.beta_paper_strict");
    f.mahalanobis_term = r.flag("filter.mahalanobis_term");
    f.tempering = r.flag("filter.tempering");
    f.max_tempering_stages = static_cast<int>(r.integer("filter.max_tempering_stages"));

    auto& p = e.planner;
    p.horizon = static_cast<int>(r.integer("planner.horizon"));
    p.n_predictive_samples = static_cast<int>(r.integer("planner.n_predictive_samples"));
    p.dcee_kappa = r.num("planner.dcee_kappa");

    auto& t = e.training;
    t.schedule.episodes = static_cast<int>(r.integer("training.episodes"));
    t.schedule.epsilon_start = r.num("training.epsilon_start");
    t.schedule.epsilon_end = r.num("training.epsilon_end");
    t.schedule.decay_episodes = static_cast<int>(r.integer("training.decay_episodes"));
    t.particle_count = r.count("training.particle_count");
    t.max_steps = static_cast<int>(r.integer("training.max_steps"));
    t.alpha_lr = r.num("training.alpha_lr");
    t.gamma_discount = r.num("training.gamma_discount");
    t.source_box = r.optional_box("training.source_box");

    e.methods.clear();
    for (const auto& m : r.at("experiment.methods")) {
        if (!m.is_string()) throw UsageError("config key 'experiment.methods' must hold strings");
        e.methods.push_back(method_from_string(m.get<std::string>()));
    }
    e.fields.clear();
    for (const auto& fk : r.at("experiment.fields")) {
        if (!fk.is_string()) throw UsageError("config key 'experiment.fields' must hold strings");
        try {
            e.fields.push_back(field_kind_from_string(fk.get<std::string>()));
        } catch (const ParameterError& err) {
            throw UsageError(std::string("config key 'experiment.fields': ") + err.what());
        }
    }
    e.n_scenarios = r.count("experiment.n_scenarios");
    e.success_radius = r.num("experiment.success_radius");
    cfg.presets_path = r.str("experiment.presets");

    auto& s = cfg.simulate;
    s.method = method_from_string(r.str("simulate.method"));
    try {
        s.field = field_kind_from_string(r.str("simulate.field"));
    } catch (const ParameterError& err) {
        throw UsageError(std::string("config key 'simulate.field': ") + err.what());
    }
    s.episodes = r.count("simulate.episodes");
    s.snapshot_every = static_cast<int>(r.integer("simulate.snapshot_every"));

    const long long seed = r.integer("master_seed");
    if (seed < 0) throw UsageError("config key 'master_seed' must be non-negative");
    e.master_seed = static_cast<std::uint64_t>(seed);
    cfg.output_dir = r.str("output_dir");
    e.worker_count = static_cast<int>(r.integer("worker_count"));

    e.presets = load_field_presets(cfg.presets_path.empty() ? default_field_presets_path() : cfg.presets_path);
    return cfg;
}

json assignment_patch(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::parse_error&) {
        value = text;
    }
    json patch = json::object();
    json* node = &patch;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) node = &(*node)[parts[i]];
    (*node)[parts.back()] = value;
    return patch;
}

RunConfig resolve(const json& file_patch, const ConfigOverrides& ov) {
    json j = to_json(RunConfig{});
    merge(j, file_patch, "");
    if (const char* env = std::getenv("PLUMESEEK_WORKERS")) {
        try {
            std::size_t used = 0;
            const int w = std::stoi(env, &used);
            if (used != std::string(env).size() || w < 1) throw std::invalid_argument(env);
            j["worker_count"] = w;
        } catch (const std::exception&) {
            throw UsageError(std::string("PLUMESEEK_WORKERS must be a positive integer, got '") + env + "'");
        }
    }
    for (const auto& a : ov.assignments) merge(j, assignment_patch(a), "");
    if (ov.seed) j["master_seed"] = *ov.seed;
    if (ov.output_dir) j["output_dir"] = *ov.output_dir;
    if (ov.workers) j["worker_count"] = *ov.workers;
    try {
        RunConfig cfg = from_json(j, file_patch);
        cfg.experiment.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw UsageError(std::string("config: ") + e.what());
    } catch (const ParameterError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
}

}  // namespace

RunConfig::RunConfig() {
    experiment.methods = {Method::AttPfp, Method::Pfp, Method::Infotaxis, Method::Entrotaxis, Method::Dcee, Method::Random};
    experiment.fields.assign(kAllFieldKinds.begin(), kAllFieldKinds.end());
}

json to_json(const RunConfig& cfg) {
    const ExperimentConfig& e = cfg.experiment;
    json j;
    json ranges = json::object();
    for (std::size_t d = 0; d < kSourceDims; ++d) ranges[kSourceDimNames[d]] = e.distribution.ranges[d];
    j["scenario"] = {
        {"ranges", ranges},
        {"lambda_floor", e.distribution.lambda_floor},
        {"sensor_noise", e.distribution.noise.sensor_noise},
        {"env_noise", e.distribution.noise.env_noise},
        {"domain", box_json(e.distribution.domain)},
        {"start_region", box_json(e.distribution.start_region)},
        {"max_steps", e.distribution.max_steps},
        {"source_box", optional_box_json(e.distribution.source_box)},
    };
    const auto& f = e.filter;
    j["filter"] = {
        {"particle_count", f.particle_count},
        {"ess_fraction", f.ess_fraction},
        {"zeta", f.zeta},
        {"eps_reg", f.eps_reg},
        {"key_dim", f.key_dim},
        {"attention_placement", kPlacementNames[static_cast<std::size_t>(f.attention_placement)]},
        // boolean alias of attention_placement; null unless given
        {"attention_after_resample", nullptr},
        {"beta_paper_strict", f.beta_paper_strict},
        {"mahalanobis_term", f.mahalanobis_term},
        {"tempering", f.tempering},
        {"max_tempering_stages", f.max_tempering_stages},
    };
    j["planner"] = {
        {"horizon", e.planner.horizon},
        {"n_predictive_samples", e.planner.n_predictive_samples},
        {"dcee_kappa", e.planner.dcee_kappa},
    };
    const auto& t = e.training;
    j["training"] = {
        {"episodes", t.schedule.episodes},
        {"epsilon_start", t.schedule.epsilon_start},
        {"epsilon_end", t.schedule.epsilon_end},
        {"decay_episodes", t.schedule.decay_episodes},
        {"particle_count", t.particle_count},
        {"max_steps", t.max_steps},
        {"alpha_lr", t.alpha_lr},
        {"gamma_discount", t.gamma_discount},
        {"source_box", optional_box_json(t.source_box)},
    };
    json methods = json::array();
    for (Method m : e.methods) methods.push_back(std::string(to_string(m)));
    json fields = json::array();
    for (FieldKind k : e.fields) fields.push_back(std::string(to_string(k)));
    j["experiment"] = {
        {"methods", methods},
        {"fields", fields},
        {"n_scenarios", e.n_scenarios},
        {"success_radius", e.success_radius},
        {"presets", cfg.presets_path},
    };
    j["simulate"] = {
        {"method", std::string(to_string(cfg.simulate.method))},
        {"field", std::string(to_string(cfg.simulate.field))},
        {"episodes", cfg.simulate.episodes},
        {"snapshot_every", cfg.simulate.snapshot_every},
    };
    j["master_seed"] = e.master_seed;
    j["output_dir"] = cfg.output_dir;
    j["worker_count"] = e.worker_count;
    return j;
}

RunConfig parse_config_text(const std::string& json_text, const ConfigOverrides& overrides) {
    json patch = json::object();
    const bool blank = json_text.find_first_not_of(" \t\r\n") == std::string::npos;
    if (!blank) {
        try {
            patch = json::parse(json_text);
        } catch (const json::parse_error& e) {
            throw UsageError(std::string("config is not valid JSON: ") + e.what());
        }
    }
    return resolve(patch, overrides);
}

RunConfig parse_config(const std::string& path, const ConfigOverrides& overrides) {
    if (path.empty()) return resolve(json::object(), overrides);
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), overrides);
}

}  // namespace plumeseek
