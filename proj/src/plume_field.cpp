#include "plumeseek/plume_field.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#ifndef PLUMESEEK_DATA_DIR
#define PLUMESEEK_DATA_DIR "config"
#endif

namespace plumeseek {

void validate_source(const SourceParams& params) {
    for (double v : params.to_array()) {
        if (!std::isfinite(v)) throw ParameterError("source parameters must be finite");
    }
    if (params.q_s <= 0.0) throw ParameterError("q_s must be positive");
    if (params.psi <= 0.0) throw ParameterError("psi must be positive");
    if (params.lambda <= 0.0) throw ParameterError("lambda must be positive");
}

double plume_concentration(const SourceParams& params, double x, double y) {
    validate_source(params);
    if (!std::isfinite(x) || !std::isfinite(y)) throw ParameterError("query point must be finite");
    return plume_concentration_unchecked(params, x, y);
}

Observation sense(const SourceParams& params, Vec2 position, double sensor_noise, double env_noise,
                  std::mt19937_64& rng, int step_index) {
    if (sensor_noise < 0.0 || env_noise < 0.0) throw ParameterError("noise levels must be non-negative");
    const double phi = plume_concentration(params, position.x, position.y);
    double eta_env = 0.0;
    double eta_sensor = 0.0;
    // Draw order is part of the determinism contract: environment first, then sensor.
    if (env_noise > 0.0) eta_env = std::normal_distribution<double>(0.0, env_noise)(rng);
    if (sensor_noise > 0.0) eta_sensor = std::normal_distribution<double>(0.0, sensor_noise)(rng);
    const double value = std::max(0.0, phi * (1.0 + eta_env) + eta_sensor);
    return Observation{position, value, step_index};
}

double ResidualGrid::max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

ResidualGrid cde_residual(const ScalarField& field, const UniformGrid& grid, double alpha, Vec2 velocity,
                          double gamma_cde, const ScalarField& source) {
    if (grid.nx < 3 || grid.ny < 3) throw DimensionError("cde_residual needs at least a 3x3 grid");
    if (!(grid.spacing > 0.0)) throw ParameterError("grid spacing must be positive");

    std::vector<double> phi(static_cast<std::size_t>(grid.nx) * grid.ny);
    for (int i = 0; i < grid.nx; ++i)
        for (int j = 0; j < grid.ny; ++j) phi[static_cast<std::size_t>(i) * grid.ny + j] = field(grid.x(i), grid.y(j));
    auto at = [&](int i, int j) { return phi[static_cast<std::size_t>(i) * grid.ny + j]; };

    const double h = grid.spacing;
    ResidualGrid out;
    out.nx = grid.nx - 2;
    out.ny = grid.ny - 2;
    out.values.resize(static_cast<std::size_t>(out.nx) * out.ny);
    for (int i = 1; i < grid.nx - 1; ++i) {
        for (int j = 1; j < grid.ny - 1; ++j) {
            const double c = at(i, j);
            const double lap = (at(i + 1, j) + at(i - 1, j) + at(i, j + 1) + at(i, j - 1) - 4.0 * c) / (h * h);
            const double dx = (at(i + 1, j) - at(i - 1, j)) / (2.0 * h);
            const double dy = (at(i, j + 1) - at(i, j - 1)) / (2.0 * h);
            out.values[static_cast<std::size_t>(i - 1) * out.ny + (j - 1)] =
                alpha * lap - (velocity.x * dx + velocity.y * dy) + gamma_cde * c + source(grid.x(i), grid.y(j));
        }
    }
    return out;
}

namespace {

constexpr std::array<std::pair<FieldKind, std::string_view>, 7> kKindNames = {{
    {FieldKind::Temperature, "temperature"},
    {FieldKind::Concentration, "concentration"},
    {FieldKind::Magnetic, "magnetic"},
    {FieldKind::Electric, "electric"},
    {FieldKind::Gas, "gas"},
    {FieldKind::Energy, "energy"},
    {FieldKind::Noise, "noise"},
}};

std::array<double, 2> read_pair(const nlohmann::json& j, const char* key) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw FormatError(std::string("field preset key '") + key + "' must be a two-number array");
    std::array<double, 2> out{j[0].get<double>(), j[1].get<double>()};
    if (!(out[0] > 0.0) || !(out[1] > 0.0))
        throw FormatError(std::string("field preset key '") + key + "' must hold positive scales");
    return out;
}

}  // namespace

std::string_view to_string(FieldKind kind) {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

FieldKind field_kind_from_string(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& [k, n] : kKindNames)
        if (n == lower) return k;
    throw ParameterError("unknown field kind '" + std::string(name) + "'");
}

const FieldPreset& FieldPresetTable::at(FieldKind kind) const {
    for (const auto& p : presets)
        if (p.kind == kind) return p;
    throw ParameterError("no preset for field kind '" + std::string(to_string(kind)) + "'");
}

FieldPresetTable parse_field_presets(const std::string& json_text) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("field presets: ") + e.what());
    }
    if (!root.is_object() || !root.contains("presets") || !root["presets"].is_array())
        throw FormatError("field presets: expected an object with a 'presets' array");

    FieldPresetTable table;
    for (const auto& entry : root["presets"]) {
        if (!entry.is_object()) throw FormatError("field presets: each preset must be an object");
        FieldPreset preset;
        bool has_kind = false;
        for (const auto& [key, value] : entry.items()) {
            if (key == "kind") {
                if (!value.is_string()) throw FormatError("field presets: 'kind' must be a string");
                try {
                    preset.kind = field_kind_from_string(value.get<std::string>());
                } catch (const ParameterError& e) {
                    throw FormatError(std::string("field presets: ") + e.what());
                }
                has_kind = true;
            } else if (key == "q_scale") {
                if (!value.is_number() || !(value.get<double>() > 0.0))
                    throw FormatError("field presets: 'q_scale' must be a positive number");
                preset.q_scale = value.get<double>();
            } else if (key == "psi_range") {
                preset.psi_range = read_pair(value, "psi_range");
            } else if (key == "lambda_range") {
                preset.lambda_range = read_pair(value, "lambda_range");
            } else if (key == "sensor_noise") {
                if (!value.is_number() || value.get<double>() < 0.0)
                    throw FormatError("field presets: 'sensor_noise' must be a non-negative number");
                preset.sensor_noise = value.get<double>();
            } else {
                throw FormatError("field presets: unknown key '" + key + "'");
            }
        }
        if (!has_kind) throw FormatError("field presets: preset without 'kind'");
        for (const auto& existing : table.presets)
            if (existing.kind == preset.kind)
                throw FormatError("field presets: duplicate kind '" + std::string(to_string(preset.kind)) + "'");
        table.presets.push_back(preset);
    }
    for (FieldKind kind : kAllFieldKinds) {
        bool found = std::any_of(table.presets.begin(), table.presets.end(),
                                 [kind](const FieldPreset& p) { return p.kind == kind; });
        if (!found) throw FormatError("field presets: missing kind '" + std::string(to_string(kind)) + "'");
    }
    return table;
}

FieldPresetTable load_field_presets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open field preset file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_field_presets(ss.str());
}

std::string default_field_presets_path() { return std::string(PLUMESEEK_DATA_DIR) + "/field_presets.json"; }

}  // namespace plumeseek
