#pragma once

#include <array>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "plumeseek/types.hpp"

namespace plumeseek {

// Radial distance floor (m). Keeps the 1/r kernel finite at the source.
inline constexpr double kRadiusFloor = 1e-3;

// Throws ParameterError unless q_s, psi and lambda are positive and every field is finite.
void validate_source(const SourceParams& params);

/// Steady-state plume intensity at (x, y):
///   q_s / (4 pi psi r) * exp(-r/lambda - ((x-x_s) u_x + (y-y_s) u_y) / (2 psi))
/// with r floored at kRadiusFloor.
double plume_concentration(const SourceParams& params, double x, double y);

// Unchecked hot-path version of plume_concentration; the caller guarantees valid params.
inline double plume_concentration_unchecked(const SourceParams& p, double x, double y);

/// Noisy point reading: max(0, phi * (1 + eta_env) + eta_sensor), with
/// eta_env ~ N(0, env_noise^2) and eta_sensor ~ N(0, sensor_noise^2).
Observation sense(const SourceParams& params, Vec2 position, double sensor_noise, double env_noise,
                  std::mt19937_64& rng, int step_index = 0);

struct UniformGrid {
    double x0 = 0.0;
    double y0 = 0.0;
    double spacing = 1.0;
    int nx = 3;
    int ny = 3;

    double x(int i) const { return x0 + spacing * i; }
    double y(int j) const { return y0 + spacing * j; }
};

// Interior residual values, row-major over (i, j) with i in [1, nx-2], j in [1, ny-2].
struct ResidualGrid {
    int nx = 0;
    int ny = 0;
    std::vector<double> values;

    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * ny + j]; }
    double max_abs() const;
};

using ScalarField = std::function<double(double, double)>;

/// alpha * lap(phi) - v . grad(phi) + gamma_cde * phi + S on the grid interior,
/// using second-order central differences. Diagnostic only.
ResidualGrid cde_residual(const ScalarField& field, const UniformGrid& grid, double alpha, Vec2 velocity,
                          double gamma_cde, const ScalarField& source);

enum class FieldKind { Temperature, Concentration, Magnetic, Electric, Gas, Energy, Noise };

inline constexpr std::array<FieldKind, 7> kAllFieldKinds = {
    FieldKind::Temperature, FieldKind::Concentration, FieldKind::Magnetic, FieldKind::Electric,
    FieldKind::Gas,         FieldKind::Energy,        FieldKind::Noise};

std::string_view to_string(FieldKind kind);
FieldKind field_kind_from_string(std::string_view name);

// Multiplicative modifiers applied to the base scenario distribution for one field kind.
struct FieldPreset {
    FieldKind kind = FieldKind::Gas;
    double q_scale = 1.0;
    std::array<double, 2> psi_range{1.0, 1.0};     // scales (low, high) of the psi range
    std::array<double, 2> lambda_range{1.0, 1.0};  // scales (low, high) of the lambda range
    double sensor_noise = 1.0;                     // scales the sensor noise level
};

struct FieldPresetTable {
    std::vector<FieldPreset> presets;

    const FieldPreset& at(FieldKind kind) const;
};

// Parses the preset table. Throws FormatError on missing kinds, duplicates or unknown keys.
FieldPresetTable parse_field_presets(const std::string& json_text);
FieldPresetTable load_field_presets(const std::string& path);

// Preset file shipped with the sources (config/field_presets.json).
std::string default_field_presets_path();

}  // namespace plumeseek

#include "plumeseek/plume_field_inl.hpp"
