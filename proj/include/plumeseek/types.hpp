#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace plumeseek {

inline constexpr std::size_t kSourceDims = 7;

enum SourceDim : std::size_t { kXs = 0, kYs, kQs, kUx, kUy, kLambda, kPsi };

// Latent source and transport parameters. Field order matches SourceDim.
struct SourceParams {
    double x_s = 0.0;
    double y_s = 0.0;
    double q_s = 1.0;
    double u_x = 0.0;
    double u_y = 0.0;
    double lambda = 1.0;
    double psi = 1.0;

    std::array<double, kSourceDims> to_array() const {
        return {x_s, y_s, q_s, u_x, u_y, lambda, psi};
    }
    static SourceParams from_array(const std::array<double, kSourceDims>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
    }
    double operator[](std::size_t d) const { return to_array()[d]; }

    bool operator==(const SourceParams&) const = default;
};

inline constexpr std::array<const char*, kSourceDims> kSourceDimNames = {
    "x_s", "y_s", "q_s", "u_x", "u_y", "lambda", "psi"};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Vec2&) const = default;
};

// Sensor noise levels: additive sensor noise (epsilon) and multiplicative environmental noise (sigma).
struct NoiseModel {
    double sensor_noise = 0.5;
    double env_noise = 0.4;
};

struct Observation {
    Vec2 position;
    double intensity = 0.0;
    int step_index = 0;
};

// Error taxonomy. Each maps to one failure family named by the interface docs.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LifecycleError : std::logic_error {
    using std::logic_error::logic_error;
};
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace plumeseek
