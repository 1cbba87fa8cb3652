#pragma once

// Data-parallel particle kernels. The functions in `plumeseek::kernels` are the
// OpenMP versions used at runtime; `plumeseek::kernels::reference` holds the
// straightforward serial versions they are tested and benchmarked against.
//
// All reductions in the parallel versions are blocked with a fixed block size and
// summed in block order, so results do not depend on the thread count.

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "plumeseek/plume_field.hpp"
#include "plumeseek/types.hpp"

namespace plumeseek::kernels {

// log(1e-300): per-observation floor on the likelihood.
inline constexpr double kLogLikelihoodFloor = -690.7755278982137;
inline constexpr double kMinVariance = 1e-12;
inline constexpr std::size_t kReductionBlock = 256;

inline double observation_variance(double predicted, const NoiseModel& noise) {
    const double v = noise.sensor_noise * noise.sensor_noise +
                     noise.env_noise * noise.env_noise * predicted * predicted;
    return v < kMinVariance ? kMinVariance : v;
}

// Floored Gaussian log-density of a reading given the noise-free prediction.
inline double observation_log_density(double intensity, double predicted, const NoiseModel& noise) {
    const double var = observation_variance(predicted, noise);
    const double diff = intensity - predicted;
    const double ll = -0.5 * std::log(2.0 * 3.14159265358979323846 * var) - 0.5 * diff * diff / var;
    return ll < kLogLikelihoodFloor ? kLogLikelihoodFloor : ll;
}

struct WeightedMoments {
    std::array<double, kSourceDims> mean{};
    std::array<std::array<double, kSourceDims>, kSourceDims> cov{};
};

void predict_intensity(std::span<const SourceParams> states, Vec2 position, std::span<double> out);

void observation_log_likelihood(std::span<const SourceParams> states, const Observation& obs,
                                const NoiseModel& noise, std::span<double> out);

// Sum of observation_log_likelihood over the whole history, per particle.
void history_log_likelihood(std::span<const SourceParams> states, std::span<const Observation> history,
                            const NoiseModel& noise, std::span<double> out);

// Self-attention over scalar weight tokens (Q = K = V = w), renormalized to the simplex.
// Uses the power-series form of each softmax row, exact to double precision for
// normalized input, in O(N * terms) instead of O(N^2).
void attention_refine(std::span<const double> weights, double key_dim, std::span<double> out);

// Same result computed row by row over the full N x N score matrix.
void attention_refine_dense(std::span<const double> weights, double key_dim, std::span<double> out);

// Weighted mean and centered covariance; weights must sum to 1.
WeightedMoments weighted_moments(std::span<const SourceParams> states, std::span<const double> weights);

namespace reference {

void observation_log_likelihood(std::span<const SourceParams> states, const Observation& obs,
                                const NoiseModel& noise, std::span<double> out);
void history_log_likelihood(std::span<const SourceParams> states, std::span<const Observation> history,
                            const NoiseModel& noise, std::span<double> out);
void attention_refine(std::span<const double> weights, double key_dim, std::span<double> out);
WeightedMoments weighted_moments(std::span<const SourceParams> states, std::span<const double> weights);

}  // namespace reference

}  // namespace plumeseek::kernels
