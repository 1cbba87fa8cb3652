#include "plumeseek/kernels.hpp"

#include <algorithm>
#include <vector>

namespace plumeseek::kernels {

namespace {

std::ptrdiff_t ssize(std::size_t n) { return static_cast<std::ptrdiff_t>(n); }

std::size_t block_count(std::size_t n) { return (n + kReductionBlock - 1) / kReductionBlock; }

// Power-series length for exp(x), x in [0, 1]: 1/25! < 1e-25.
constexpr int kSeriesTerms = 26;

}  // namespace

void predict_intensity(std::span<const SourceParams> states, Vec2 position, std::span<double> out) {
    const auto n = ssize(states.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = plume_concentration_unchecked(states[i], position.x, position.y);
}

void observation_log_likelihood(std::span<const SourceParams> states, const Observation& obs,
                                const NoiseModel& noise, std::span<double> out) {
    const auto n = ssize(states.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const double phi = plume_concentration_unchecked(states[i], obs.position.x, obs.position.y);
        out[i] = observation_log_density(obs.intensity, phi, noise);
    }
}

void history_log_likelihood(std::span<const SourceParams> states, std::span<const Observation> history,
                            const NoiseModel& noise, std::span<double> out) {
    const auto n = ssize(states.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (const Observation& obs : history) {
            const double phi = plume_concentration_unchecked(states[i], obs.position.x, obs.position.y);
            acc += observation_log_density(obs.intensity, phi, noise);
        }
        out[i] = acc;
    }
}

void attention_refine(std::span<const double> weights, double key_dim, std::span<double> out) {
    const std::size_t n = weights.size();
    const double scale = 1.0 / std::sqrt(key_dim);

    // Power sums M_m = sum_j w_j^m, m = 0..kSeriesTerms, reduced per block.
    const std::size_t blocks = block_count(n);
    std::vector<std::array<double, kSeriesTerms + 1>> partial(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < ssize(blocks); ++b) {
        auto& acc = partial[b];
        acc.fill(0.0);
        const std::size_t end = std::min(n, (static_cast<std::size_t>(b) + 1) * kReductionBlock);
        for (std::size_t j = static_cast<std::size_t>(b) * kReductionBlock; j < end; ++j) {
            double p = 1.0;
            for (int m = 0; m <= kSeriesTerms; ++m) {
                acc[m] += p;
                p *= weights[j];
            }
        }
    }
    std::array<double, kSeriesTerms + 1> power_sum{};
    for (const auto& acc : partial)
        for (int m = 0; m <= kSeriesTerms; ++m) power_sum[m] += acc[m];

    // Row i: sum_j exp(c w_i w_j) w_j / sum_j exp(c w_i w_j), expanded in (c w_i)^m / m!.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(n); ++i) {
        const double x = scale * weights[i];
        double coeff = 1.0;
        double num = 0.0;
        double den = 0.0;
        for (int m = 0; m < kSeriesTerms; ++m) {
            num += coeff * power_sum[m + 1];
            den += coeff * power_sum[m];
            coeff *= x / (m + 1);
            if (coeff == 0.0) break;
        }
        out[i] = num / den;
    }

    std::vector<double> block_sum(blocks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < ssize(blocks); ++b) {
        const std::size_t end = std::min(n, (static_cast<std::size_t>(b) + 1) * kReductionBlock);
        double s = 0.0;
        for (std::size_t j = static_cast<std::size_t>(b) * kReductionBlock; j < end; ++j) s += out[j];
        block_sum[b] = s;
    }
    double total = 0.0;
    for (double s : block_sum) total += s;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(n); ++i) out[i] /= total;
}

void attention_refine_dense(std::span<const double> weights, double key_dim, std::span<double> out) {
    const std::size_t n = weights.size();
    const double scale = 1.0 / std::sqrt(key_dim);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < ssize(n); ++i) {
        double max_score = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) max_score = std::max(max_score, scale * weights[i] * weights[j]);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = std::exp(scale * weights[i] * weights[j] - max_score);
            num += a * weights[j];
            den += a;
        }
        out[i] = num / den;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += out[i];
    for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

WeightedMoments weighted_moments(std::span<const SourceParams> states, std::span<const double> weights) {
    constexpr std::size_t d = kSourceDims;
    const std::size_t n = states.size();
    const std::size_t blocks = block_count(n);

    std::vector<std::array<double, d>> mean_partial(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < ssize(blocks); ++b) {
        auto& acc = mean_partial[b];
        acc.fill(0.0);
        const std::size_t end = std::min(n, (static_cast<std::size_t>(b) + 1) * kReductionBlock);
        for (std::size_t i = static_cast<std::size_t>(b) * kReductionBlock; i < end; ++i) {
            const auto t = states[i].to_array();
            for (std::size_t k = 0; k < d; ++k) acc[k] += weights[i] * t[k];
        }
    }
    WeightedMoments m;
    for (const auto& acc : mean_partial)
        for (std::size_t k = 0; k < d; ++k) m.mean[k] += acc[k];

    std::vector<std::array<std::array<double, d>, d>> cov_partial(blocks);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < ssize(blocks); ++b) {
        auto& acc = cov_partial[b];
        for (auto& row : acc) row.fill(0.0);
        const std::size_t end = std::min(n, (static_cast<std::size_t>(b) + 1) * kReductionBlock);
        for (std::size_t i = static_cast<std::size_t>(b) * kReductionBlock; i < end; ++i) {
            auto t = states[i].to_array();
            for (std::size_t k = 0; k < d; ++k) t[k] -= m.mean[k];
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = r; c < d; ++c) acc[r][c] += weights[i] * t[r] * t[c];
        }
    }
    for (const auto& acc : cov_partial)
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) m.cov[r][c] += acc[r][c];
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < r; ++c) m.cov[r][c] = m.cov[c][r];
    return m;
}

namespace reference {

void observation_log_likelihood(std::span<const SourceParams> states, const Observation& obs,
                                const NoiseModel& noise, std::span<double> out) {
    for (std::size_t i = 0; i < states.size(); ++i) {
        const double phi = plume_concentration_unchecked(states[i], obs.position.x, obs.position.y);
        out[i] = observation_log_density(obs.intensity, phi, noise);
    }
}

void history_log_likelihood(std::span<const SourceParams> states, std::span<const Observation> history,
                            const NoiseModel& noise, std::span<double> out) {
    for (std::size_t i = 0; i < states.size(); ++i) {
        double acc = 0.0;
        for (const Observation& obs : history) {
            const double phi = plume_concentration_unchecked(states[i], obs.position.x, obs.position.y);
            acc += observation_log_density(obs.intensity, phi, noise);
        }
        out[i] = acc;
    }
}

void attention_refine(std::span<const double> weights, double key_dim, std::span<double> out) {
    const std::size_t n = weights.size();
    const double scale = 1.0 / std::sqrt(key_dim);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double max_score = -INFINITY;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = scale * weights[i] * weights[j];
            max_score = std::max(max_score, row[j]);
        }
        double den = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - max_score);
            den += row[j];
        }
        double value = 0.0;
        for (std::size_t j = 0; j < n; ++j) value += row[j] / den * weights[j];
        out[i] = value;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += out[i];
    for (std::size_t i = 0; i < n; ++i) out[i] /= total;
}

WeightedMoments weighted_moments(std::span<const SourceParams> states, std::span<const double> weights) {
    WeightedMoments m;
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto t = states[i].to_array();
        for (std::size_t k = 0; k < kSourceDims; ++k) m.mean[k] += weights[i] * t[k];
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
        const auto t = states[i].to_array();
        for (std::size_t r = 0; r < kSourceDims; ++r)
            for (std::size_t c = 0; c < kSourceDims; ++c)
                m.cov[r][c] += weights[i] * (t[r] - m.mean[r]) * (t[c] - m.mean[c]);
    }
    return m;
}

}  // namespace reference

}  // namespace plumeseek::kernels
