#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "plumeseek/types.hpp"

namespace plumeseek {

using Matrix7 = Eigen::Matrix<double, 7, 7>;
using Vector7 = Eigen::Matrix<double, 7, 1>;

// Axis-aligned uniform prior over the seven source dimensions.
struct PriorBox {
    std::array<std::array<double, 2>, kSourceDims> bounds{};

    bool contains(const SourceParams& theta) const;
    // Throws ParameterError on an inverted range or a non-positive lower bound for q_s, lambda or psi.
    void validate() const;
    double width(std::size_t dim) const { return bounds[dim][1] - bounds[dim][0]; }
};

// Where attention refinement enters the filter when it is enabled.
enum class AttentionPlacement {
    BeforeResample,  // resample from the refined weights
    AfterResample,   // refine the (uniform) weights after resampling
    MoveCovariance,  // refined pre-resample weights set the move proposal's mean and covariance
};

struct FilterConfig {
    std::size_t particle_count = 2000;
    double ess_fraction = 0.6;
    // Cessation threshold on the belief std of (x_s, y_s), metres.
    std::array<double, 2> zeta{0.5, 0.5};
    double eps_reg = 1e-6;
    double key_dim = 1.0;
    NoiseModel noise;
    bool attention_enabled = true;
    AttentionPlacement attention_placement = AttentionPlacement::AfterResample;
    // Drop the data log-likelihood ratio from the move acceptance.
    bool beta_paper_strict = false;
    // Pull toward the set mean in the move acceptance. Off by default: it shrinks the cloud on every move.
    bool mahalanobis_term = false;
    // Absorb a reading that would drop the ESS below threshold in several resample-move stages.
    bool tempering = true;
    int max_tempering_stages = 30;

    void validate() const;
};

struct ParticleSet {
    std::vector<SourceParams> states;
    std::vector<double> weights;
    std::vector<Observation> history;
    // Per-particle sum of observation log-likelihoods over `history`.
    std::vector<double> history_loglik;
    PriorBox prior;

    std::size_t size() const { return states.size(); }
};

ParticleSet init_particles(const PriorBox& prior, std::size_t count, std::mt19937_64& rng);

double log_likelihood(const Observation& obs, const SourceParams& theta, const FilterConfig& cfg);

/// Gaussian density of the reading around the noise-free prediction phi, with variance
/// sensor_noise^2 + env_noise^2 * phi^2. Floored at 1e-300.
double likelihood(const Observation& obs, const SourceParams& theta, const FilterConfig& cfg);

// w_i <- w_i * L(obs | theta_i), renormalized in the log domain. States are untouched.
void sis_update(ParticleSet& ps, const Observation& obs, const FilterConfig& cfg);

double effective_sample_size(std::span<const double> weights);
inline double effective_sample_size(const ParticleSet& ps) { return effective_sample_size(ps.weights); }

// Ancestor indices for systematic resampling with the given offset in [0, 1).
std::vector<std::size_t> systematic_indices(std::span<const double> weights, double offset);

void systematic_resample(ParticleSet& ps, std::mt19937_64& rng);

std::vector<double> attention_refine(std::span<const double> weights, double key_dim = 1.0);

Matrix7 weighted_covariance(const ParticleSet& ps);
Vector7 weighted_mean(const ParticleSet& ps);

// Lower Cholesky factor of sigma + eps_reg * I. Throws NumericalError if that is not positive definite.
Matrix7 regularize_cholesky(const Matrix7& sigma, double eps_reg);

// Silverman's rule of thumb: (4 / (N (d + 2)))^(1 / (d + 4)).
double optimal_bandwidth(std::size_t count, std::size_t dims);

// Random inputs for one move sweep: a standard-normal vector and an acceptance uniform per particle.
struct MoveDraws {
    std::vector<std::array<double, kSourceDims>> xi;
    std::vector<double> uniforms;
};

MoveDraws draw_move(std::size_t count, std::mt19937_64& rng);

struct MoveStats {
    std::size_t proposed = 0;
    std::size_t accepted = 0;
    std::size_t out_of_support = 0;

    double acceptance_rate() const {
        return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
    }
};

/// Metropolis rejuvenation. Each particle proposes theta' = theta + h_opt L xi and is accepted
/// when u < beta, where log beta is the history log-likelihood ratio (unless beta_paper_strict)
/// minus half the change in Mahalanobis distance from the set mean. Proposals outside the prior
/// box are rejected. Weights are left as they are (uniform after resampling).
MoveStats mcmc_move(ParticleSet& ps, const FilterConfig& cfg, const MoveDraws& draws);
// Same, with the proposal shape taken from `proposal` instead of the set's own moments.
MoveStats mcmc_move(ParticleSet& ps, const FilterConfig& cfg, const MoveDraws& draws, const Vector7& proposal_mean,
                    const Matrix7& proposal_cov);
MoveStats mcmc_move(ParticleSet& ps, const FilterConfig& cfg, std::mt19937_64& rng);

std::array<double, kSourceDims> belief_std(const ParticleSet& ps);

// True iff the std of both x_s and y_s is strictly below its zeta.
bool check_cessation(const ParticleSet& ps, const FilterConfig& cfg);

SourceParams belief_estimate(const ParticleSet& ps);

struct FilterStepStats {
    double ess_after_update = 0.0;
    bool resampled = false;
    // Resample-move stages spent on this reading (tempering); 1 without it.
    int stages = 0;
    MoveStats move;
};

// sis_update, then on low ESS: attention refinement, systematic resampling and an MCMC move.
FilterStepStats filter_step(ParticleSet& ps, const Observation& obs, const FilterConfig& cfg, std::mt19937_64& rng);

// Snapshot with columns x_s,y_s,q_s,u_x,u_y,lambda,psi,weight.
void write_particles_csv(const ParticleSet& ps, std::ostream& out);

}  // namespace plumeseek
