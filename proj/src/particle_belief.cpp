#include "plumeseek/particle_belief.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>

#include "plumeseek/kernels.hpp"

namespace plumeseek {

namespace {

void normalize_log_weights(std::vector<double>& log_w, std::vector<double>& out) {
    const double max_lw = *std::max_element(log_w.begin(), log_w.end());
    double total = 0.0;
    for (std::size_t i = 0; i < log_w.size(); ++i) {
        out[i] = std::exp(log_w[i] - max_lw);
        total += out[i];
    }
    for (double& w : out) w /= total;
}

Vector7 to_vector(const SourceParams& theta) {
    const auto a = theta.to_array();
    return Vector7(a.data());
}

SourceParams to_params(const Vector7& v) {
    return SourceParams{v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

}  // namespace

bool PriorBox::contains(const SourceParams& theta) const {
    const auto t = theta.to_array();
    for (std::size_t d = 0; d < kSourceDims; ++d)
        if (!(t[d] >= bounds[d][0] && t[d] <= bounds[d][1])) return false;
    return true;
}

void PriorBox::validate() const {
    for (std::size_t d = 0; d < kSourceDims; ++d) {
        if (!std::isfinite(bounds[d][0]) || !std::isfinite(bounds[d][1]) || !(bounds[d][0] < bounds[d][1]))
            throw ParameterError(std::string("prior range for ") + kSourceDimNames[d] + " must satisfy low < high");
    }
    for (std::size_t d : {std::size_t{kQs}, std::size_t{kLambda}, std::size_t{kPsi}})
        if (!(bounds[d][0] > 0.0))
            throw ParameterError(std::string("prior range for ") + kSourceDimNames[d] + " must be positive");
}

void FilterConfig::validate() const {
    if (particle_count < 1) throw ParameterError("particle_count must be at least 1");
    if (!(ess_fraction > 0.0 && ess_fraction <= 1.0)) throw ParameterError("ess_fraction must lie in (0, 1]");
    if (!(zeta[0] > 0.0 && zeta[1] > 0.0)) throw ParameterError("zeta must be positive");
    if (!(eps_reg > 0.0)) throw ParameterError("eps_reg must be positive");
    if (!(key_dim > 0.0)) throw ParameterError("key_dim must be positive");
    if (max_tempering_stages < 1) throw ParameterError("max_tempering_stages must be at least 1");
    if (noise.sensor_noise < 0.0 || noise.env_noise < 0.0) throw ParameterError("noise levels must be non-negative");
}

ParticleSet init_particles(const PriorBox& prior, std::size_t count, std::mt19937_64& rng) {
    prior.validate();
    if (count < 1) throw ParameterError("particle count must be at least 1");
    ParticleSet ps;
    ps.prior = prior;
    ps.states.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::array<double, kSourceDims> a{};
        for (std::size_t d = 0; d < kSourceDims; ++d)
            a[d] = std::uniform_real_distribution<double>(prior.bounds[d][0], prior.bounds[d][1])(rng);
        ps.states.push_back(SourceParams::from_array(a));
    }
    ps.weights.assign(count, 1.0 / static_cast<double>(count));
    ps.history_loglik.assign(count, 0.0);
    return ps;
}

double log_likelihood(const Observation& obs, const SourceParams& theta, const FilterConfig& cfg) {
    const double phi = plume_concentration(theta, obs.position.x, obs.position.y);
    return kernels::observation_log_density(obs.intensity, phi, cfg.noise);
}

double likelihood(const Observation& obs, const SourceParams& theta, const FilterConfig& cfg) {
    return std::max(std::exp(log_likelihood(obs, theta, cfg)), 1e-300);
}

void sis_update(ParticleSet& ps, const Observation& obs, const FilterConfig& cfg) {
    const std::size_t n = ps.size();
    std::vector<double> ll(n);
    kernels::observation_log_likelihood(ps.states, obs, cfg.noise, ll);
    std::vector<double> log_w(n);
    for (std::size_t i = 0; i < n; ++i) {
        log_w[i] = ps.weights[i] > 0.0 ? std::log(ps.weights[i]) + ll[i] : -std::numeric_limits<double>::infinity();
        ps.history_loglik[i] += ll[i];
    }
    normalize_log_weights(log_w, ps.weights);
    ps.history.push_back(obs);
}

double effective_sample_size(std::span<const double> weights) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double w : weights) {
        sum += w;
        sum_sq += w * w;
    }
    return sum * sum / sum_sq;
}

std::vector<std::size_t> systematic_indices(std::span<const double> weights, double offset) {
    const std::size_t n = weights.size();
    std::vector<double> cumulative(n);
    double running = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        running += weights[i];
        cumulative[i] = running;
    }
    for (double& c : cumulative) c /= running;
    cumulative.back() = 1.0;

    // (offset + k) / n can round up to 1; never walk past the last particle with mass.
    std::size_t last = n - 1;
    while (last > 0 && !(weights[last] > 0.0)) --last;

    std::vector<std::size_t> indices(n);
    std::size_t j = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double position = (offset + static_cast<double>(k)) / static_cast<double>(n);
        // Particle j owns the half-open interval [C_{j-1}, C_j).
        while (j < last && cumulative[j] <= position) ++j;
        indices[k] = j;
    }
    return indices;
}

void systematic_resample(ParticleSet& ps, std::mt19937_64& rng) {
    const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto idx = systematic_indices(ps.weights, offset);
    const std::size_t n = ps.size();
    std::vector<SourceParams> states(n);
    std::vector<double> loglik(n);
    for (std::size_t k = 0; k < n; ++k) {
        states[k] = ps.states[idx[k]];
        loglik[k] = ps.history_loglik[idx[k]];
    }
    ps.states = std::move(states);
    ps.history_loglik = std::move(loglik);
    ps.weights.assign(n, 1.0 / static_cast<double>(n));
}

std::vector<double> attention_refine(std::span<const double> weights, double key_dim) {
    std::vector<double> out(weights.size());
    kernels::attention_refine(weights, key_dim, out);
    return out;
}

Matrix7 weighted_covariance(const ParticleSet& ps) {
    const auto m = kernels::weighted_moments(ps.states, ps.weights);
    Matrix7 sigma;
    for (std::size_t r = 0; r < kSourceDims; ++r)
        for (std::size_t c = 0; c < kSourceDims; ++c) sigma(r, c) = m.cov[r][c];
    return sigma;
}

Vector7 weighted_mean(const ParticleSet& ps) {
    Vector7 mean = Vector7::Zero();
    for (std::size_t i = 0; i < ps.size(); ++i) mean += ps.weights[i] * to_vector(ps.states[i]);
    return mean;
}

Matrix7 regularize_cholesky(const Matrix7& sigma, double eps_reg) {
    const Matrix7 regularized = sigma + eps_reg * Matrix7::Identity();
    Eigen::LLT<Matrix7> llt(regularized);
    if (llt.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "Cholesky failed on regularized covariance (eps_reg=" << eps_reg << "):\n" << regularized;
        throw NumericalError(msg.str());
    }
    return llt.matrixL();
}

double optimal_bandwidth(std::size_t count, std::size_t dims) {
    const double n = static_cast<double>(count);
    const double d = static_cast<double>(dims);
    return std::pow(4.0 / (n * (d + 2.0)), 1.0 / (d + 4.0));
}

MoveDraws draw_move(std::size_t count, std::mt19937_64& rng) {
    MoveDraws draws;
    draws.xi.resize(count);
    draws.uniforms.resize(count);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t i = 0; i < count; ++i) {
        for (double& x : draws.xi[i]) x = normal(rng);
        draws.uniforms[i] = uniform(rng);
    }
    return draws;
}

MoveStats mcmc_move(ParticleSet& ps, const FilterConfig& cfg, const MoveDraws& draws) {
    return mcmc_move(ps, cfg, draws, weighted_mean(ps), weighted_covariance(ps));
}

namespace {

// Partially absorbed reading: the move targets history + phi * log L(obs), with obs not yet in the history.
struct TemperedReading {
    const Observation* obs = nullptr;
    double phi = 0.0;
    std::vector<double>* loglik = nullptr;
};

MoveStats move_impl(ParticleSet& ps, const FilterConfig& cfg, const MoveDraws& draws, const Vector7& mean,
                    const Matrix7& sigma, const TemperedReading& tempered) {
    const std::size_t n = ps.size();
    const Matrix7 chol = regularize_cholesky(sigma, cfg.eps_reg);
    const double h = optimal_bandwidth(n, kSourceDims);
    const auto tri = chol.triangularView<Eigen::Lower>();

    std::vector<SourceParams> proposals(n);
    std::vector<char> in_support(n);
    std::vector<double> mahalanobis_delta(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vector7 xi(draws.xi[i].data());
        const Vector7 theta = to_vector(ps.states[i]);
        proposals[i] = to_params(theta + h * (chol * xi));
        in_support[i] = ps.prior.contains(proposals[i]) ? 1 : 0;
        // L^{-1}(theta' - mean) = L^{-1}(theta - mean) + h xi
        const Vector7 z_old = tri.solve(theta - mean);
        const Vector7 z_new = z_old + h * xi;
        mahalanobis_delta[i] = z_new.squaredNorm() - z_old.squaredNorm();
    }

    // Only in-support proposals are evaluated; the rest keep a placeholder.
    std::vector<SourceParams> eval_states;
    std::vector<std::size_t> eval_index;
    for (std::size_t i = 0; i < n; ++i) {
        if (in_support[i]) {
            eval_states.push_back(proposals[i]);
            eval_index.push_back(i);
        }
    }
    std::vector<double> proposal_ll(eval_states.size());
    kernels::history_log_likelihood(eval_states, ps.history, cfg.noise, proposal_ll);
    std::vector<double> proposal_new(tempered.obs ? eval_states.size() : 0);
    if (tempered.obs) kernels::observation_log_likelihood(eval_states, *tempered.obs, cfg.noise, proposal_new);

    MoveStats stats;
    stats.proposed = n;
    stats.out_of_support = n - eval_states.size();
    for (std::size_t k = 0; k < eval_index.size(); ++k) {
        const std::size_t i = eval_index[k];
        double log_beta = cfg.mahalanobis_term ? -0.5 * mahalanobis_delta[i] : 0.0;
        if (!cfg.beta_paper_strict) {
            log_beta += proposal_ll[k] - ps.history_loglik[i];
            if (tempered.obs) log_beta += tempered.phi * (proposal_new[k] - (*tempered.loglik)[i]);
        }
        if (draws.uniforms[i] < std::exp(std::min(0.0, log_beta))) {
            ps.states[i] = proposals[i];
            ps.history_loglik[i] = proposal_ll[k];
            if (tempered.obs) (*tempered.loglik)[i] = proposal_new[k];
            ++stats.accepted;
        }
    }
    return stats;
}

}  // namespace

MoveStats mcmc_move(ParticleSet& ps, const FilterConfig& cfg, const MoveDraws& draws, const Vector7& mean,
                    const Matrix7& sigma) {
    return move_impl(ps, cfg, draws, mean, sigma, TemperedReading{});
}

MoveStats mcmc_move(ParticleSet& ps, const FilterConfig& cfg, std::mt19937_64& rng) {
    const MoveDraws draws = draw_move(ps.size(), rng);
    return mcmc_move(ps, cfg, draws);
}

std::array<double, kSourceDims> belief_std(const ParticleSet& ps) {
    const auto m = kernels::weighted_moments(ps.states, ps.weights);
    std::array<double, kSourceDims> out{};
    for (std::size_t d = 0; d < kSourceDims; ++d) out[d] = std::sqrt(std::max(0.0, m.cov[d][d]));
    return out;
}

bool check_cessation(const ParticleSet& ps, const FilterConfig& cfg) {
    const auto s = belief_std(ps);
    return s[kXs] < cfg.zeta[0] && s[kYs] < cfg.zeta[1];
}

SourceParams belief_estimate(const ParticleSet& ps) {
    const auto m = kernels::weighted_moments(ps.states, ps.weights);
    return SourceParams::from_array(m.mean);
}

namespace {

// Attention (per placement), systematic resampling and one move sweep.
MoveStats rejuvenate(ParticleSet& ps, const FilterConfig& cfg, std::mt19937_64& rng, const TemperedReading& tempered) {
    using enum AttentionPlacement;
    const bool attend = cfg.attention_enabled;
    Vector7 mean;
    Matrix7 sigma;
    if (attend && cfg.attention_placement == MoveCovariance) {
        ParticleSet refined_view;
        refined_view.states = ps.states;
        refined_view.weights = attention_refine(ps.weights, cfg.key_dim);
        mean = weighted_mean(refined_view);
        sigma = weighted_covariance(refined_view);
    } else if (attend && cfg.attention_placement == BeforeResample) {
        ps.weights = attention_refine(ps.weights, cfg.key_dim);
    }

    const double offset = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto idx = systematic_indices(ps.weights, offset);
    const std::size_t n = ps.size();
    std::vector<SourceParams> states(n);
    std::vector<double> loglik(n);
    std::vector<double> pending(tempered.loglik ? n : 0);
    for (std::size_t k = 0; k < n; ++k) {
        states[k] = ps.states[idx[k]];
        loglik[k] = ps.history_loglik[idx[k]];
        if (tempered.loglik) pending[k] = (*tempered.loglik)[idx[k]];
    }
    ps.states = std::move(states);
    ps.history_loglik = std::move(loglik);
    if (tempered.loglik) *tempered.loglik = std::move(pending);
    ps.weights.assign(n, 1.0 / static_cast<double>(n));

    if (attend && cfg.attention_placement == AfterResample) ps.weights = attention_refine(ps.weights, cfg.key_dim);
    if (!(attend && cfg.attention_placement == MoveCovariance)) {
        mean = weighted_mean(ps);
        sigma = weighted_covariance(ps);
    }
    return move_impl(ps, cfg, draw_move(n, rng), mean, sigma, tempered);
}

std::vector<double> reweighted(std::span<const double> weights, std::span<const double> loglik, double phi) {
    std::vector<double> log_w(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i)
        log_w[i] = weights[i] > 0.0 ? std::log(weights[i]) + phi * loglik[i] : -std::numeric_limits<double>::infinity();
    std::vector<double> out(weights.size());
    normalize_log_weights(log_w, out);
    return out;
}

}  // namespace

FilterStepStats filter_step(ParticleSet& ps, const Observation& obs, const FilterConfig& cfg, std::mt19937_64& rng) {
    FilterStepStats stats;
    const std::size_t n = ps.size();
    const double threshold = cfg.ess_fraction * static_cast<double>(n);

    std::vector<double> ll(n);
    kernels::observation_log_likelihood(ps.states, obs, cfg.noise, ll);
    if (!cfg.tempering || effective_sample_size(reweighted(ps.weights, ll, 1.0)) >= threshold) {
        sis_update(ps, obs, cfg);
        stats.ess_after_update = effective_sample_size(ps);
        if (stats.ess_after_update < threshold) {
            stats.move = rejuvenate(ps, cfg, rng, TemperedReading{});
            stats.resampled = true;
            stats.stages = 1;
        }
        return stats;
    }

    // The reading is absorbed in stages whose increments keep the ESS at the threshold.
    double phi = 0.0;
    for (int stage = 0; phi < 1.0; ++stage) {
        double step = 1.0 - phi;
        if (stage + 1 < cfg.max_tempering_stages && effective_sample_size(reweighted(ps.weights, ll, step)) < threshold) {
            double lo = 0.0;
            double hi = step;
            for (int it = 0; it < 40; ++it) {
                const double mid = 0.5 * (lo + hi);
                (effective_sample_size(reweighted(ps.weights, ll, mid)) >= threshold ? lo : hi) = mid;
            }
            step = std::max(lo, 1e-6 * (1.0 - phi));
        }
        ps.weights = reweighted(ps.weights, ll, step);
        phi = (step >= 1.0 - phi) ? 1.0 : phi + step;
        stats.ess_after_update = effective_sample_size(ps);
        // The last stage resamples too, so a degenerate reading always ends on uniform weights.
        stats.move = rejuvenate(ps, cfg, rng, TemperedReading{&obs, phi, &ll});
        stats.resampled = true;
        ++stats.stages;
    }
    for (std::size_t i = 0; i < n; ++i) ps.history_loglik[i] += ll[i];
    ps.history.push_back(obs);
    return stats;
}

void write_particles_csv(const ParticleSet& ps, std::ostream& out) {
    out << "x_s,y_s,q_s,u_x,u_y,lambda,psi,weight\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < ps.size(); ++i) {
        for (double v : ps.states[i].to_array()) out << v << ',';
        out << ps.weights[i] << '\n';
    }
}

}  // namespace plumeseek
