#pragma once

// Joint-moment inference by Gibbs sampling under a conjugate
// Gaussian / inverse-Wishart prior. Used as a stochastic moment backend.

#include "estim/core.hpp"
#include "estim/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace estim {

struct GibbsConfig {
    std::size_t n_samples = 1000;  ///< N, rows of the joint data set
    std::size_t n_iters = 200;     ///< L, Gibbs sweeps
    std::size_t burn_in = 100;     ///< B, sweeps discarded before averaging
    std::uint64_t seed = 0;

    void validate(Eigen::Index joint_dim) const {
        if (n_samples == 0 || n_iters == 0) throw ConfigError("GibbsConfig: N and L must be positive");
        if (burn_in >= n_iters) throw ConfigError("GibbsConfig: burn-in must be smaller than the number of sweeps");
        if (n_samples < static_cast<std::size_t>(joint_dim) + 2)
            throw ConfigError("GibbsConfig: need at least dim + 2 samples for a full-rank scatter");
    }
};

/// Prior N(mu | m, S) x IW(Sigma | Psi, nu).
struct NiwHyperParams {
    Vector m;
    Matrix S;
    Matrix Psi;
    double nu = 0.0;
};

/// Sufficient statistics of a data set: row count, sample mean and the
/// scatter about the sample mean.
struct DataSummary {
    std::size_t count = 0;
    Vector mean;
    Matrix scatter;

    static DataSummary of_rows(const Matrix& rows) {
        DataSummary s;
        s.count = static_cast<std::size_t>(rows.rows());
        if (s.count == 0) {
            s.mean = Vector::Zero(rows.cols());
            s.scatter = Matrix::Zero(rows.cols(), rows.cols());
            return s;
        }
        s.mean = rows.colwise().mean().transpose();
        const Matrix centered = rows.rowwise() - s.mean.transpose();
        s.scatter = centered.transpose() * centered;
        return s;
    }

    /// sum_i (x_i - mu)(x_i - mu)^T
    Matrix scatter_about(const Vector& mu) const {
        if (count == 0) return Matrix::Zero(mu.size(), mu.size());
        const Vector d = mean - mu;
        return scatter + static_cast<double>(count) * d * d.transpose();
    }
};

/// Posterior N(m_n, S_n) of the mean given data and a fixed covariance:
/// S_n = (S^-1 + N Sigma^-1)^-1, m_n = S_n (S^-1 m + N Sigma^-1 xbar).
inline GaussianBelief mean_conditional_posterior(const DataSummary& data, const Matrix& sigma,
                                                 const NiwHyperParams& prior) {
    const auto n = prior.m.size();
    const Matrix eye = Matrix::Identity(n, n);
    Eigen::LLT<Matrix> s_llt(symmetrized(prior.S));
    if (s_llt.info() != Eigen::Success) throw SingularCovarianceError("mean conditional: prior S not PD");
    Matrix precision = s_llt.solve(eye);
    Vector info = s_llt.solve(prior.m);
    if (data.count > 0) {
        Eigen::LLT<Matrix> sig_llt(symmetrized(sigma));
        if (sig_llt.info() != Eigen::Success) throw SingularCovarianceError("mean conditional: Sigma not PD");
        const double count = static_cast<double>(data.count);
        precision += count * sig_llt.solve(eye);
        info += count * sig_llt.solve(data.mean);
    }
    Eigen::LLT<Matrix> post(symmetrized(precision));
    if (post.info() != Eigen::Success) throw SingularCovarianceError("mean conditional: singular S_n");
    return {post.solve(info), post.solve(eye)};
}

/// Draws mu ~ N(m_n, S_n); see mean_conditional_posterior.
inline Vector update_mean_conditional(const DataSummary& data, const Matrix& sigma,
                                      const NiwHyperParams& prior, Rng& rng) {
    const GaussianBelief post = mean_conditional_posterior(data, sigma, prior);
    Eigen::LLT<Matrix> llt(post.cov());
    if (llt.info() != Eigen::Success) throw SingularCovarianceError("mean conditional: singular S_n");
    return sample_gaussian(post.mean(), llt.matrixL(), rng);
}

inline Vector update_mean_conditional(const Matrix& rows, const Matrix& sigma, const NiwHyperParams& prior,
                                      Rng& rng) {
    return update_mean_conditional(DataSummary::of_rows(rows), sigma, prior, rng);
}

/// Sigma ~ IW(Psi, nu) by the Bartlett construction: with Psi = U U^T and
/// A the Bartlett factor of a standard Wishart, Sigma = (U A^-T)(U A^-T)^T.
inline Matrix sample_inverse_wishart(const Matrix& psi, double nu, Rng& rng) {
    const auto p = psi.rows();
    if (!(nu > static_cast<double>(p) - 1.0)) throw ConfigError("inverse-Wishart: nu must exceed dim - 1");
    Eigen::LLT<Matrix> llt(symmetrized(psi));
    if (llt.info() != Eigen::Success) throw NonPsdError("inverse-Wishart: scale matrix is not PD");
    const Matrix psi_root = llt.matrixL();

    std::normal_distribution<double> normal;
    Matrix bartlett = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        std::chi_squared_distribution<double> chi2(nu - static_cast<double>(i));
        bartlett(i, i) = std::sqrt(chi2(rng));
        for (Eigen::Index j = 0; j < i; ++j) bartlett(i, j) = normal(rng);
    }
    const Matrix inv_t = bartlett.transpose().triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
    const Matrix root = psi_root * inv_t;
    Matrix sigma = symmetrized(root * root.transpose());
    if (!sigma.allFinite()) throw NonFiniteError("inverse-Wishart: non-finite draw");
    return sigma;
}

/// Draws Sigma ~ IW(Psi + sum (x_i - mu)(x_i - mu)^T, nu + N).
inline Matrix update_cov_conditional(const DataSummary& data, const Vector& mu, const NiwHyperParams& prior,
                                     Rng& rng) {
    const Matrix scale = prior.Psi + data.scatter_about(mu);
    return sample_inverse_wishart(scale, prior.nu + static_cast<double>(data.count), rng);
}

inline Matrix update_cov_conditional(const Matrix& rows, const Vector& mu, const NiwHyperParams& prior,
                                     Rng& rng) {
    return update_cov_conditional(DataSummary::of_rows(rows), mu, prior, rng);
}

/// Weakly informative prior centred on the data: m = xbar,
/// S = 1e3 diag(sample cov), Psi = I, nu = dim + 2.
inline NiwHyperParams default_niw_prior(const DataSummary& data) {
    const auto n = data.mean.size();
    NiwHyperParams prior;
    prior.m = data.mean;
    Vector diag = data.scatter.diagonal() / static_cast<double>(std::max<std::size_t>(data.count, 2) - 1);
    const double floor = 1e-12 * std::max(1.0, diag.maxCoeff());
    diag = diag.cwiseMax(floor);
    prior.S = (1e3 * diag).asDiagonal();
    prior.Psi = Matrix::Identity(n, n);
    prior.nu = static_cast<double>(n) + 2.0;
    return prior;
}

/// Averages of the post-burn-in mean and covariance samples of a Gibbs chain.
struct GibbsEstimate {
    Vector mean;
    Matrix cov;
};

inline GibbsEstimate run_gibbs_chain(const DataSummary& data, const NiwHyperParams& prior,
                                     const GibbsConfig& cfg, Rng& rng) {
    const auto n = data.mean.size();
    Eigen::LLT<Matrix> s_llt(prior.S);
    if (s_llt.info() != Eigen::Success) throw SingularCovarianceError("Gibbs: prior S not PD");
    Vector mu = sample_gaussian(prior.m, s_llt.matrixL(), rng);
    Matrix sigma = sample_inverse_wishart(prior.Psi, prior.nu, rng);

    GibbsEstimate acc{Vector::Zero(n), Matrix::Zero(n, n)};
    for (std::size_t sweep = 1; sweep <= cfg.n_iters; ++sweep) {
        try {
            mu = update_mean_conditional(data, sigma, prior, rng);
            sigma = update_cov_conditional(data, mu, prior, rng);
        } catch (const EstimationError& e) {
            throw NonFiniteError(std::string(e.what()) + " in Gibbs sweep " + std::to_string(sweep));
        }
        if (sweep > cfg.burn_in) {
            acc.mean += mu;
            acc.cov += sigma;
        }
    }
    const double kept = static_cast<double>(cfg.n_iters - cfg.burn_in);
    acc.mean /= kept;
    acc.cov = symmetrized(acc.cov / kept);
    return acc;
}

/// Noise covariance used for data generation: must carry some noise; a
/// singular PSD matrix gets 1e-12 I added.
inline Matrix gibbs_noise_factor(const Matrix& noise_cov, std::optional<TimeIndex> t) {
    if (!is_psd(noise_cov) || !(noise_cov.trace() > 0.0))
        throw ConfigError("Gibbs backend: noise covariance must be positive definite", t);
    const Matrix sym = symmetrized(noise_cov);
    Eigen::LLT<Matrix> llt(sym);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::LLT<Matrix> jittered(sym + 1e-12 * Matrix::Identity(sym.rows(), sym.cols()));
    if (jittered.info() != Eigen::Success)
        throw ConfigError("Gibbs backend: noise covariance must be positive definite", t);
    return jittered.matrixL();
}

/// Builds the joint data set [x_i, h(x_i, t) + v_i], x_i ~ input, v_i ~ N(0, noise_cov).
inline Matrix joint_data_set(const GaussianBelief& input, const Mapping& mapping, const Matrix& noise_cov,
                             TimeIndex t, std::size_t count, Rng& rng) {
    const auto d = input.dim();
    const auto e = noise_cov.rows();
    const Matrix in_root = safe_cholesky(input.cov(), t).lower;
    const Matrix noise_root = gibbs_noise_factor(noise_cov, t);
    Matrix rows(static_cast<Eigen::Index>(count), d + e);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const Vector x = sample_gaussian(input.mean(), in_root, rng);
        const Vector y = mapping.func(x, t);
        if (y.size() != e) throw ConfigError("Gibbs backend: function output dimension mismatch", t);
        if (!y.allFinite())
            throw NonFiniteError("Gibbs backend: non-finite output at sample " + std::to_string(i), t);
        rows.row(i).head(d) = x.transpose();
        rows.row(i).tail(e) = (y + noise_root * standard_normal(e, rng)).transpose();
    }
    return rows;
}

/// Gaussian approximation to p(x, h(x) + noise) for x ~ input, inferred by
/// Gibbs sampling over the joint mean and covariance.
inline JointGaussian gibbs_joint_moments(const GaussianBelief& input, const Mapping& mapping,
                                         const Matrix& noise_cov, TimeIndex t, const GibbsConfig& cfg,
                                         Rng& rng) {
    if (noise_cov.rows() != noise_cov.cols()) throw ConfigError("Gibbs backend: noise not square", t);
    const auto joint_dim = input.dim() + noise_cov.rows();
    cfg.validate(joint_dim);
    const DataSummary data = DataSummary::of_rows(joint_data_set(input, mapping, noise_cov, t, cfg.n_samples, rng));
    const NiwHyperParams prior = default_niw_prior(data);
    GibbsEstimate est;
    try {
        est = run_gibbs_chain(data, prior, cfg, rng);
    } catch (const EstimationError& e) {
        throw NonFiniteError(e.what(), t);
    }
    return JointGaussian::from_full(est.mean, est.cov, input.dim(), t);
}

}  // namespace estim
