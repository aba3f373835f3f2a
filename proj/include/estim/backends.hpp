#pragma once

// Deterministic joint-moment backends: exact linear (Kalman), EKF
// linearization, scaled unscented transform and third-degree cubature.

#include "estim/core.hpp"

#include <string>
#include <string_view>

namespace estim {

enum class BackendKind { linear, ekf, ukf, ckf };

inline std::string_view to_string(BackendKind k) {
    switch (k) {
        case BackendKind::linear: return "linear";
        case BackendKind::ekf: return "ekf";
        case BackendKind::ukf: return "ukf";
        case BackendKind::ckf: return "ckf";
    }
    return "?";
}

struct MomentBackendConfig {
    BackendKind kind = BackendKind::linear;
    double ukf_alpha = 1.0;
    double ukf_beta = 2.0;
    /// Unset means 3 - D for the input dimension D.
    std::optional<double> ukf_kappa;
    double ekf_fd_step = 1e-6;

    double kappa_for(Eigen::Index dim) const {
        return ukf_kappa.value_or(3.0 - static_cast<double>(dim));
    }

    /// lambda = alpha^2 (D + kappa) - D
    double lambda_for(Eigen::Index dim) const {
        const double d = static_cast<double>(dim);
        return ukf_alpha * ukf_alpha * (d + kappa_for(dim)) - d;
    }

    void validate(Eigen::Index dim) const {
        if (!(ukf_alpha > 0.0)) throw ConfigError("ukf_alpha must be positive");
        if (!(static_cast<double>(dim) + lambda_for(dim) > 0.0))
            throw ConfigError("UKF scaling: D + lambda must be positive");
        if (!(ekf_fd_step > 0.0)) throw ConfigError("ekf_fd_step must be positive");
    }
};

/// Weighted point set in input space.
struct PointSet {
    Matrix points;          ///< one point per column
    Vector mean_weights;
    Vector cov_weights;
};

/// 2D+1 sigma points of the scaled unscented transform.
inline PointSet unscented_points(const GaussianBelief& input, const MomentBackendConfig& cfg,
                                 std::optional<TimeIndex> t = std::nullopt) {
    const auto d = input.dim();
    cfg.validate(d);
    const double lambda = cfg.lambda_for(d);
    const double spread = static_cast<double>(d) + lambda;
    const Matrix root = std::sqrt(spread) * safe_cholesky(input.cov(), t).lower;

    PointSet ps{Matrix(d, 2 * d + 1), Vector(2 * d + 1), Vector(2 * d + 1)};
    ps.points.col(0) = input.mean();
    for (Eigen::Index i = 0; i < d; ++i) {
        ps.points.col(1 + i) = input.mean() + root.col(i);
        ps.points.col(1 + d + i) = input.mean() - root.col(i);
    }
    ps.mean_weights.setConstant(0.5 / spread);
    ps.cov_weights.setConstant(0.5 / spread);
    ps.mean_weights(0) = lambda / spread;
    ps.cov_weights(0) = lambda / spread + (1.0 - cfg.ukf_alpha * cfg.ukf_alpha + cfg.ukf_beta);
    return ps;
}

/// 2D cubature points mean +- sqrt(D) L e_i, all weights 1/(2D).
inline PointSet cubature_points(const GaussianBelief& input, std::optional<TimeIndex> t = std::nullopt) {
    const auto d = input.dim();
    const Matrix root = std::sqrt(static_cast<double>(d)) * safe_cholesky(input.cov(), t).lower;
    PointSet ps{Matrix(d, 2 * d), Vector::Constant(2 * d, 0.5 / static_cast<double>(d)),
                Vector::Constant(2 * d, 0.5 / static_cast<double>(d))};
    for (Eigen::Index i = 0; i < d; ++i) {
        ps.points.col(i) = input.mean() + root.col(i);
        ps.points.col(d + i) = input.mean() - root.col(i);
    }
    return ps;
}

/// Analytic Jacobian if given, else central differences with step fd_step * max(1, |x_i|).
inline Matrix ekf_jacobian(const VectorFn& func, const Vector& x, TimeIndex t,
                           const std::optional<JacobianFn>& analytic, double fd_step) {
    Matrix jac;
    if (analytic) {
        jac = (*analytic)(x, t);
    } else {
        const Vector f0 = func(x, t);
        jac.resize(f0.size(), x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = fd_step * std::max(1.0, std::abs(x(i)));
            Vector hi = x, lo = x;
            hi(i) += h;
            lo(i) -= h;
            jac.col(i) = (func(hi, t) - func(lo, t)) / (hi(i) - lo(i));
        }
    }
    if (!jac.allFinite()) throw NonFiniteError("ekf_jacobian: non-finite Jacobian entry", t);
    return jac;
}

namespace detail {

inline JointGaussian linearized_joint(const GaussianBelief& input, const Vector& mean_b,
                                      const Matrix& jac, const Matrix& noise_cov, TimeIndex t) {
    if (jac.cols() != input.dim() || jac.rows() != noise_cov.rows())
        throw ConfigError("propagate_joint: Jacobian/noise shape mismatch", t);
    if (!mean_b.allFinite()) throw NonFiniteError("propagate_joint: non-finite mapped mean", t);
    const Matrix cov_ab = input.cov() * jac.transpose();
    const Matrix cov_bb = jac * cov_ab + noise_cov;
    return {input, GaussianBelief(mean_b, cov_bb, t), cov_ab, t};
}

inline JointGaussian point_joint(const GaussianBelief& input, const PointSet& ps, const VectorFn& func,
                                 const Matrix& noise_cov, TimeIndex t) {
    const auto n = ps.points.cols();
    const auto e = noise_cov.rows();
    Matrix mapped(e, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector y = func(ps.points.col(i), t);
        if (y.size() != e) throw ConfigError("propagate_joint: function output dimension mismatch", t);
        if (!y.allFinite())
            throw NonFiniteError("propagate_joint: non-finite output at point " + std::to_string(i), t);
        mapped.col(i) = y;
    }
    const Vector mean_b = mapped * ps.mean_weights;
    const Matrix dy = mapped.colwise() - mean_b;
    const Matrix dx = ps.points.colwise() - input.mean();
    const Matrix cov_bb = dy * ps.cov_weights.asDiagonal() * dy.transpose() + noise_cov;
    const Matrix cov_ab = dx * ps.cov_weights.asDiagonal() * dy.transpose();
    return {input, GaussianBelief(mean_b, cov_bb, t), cov_ab, t};
}

}  // namespace detail

/// Gaussian approximation to p(x, h(x) + noise) for x ~ input. Block a is
/// the input belief, unchanged.
inline JointGaussian propagate_joint(const MomentBackendConfig& backend, const GaussianBelief& input,
                                     const Mapping& mapping, const Matrix& noise_cov, TimeIndex t) {
    if (noise_cov.rows() != noise_cov.cols()) throw ConfigError("propagate_joint: noise not square", t);
    switch (backend.kind) {
        case BackendKind::linear: {
            if (!mapping.jacobian)
                throw ConfigError("linear backend needs the affine map's matrix (analytic Jacobian)", t);
            const Matrix jac = (*mapping.jacobian)(input.mean(), t);
            // f(mu) = F mu + offset for affine f
            return detail::linearized_joint(input, mapping.func(input.mean(), t), jac, noise_cov, t);
        }
        case BackendKind::ekf: {
            const Matrix jac =
                ekf_jacobian(mapping.func, input.mean(), t, mapping.jacobian, backend.ekf_fd_step);
            return detail::linearized_joint(input, mapping.func(input.mean(), t), jac, noise_cov, t);
        }
        case BackendKind::ukf:
            return detail::point_joint(input, unscented_points(input, backend, t), mapping.func, noise_cov, t);
        case BackendKind::ckf:
            return detail::point_joint(input, cubature_points(input, t), mapping.func, noise_cov, t);
    }
    throw ConfigError("propagate_joint: unknown backend", t);
}

}  // namespace estim
