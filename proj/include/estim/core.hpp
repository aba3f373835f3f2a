#pragma once

// Gaussian algebra shared by every filter and smoother: belief types,
// jittered Cholesky, PSD solves, conditioning and log-densities.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace estim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Time index t. Measurements start at t = 1; t = 0 is the prior.
using TimeIndex = int;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class EstimationError : public std::runtime_error {
public:
    explicit EstimationError(const std::string& what, std::optional<TimeIndex> t = std::nullopt)
        : std::runtime_error(t ? what + " (t=" + std::to_string(*t) + ")" : what), time_(t) {}

    std::optional<TimeIndex> time() const noexcept { return time_; }

private:
    std::optional<TimeIndex> time_;
};

class NonPsdError : public EstimationError {
    using EstimationError::EstimationError;
};

class SingularCovarianceError : public EstimationError {
    using EstimationError::EstimationError;
};

class NonFiniteError : public EstimationError {
    using EstimationError::EstimationError;
};

/// Invalid configuration or violated call contract.
class ConfigError : public EstimationError {
    using EstimationError::EstimationError;
};

// ---------------------------------------------------------------------------
// Covariance helpers
// ---------------------------------------------------------------------------

inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

/// True when the smallest eigenvalue is >= -rel_tol * (largest |eigenvalue|).
inline bool is_psd(const Matrix& cov, double rel_tol = 1e-8) {
    if (cov.rows() != cov.cols()) return false;
    if (cov.size() == 0) return true;
    if (!cov.allFinite()) return false;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(cov), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double scale = std::max(std::abs(ev.maxCoeff()), std::abs(ev.minCoeff()));
    return ev.minCoeff() >= -rel_tol * scale;
}

inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-9) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

// Jitter schedule: 0, 1e-10, 1e-9, ..., 1e-4.
inline constexpr double kFirstJitter = 1e-10;
inline constexpr double kMaxJitter = 1e-4;

struct CholeskyFactor {
    Matrix lower;
    double jitter = 0.0;  ///< epsilon actually added to the diagonal
};

/// Lower Cholesky factor of cov + eps*I, escalating eps until the
/// factorization succeeds. Throws NonPsdError past kMaxJitter.
inline CholeskyFactor safe_cholesky(const Matrix& cov, std::optional<TimeIndex> t = std::nullopt) {
    if (cov.rows() != cov.cols()) throw ConfigError("safe_cholesky: matrix is not square", t);
    if (!cov.allFinite()) throw NonFiniteError("safe_cholesky: non-finite covariance entry", t);
    const Matrix sym = symmetrized(cov);
    const auto n = sym.rows();
    double eps = 0.0;
    while (true) {
        Eigen::LLT<Matrix> llt(sym + eps * Matrix::Identity(n, n));
        if (llt.info() == Eigen::Success) {
            Matrix l = llt.matrixL();
            if (l.allFinite()) return {std::move(l), eps};
        }
        if (eps >= kMaxJitter * (1.0 - 1e-12)) break;
        eps = (eps == 0.0) ? kFirstJitter : eps * 10.0;
    }
    throw NonPsdError("safe_cholesky: matrix is not positive semi-definite after jitter " +
                          std::to_string(kMaxJitter),
                      t);
}

/// Solves (L L^T) X = rhs for a lower Cholesky factor L.
inline Matrix cholesky_solve(const Matrix& lower, const Matrix& rhs) {
    Matrix y = lower.triangularView<Eigen::Lower>().solve(rhs);
    return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

/// Minimum-norm solution cov^+ rhs. Eigenvalues below 1e-12 * max are treated as zero.
inline Matrix pseudo_solve(const Matrix& cov, const Matrix& rhs) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(cov));
    const Vector& ev = es.eigenvalues();
    const double cutoff = 1e-12 * std::max(0.0, ev.maxCoeff());
    Vector inv = Vector::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) > cutoff && ev(i) > 0.0) inv(i) = 1.0 / ev(i);
    const Matrix& v = es.eigenvectors();
    return v * inv.asDiagonal() * (v.transpose() * rhs);
}

/// cov^{-1} rhs for a symmetric PSD cov without forming the inverse.
/// Plain Cholesky first; the pseudo-inverse covers singular cov.
inline Matrix solve_psd(const Matrix& cov, const Matrix& rhs) {
    if (cov.rows() != cov.cols() || cov.rows() != rhs.rows())
        throw ConfigError("solve_psd: dimension mismatch");
    if (!cov.allFinite() || !rhs.allFinite()) throw NonFiniteError("solve_psd: non-finite input");
    Eigen::LLT<Matrix> llt(symmetrized(cov));
    if (llt.info() == Eigen::Success) {
        Matrix x = llt.solve(rhs);
        if (x.allFinite()) return x;
    }
    return pseudo_solve(cov, rhs);
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Mean and covariance of one Gaussian marginal. Construction symmetrizes the
/// covariance and rejects non-PSD or non-finite input.
class GaussianBelief {
public:
    GaussianBelief() = default;

    GaussianBelief(Vector mean, const Matrix& cov, std::optional<TimeIndex> t = std::nullopt)
        : mean_(std::move(mean)), cov_(symmetrized(cov)) {
        if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
            throw ConfigError("GaussianBelief: mean/covariance dimensions disagree", t);
        if (!mean_.allFinite() || !cov_.allFinite())
            throw NonFiniteError("GaussianBelief: non-finite moments", t);
        if (!is_psd(cov_)) throw NonPsdError("GaussianBelief: covariance is not PSD", t);
    }

    static GaussianBelief scalar(double mean, double var) {
        return {Vector::Constant(1, mean), Matrix::Constant(1, 1, var)};
    }

    const Vector& mean() const noexcept { return mean_; }
    const Matrix& cov() const noexcept { return cov_; }
    Eigen::Index dim() const noexcept { return mean_.size(); }

    friend bool operator==(const GaussianBelief& a, const GaussianBelief& b) {
        return a.mean_.size() == b.mean_.size() && a.mean_ == b.mean_ && a.cov_ == b.cov_;
    }

private:
    Vector mean_;
    Matrix cov_;
};

/// Partitioned Gaussian over blocks (a, b).
class JointGaussian {
public:
    JointGaussian() = default;

    JointGaussian(GaussianBelief a, GaussianBelief b, Matrix cov_ab,
                  std::optional<TimeIndex> t = std::nullopt)
        : a_(std::move(a)), b_(std::move(b)), cov_ab_(std::move(cov_ab)) {
        if (cov_ab_.rows() != a_.dim() || cov_ab_.cols() != b_.dim())
            throw ConfigError("JointGaussian: cross-covariance has wrong shape", t);
        if (!cov_ab_.allFinite()) throw NonFiniteError("JointGaussian: non-finite cross-covariance", t);
        if (!is_psd(full_cov())) throw NonPsdError("JointGaussian: assembled covariance is not PSD", t);
    }

    /// Splits a full (D_a + D_b) Gaussian at dimension dim_a.
    static JointGaussian from_full(const Vector& mean, const Matrix& cov, Eigen::Index dim_a,
                                   std::optional<TimeIndex> t = std::nullopt) {
        const auto n = mean.size();
        const auto dim_b = n - dim_a;
        const Matrix sym = symmetrized(cov);
        return {GaussianBelief(mean.head(dim_a), sym.topLeftCorner(dim_a, dim_a), t),
                GaussianBelief(mean.tail(dim_b), sym.bottomRightCorner(dim_b, dim_b), t),
                sym.topRightCorner(dim_a, dim_b), t};
    }

    const GaussianBelief& a() const noexcept { return a_; }
    const GaussianBelief& b() const noexcept { return b_; }
    const Vector& mean_a() const noexcept { return a_.mean(); }
    const Vector& mean_b() const noexcept { return b_.mean(); }
    const Matrix& cov_aa() const noexcept { return a_.cov(); }
    const Matrix& cov_bb() const noexcept { return b_.cov(); }
    const Matrix& cov_ab() const noexcept { return cov_ab_; }

    Vector full_mean() const {
        Vector m(a_.dim() + b_.dim());
        m << a_.mean(), b_.mean();
        return m;
    }

    Matrix full_cov() const {
        const auto da = a_.dim(), db = b_.dim();
        Matrix c(da + db, da + db);
        c.topLeftCorner(da, da) = a_.cov();
        c.bottomRightCorner(db, db) = b_.cov();
        c.topRightCorner(da, db) = cov_ab_;
        c.bottomLeftCorner(db, da) = cov_ab_.transpose();
        return c;
    }

private:
    GaussianBelief a_;
    GaussianBelief b_;
    Matrix cov_ab_;
};

using VectorFn = std::function<Vector(const Vector&, TimeIndex)>;
using JacobianFn = std::function<Matrix(const Vector&, TimeIndex)>;

/// A function x -> h(x, t) with an optional analytic Jacobian.
struct Mapping {
    VectorFn func;
    std::optional<JacobianFn> jacobian;
};

/// x_t = f(x_{t-1}, t) + w_t,  z_t = g(x_t, t) + v_t,  w ~ N(0, Q), v ~ N(0, R), x_0 ~ prior.
struct SystemModel {
    Eigen::Index dim_x = 0;
    Eigen::Index dim_z = 0;
    VectorFn transition;
    VectorFn measurement;
    Matrix Q;
    Matrix R;
    GaussianBelief prior;
    std::optional<JacobianFn> jacobian_f;
    std::optional<JacobianFn> jacobian_g;
    /// Both maps are affine; required by the exact linear backend.
    bool affine = false;

    Mapping transition_mapping() const { return {transition, jacobian_f}; }
    Mapping measurement_mapping() const { return {measurement, jacobian_g}; }

    void validate() const {
        if (dim_x <= 0 || dim_z <= 0) throw ConfigError("SystemModel: dimensions must be positive");
        if (!transition || !measurement) throw ConfigError("SystemModel: missing f or g");
        if (Q.rows() != dim_x || Q.cols() != dim_x) throw ConfigError("SystemModel: Q has wrong shape");
        if (R.rows() != dim_z || R.cols() != dim_z) throw ConfigError("SystemModel: R has wrong shape");
        if (!is_symmetric(Q) || !is_psd(Q)) throw ConfigError("SystemModel: Q is not symmetric PSD");
        if (!is_symmetric(R) || !is_psd(R)) throw ConfigError("SystemModel: R is not symmetric PSD");
        if (prior.dim() != dim_x) throw ConfigError("SystemModel: prior dimension differs from dim_x");
    }
};

/// Output of a forward (and optionally backward) pass over t = 0..T.
struct EstimationResult {
    std::vector<GaussianBelief> predicted;       ///< p(x_t | z_{1:t-1}), t = 1..T at index t-1
    std::vector<GaussianBelief> filtered;        ///< p(x_t | z_{1:t}), t = 0..T
    std::optional<std::vector<GaussianBelief>> smoothed;  ///< p(x_t | z_{1:T}), t = 0..T
    std::vector<Matrix> cross_covariances;       ///< cov(x_{t-1}, x_t | z_{1:t-1}), index t-1
    std::vector<Matrix> gains;                   ///< J_t, t = 0..T-1
    /// cov(x_{t-1} | x_t) under each transition joint, index t-1. Optional.
    std::vector<Matrix> backward_covariances;
    std::vector<GaussianBelief> predicted_meas;  ///< p(z_t | z_{1:t-1}), index t-1
    /// x_t marginal of the measurement joint that was conditioned on z_t, index t-1.
    /// Bit-identical to `predicted` for deterministic backends.
    std::vector<GaussianBelief> conditioned_marginals;
    /// Standardized gap between the x_t marginals of the two joints at step t (index t-1).
    std::vector<double> marginal_discrepancy;

    std::size_t horizon() const noexcept { return filtered.empty() ? 0 : filtered.size() - 1; }
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// p(a | b = observed) for a jointly Gaussian (a, b).
inline GaussianBelief condition_joint(const JointGaussian& joint, const Vector& observed_b,
                                      std::optional<TimeIndex> t = std::nullopt) {
    if (observed_b.size() != joint.b().dim())
        throw ConfigError("condition_joint: observation has wrong dimension", t);
    CholeskyFactor chol;
    try {
        chol = safe_cholesky(joint.cov_bb(), t);
    } catch (const NonPsdError&) {
        throw SingularCovarianceError("condition_joint: cov_bb cannot be factorized", t);
    }
    // K^T = cov_bb^{-1} cov_ba
    const Matrix gain_t = cholesky_solve(chol.lower, joint.cov_ab().transpose());
    const Vector innovation = observed_b - joint.mean_b();
    Vector mean = joint.mean_a() + gain_t.transpose() * innovation;
    Matrix cov = joint.cov_aa() - joint.cov_ab() * gain_t;
    return {std::move(mean), cov, t};
}

/// log N(x | mean, cov) including the normalization constant.
inline double gaussian_log_density(const GaussianBelief& belief, const Vector& x) {
    if (x.size() != belief.dim()) throw ConfigError("gaussian_log_density: dimension mismatch");
    const CholeskyFactor chol = safe_cholesky(belief.cov());
    const Vector diff = x - belief.mean();
    const Vector white = chol.lower.triangularView<Eigen::Lower>().solve(diff);
    const double log_det = 2.0 * chol.lower.diagonal().array().log().sum();
    const double d = static_cast<double>(belief.dim());
    return -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det + white.squaredNorm());
}

}  // namespace estim
