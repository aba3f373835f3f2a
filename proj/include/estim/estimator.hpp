#pragma once

// Generic Gaussian filter and RTS smoother. Any moment source that returns
// Gaussian approximations of p(x_{t-1}, x_t | z_{1:t-1}) and
// p(x_t, z_t | z_{1:t-1}) yields a complete filter/smoother.

#include "estim/backends.hpp"
#include "estim/core.hpp"
#include "estim/gibbs.hpp"
#include "estim/rng.hpp"

#include <concepts>
#include <cstdint>
#include <span>

namespace estim {

/// Which of the two joints a moment source is asked for.
enum class JointKind : std::uint64_t { transition = 0, measurement = 1 };

template <typename S>
concept MomentSource = requires(S& source, const GaussianBelief& input, const Mapping& mapping,
                                const Matrix& noise, TimeIndex t, JointKind kind) {
    { source.joint(input, mapping, noise, t, kind) } -> std::same_as<JointGaussian>;
};

/// KF / EKF / UKF / CKF.
struct DeterministicSource {
    MomentBackendConfig config;

    JointGaussian joint(const GaussianBelief& input, const Mapping& mapping, const Matrix& noise, TimeIndex t,
                        JointKind) const {
        return propagate_joint(config, input, mapping, noise, t);
    }
};

/// Gibbs-sampled joints. Every (t, kind) gets its own stream derived from
/// (config.seed, run).
struct GibbsSource {
    GibbsConfig config;
    std::uint64_t run = 0;

    JointGaussian joint(const GaussianBelief& input, const Mapping& mapping, const Matrix& noise, TimeIndex t,
                        JointKind kind) const {
        Rng rng = make_rng(config.seed, {kGibbsStream, run, static_cast<std::uint64_t>(t),
                                         static_cast<std::uint64_t>(kind)});
        return gibbs_joint_moments(input, mapping, noise, t, config, rng);
    }
};

/// Largest standardized gap between two beliefs over the same variable:
/// |dmu_i| / sqrt(C_ii) and |dC_ij| / sqrt(C_ii C_jj), with C from `reference`.
inline double standardized_gap(const GaussianBelief& reference, const GaussianBelief& other) {
    const Vector sd = reference.cov().diagonal().cwiseMax(0.0).cwiseSqrt();
    double gap = 0.0;
    for (Eigen::Index i = 0; i < reference.dim(); ++i) {
        const double s = sd(i) > 0.0 ? sd(i) : 1.0;
        gap = std::max(gap, std::abs(reference.mean()(i) - other.mean()(i)) / s);
        for (Eigen::Index j = 0; j < reference.dim(); ++j) {
            const double sj = sd(j) > 0.0 ? sd(j) : 1.0;
            gap = std::max(gap, std::abs(reference.cov()(i, j) - other.cov()(i, j)) / (s * sj));
        }
    }
    return gap;
}

/// J = C P^-1 for the cross-covariance C = cov(x_{t-1}, x_t) and predicted covariance P.
inline Matrix smoother_gain(const Matrix& cross, const Matrix& predicted_cov) {
    return solve_psd(predicted_cov, cross.transpose()).transpose();
}

/// Forward pass over z_1..z_T. filtered[0] is the prior.
template <MomentSource Source>
EstimationResult filter(const SystemModel& model, std::span<const Vector> measurements, Source& source) {
    model.validate();
    EstimationResult res;
    const auto steps = measurements.size();
    res.filtered.reserve(steps + 1);
    res.predicted.reserve(steps);
    res.predicted_meas.reserve(steps);
    res.filtered.push_back(model.prior);

    const Mapping f = model.transition_mapping();
    const Mapping g = model.measurement_mapping();
    for (std::size_t k = 0; k < steps; ++k) {
        const auto t = static_cast<TimeIndex>(k + 1);
        const Vector& z = measurements[k];
        if (z.size() != model.dim_z) throw ConfigError("filter: measurement has wrong dimension", t);

        const JointGaussian state_joint = source.joint(res.filtered.back(), f, model.Q, t, JointKind::transition);
        const GaussianBelief& predicted = state_joint.b();
        const JointGaussian meas_joint = source.joint(predicted, g, model.R, t, JointKind::measurement);

        res.filtered.push_back(condition_joint(meas_joint, z, t));
        res.predicted.push_back(predicted);
        res.predicted_meas.push_back(meas_joint.b());
        res.conditioned_marginals.push_back(meas_joint.a());
        res.cross_covariances.push_back(state_joint.cov_ab());
        res.gains.push_back(smoother_gain(state_joint.cov_ab(), predicted.cov()));
        res.backward_covariances.push_back(
            symmetrized(state_joint.cov_aa() - res.gains.back() * state_joint.cov_ab().transpose()));
        res.marginal_discrepancy.push_back(standardized_gap(predicted, meas_joint.a()));
    }
    return res;
}

template <MomentSource Source>
EstimationResult filter(const SystemModel& model, const std::vector<Vector>& measurements, Source&& source) {
    return filter(model, std::span<const Vector>(measurements), source);
}

/// Backward RTS pass using only stored filter moments. The covariance update
/// P_filt + J (P_next - P_pred) J^T is evaluated as cov(x_{t-1} | x_t) + J P_next J^T
/// with the conditional taken from the transition joint, which keeps it PSD when
/// that joint's x_{t-1} block is itself an estimate (Gibbs).
inline EstimationResult smooth(EstimationResult res) {
    const std::size_t steps = res.horizon();
    if (res.filtered.empty()) throw ConfigError("smooth: empty filter result");
    if (res.predicted.size() != steps || res.cross_covariances.size() != steps)
        throw ConfigError("smooth: filter result lacks predicted beliefs or cross-covariances");
    if (res.gains.size() != steps) {
        res.gains.clear();
        for (std::size_t k = 0; k < steps; ++k)
            res.gains.push_back(smoother_gain(res.cross_covariances[k], res.predicted[k].cov()));
        res.backward_covariances.clear();
    }
    // Without stored backward covariances, P_filt - J P_pred J^T stands in for them.
    if (res.backward_covariances.size() != steps) {
        res.backward_covariances.clear();
        for (std::size_t k = 0; k < steps; ++k)
            res.backward_covariances.push_back(
                symmetrized(res.filtered[k].cov() - res.gains[k] * res.predicted[k].cov() * res.gains[k].transpose()));
    }

    std::vector<GaussianBelief> smoothed(steps + 1);
    smoothed[steps] = res.filtered[steps];
    for (std::size_t t = steps; t >= 1; --t) {
        const Matrix& gain = res.gains[t - 1];
        const GaussianBelief& filt = res.filtered[t - 1];
        const GaussianBelief& pred = res.predicted[t - 1];
        const GaussianBelief& next = smoothed[t];
        Vector mean = filt.mean() + gain * (next.mean() - pred.mean());
        // P_filt + J (P_next - P_pred) J^T, written as cov(x_{t-1} | x_t) + J P_next J^T.
        Matrix cov = res.backward_covariances[t - 1] + gain * next.cov() * gain.transpose();
        smoothed[t - 1] = GaussianBelief(std::move(mean), cov, static_cast<TimeIndex>(t - 1));
    }
    res.smoothed = std::move(smoothed);
    return res;
}

template <MomentSource Source>
EstimationResult filter_and_smooth(const SystemModel& model, const std::vector<Vector>& measurements,
                                   Source&& source) {
    return smooth(filter(model, std::span<const Vector>(measurements), source));
}

}  // namespace estim
