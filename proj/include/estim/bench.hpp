#pragma once

// Benchmark systems, RMSE / NLL metrics and the multi-run experiment protocol.

#include "estim/backends.hpp"
#include "estim/core.hpp"
#include "estim/estimator.hpp"
#include "estim/gibbs.hpp"
#include "estim/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace estim {

// ---------------------------------------------------------------------------
// Benchmark systems
// ---------------------------------------------------------------------------

/// x_t = x_{t-1} + w_t, z_t = -2 x_t + v_t, w ~ N(0,1), v ~ N(0,10), x_0 ~ N(0,5).
inline SystemModel linear_benchmark_model() {
    SystemModel m;
    m.dim_x = 1;
    m.dim_z = 1;
    m.transition = [](const Vector& x, TimeIndex) -> Vector { return x; };
    m.measurement = [](const Vector& x, TimeIndex) -> Vector { return -2.0 * x; };
    m.jacobian_f = [](const Vector&, TimeIndex) -> Matrix { return Matrix::Constant(1, 1, 1.0); };
    m.jacobian_g = [](const Vector&, TimeIndex) -> Matrix { return Matrix::Constant(1, 1, -2.0); };
    m.Q = Matrix::Constant(1, 1, 1.0);
    m.R = Matrix::Constant(1, 1, 10.0);
    m.prior = GaussianBelief::scalar(0.0, 5.0);
    m.affine = true;
    return m;
}

/// Univariate nonstationary growth model:
/// x_t = x/2 + 25x/(1+x^2) + 8 cos(1.2 (t-1)) + w_t, z_t = x_t^2/20 + v_t,
/// with the same noise and prior as the linear benchmark.
inline SystemModel ungm_benchmark_model() {
    SystemModel m;
    m.dim_x = 1;
    m.dim_z = 1;
    m.transition = [](const Vector& x, TimeIndex t) -> Vector {
        const double v = x(0);
        return Vector::Constant(1, v / 2.0 + 25.0 * v / (1.0 + v * v) + 8.0 * std::cos(1.2 * (t - 1)));
    };
    m.measurement = [](const Vector& x, TimeIndex) -> Vector { return Vector::Constant(1, x(0) * x(0) / 20.0); };
    m.jacobian_f = [](const Vector& x, TimeIndex) -> Matrix {
        const double v = x(0);
        const double den = 1.0 + v * v;
        return Matrix::Constant(1, 1, 0.5 + 25.0 * (1.0 - v * v) / (den * den));
    };
    m.jacobian_g = [](const Vector& x, TimeIndex) -> Matrix { return Matrix::Constant(1, 1, x(0) / 10.0); };
    m.Q = Matrix::Constant(1, 1, 1.0);
    m.R = Matrix::Constant(1, 1, 10.0);
    m.prior = GaussianBelief::scalar(0.0, 5.0);
    return m;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<Vector> states;        ///< x_0..x_T
    std::vector<Vector> measurements;  ///< z_1..z_T
    std::uint64_t seed = 0;
};

/// Square root of a PSD matrix that also handles exactly singular input.
inline Matrix psd_root(const Matrix& cov) {
    Eigen::LLT<Matrix> llt(symmetrized(cov));
    if (llt.info() == Eigen::Success) return llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(cov));
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

inline Trajectory simulate(const SystemModel& model, std::size_t horizon, std::uint64_t seed) {
    Rng rng(seed);
    Trajectory traj;
    traj.seed = seed;
    const Matrix prior_root = psd_root(model.prior.cov());
    const Matrix q_root = psd_root(model.Q);
    const Matrix r_root = psd_root(model.R);
    traj.states.push_back(sample_gaussian(model.prior.mean(), prior_root, rng));
    for (std::size_t k = 1; k <= horizon; ++k) {
        const auto t = static_cast<TimeIndex>(k);
        Vector x = sample_gaussian(model.transition(traj.states.back(), t), q_root, rng);
        Vector z = sample_gaussian(model.measurement(x, t), r_root, rng);
        if (!x.allFinite() || !z.allFinite()) throw NonFiniteError("simulate: non-finite model output", t);
        traj.states.push_back(std::move(x));
        traj.measurements.push_back(std::move(z));
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// sqrt(1/(T+1) sum_t |x_t - mu_t|^2) over t = 0..T.
inline double rmse(const std::vector<Vector>& truth, const std::vector<GaussianBelief>& beliefs) {
    if (truth.size() != beliefs.size() || truth.empty()) throw ConfigError("rmse: sequence lengths differ");
    double acc = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) acc += (truth[t] - beliefs[t].mean()).squaredNorm();
    return std::sqrt(acc / static_cast<double>(truth.size()));
}

/// -1/(T+1) sum_t log N(x_t | mu_t, Sigma_t) over t = 0..T.
inline double nll(const std::vector<Vector>& truth, const std::vector<GaussianBelief>& beliefs) {
    if (truth.size() != beliefs.size() || truth.empty()) throw ConfigError("nll: sequence lengths differ");
    double acc = 0.0;
    for (std::size_t t = 0; t < truth.size(); ++t) acc += gaussian_log_density(beliefs[t], truth[t]);
    return -acc / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------
// Experiment protocol
// ---------------------------------------------------------------------------

enum class Method { kf, ekf, ukf, ckf, gibbs };

inline constexpr std::string_view kMethodNames[] = {"kf", "ekf", "ukf", "ckf", "gibbs"};

inline std::string_view to_string(Method m) { return kMethodNames[static_cast<int>(m)]; }

inline std::optional<Method> parse_method(std::string_view name) {
    for (int i = 0; i < 5; ++i)
        if (kMethodNames[i] == name) return static_cast<Method>(i);
    return std::nullopt;
}

/// Display names for the filter and the smoother built from a method.
inline std::string_view filter_label(Method m) {
    constexpr std::string_view names[] = {"KF", "EKF", "UKF", "CKF", "Gibbs-filter"};
    return names[static_cast<int>(m)];
}

inline std::string_view smoother_label(Method m) {
    constexpr std::string_view names[] = {"KS", "EKS", "URTSS", "CKS", "Gibbs-RTSS"};
    return names[static_cast<int>(m)];
}

struct ExperimentSettings {
    std::vector<Method> methods;
    std::size_t runs = 100;
    std::size_t horizon = 50;
    std::uint64_t seed = 42;
    GibbsConfig gibbs;                ///< seed field ignored; streams derive from `seed`
    MomentBackendConfig unscented;    ///< ukf_* parameters
    double ekf_fd_step = 1e-6;
    unsigned threads = 0;             ///< 0: ESTIM_THREADS or hardware concurrency
};

struct RunMetrics {
    double rmse_filter = 0.0;
    double nll_filter = 0.0;
    double rmse_smooth = 0.0;
    double nll_smooth = 0.0;
    bool failed = false;
    std::string error;
};

struct Aggregate {
    double mean = 0.0;
    double se = 0.0;  ///< sample standard deviation / sqrt(n)
};

inline Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    const double n = static_cast<double>(values.size());
    for (double v : values) a.mean += v;
    a.mean /= n;
    if (values.size() < 2) return a;
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    return a;
}

struct ExperimentReport {
    Method method = Method::kf;
    std::vector<RunMetrics> per_run;
    Aggregate rmse_filter, nll_filter, rmse_smooth, nll_smooth;
    std::size_t failed_runs = 0;

    std::size_t successful_runs() const { return per_run.size() - failed_runs; }

    /// Recomputes aggregates over the successful runs.
    void finalize() {
        std::vector<double> rf, nf, rs, ns;
        failed_runs = 0;
        for (const auto& r : per_run) {
            if (r.failed) {
                ++failed_runs;
                continue;
            }
            rf.push_back(r.rmse_filter);
            nf.push_back(r.nll_filter);
            rs.push_back(r.rmse_smooth);
            ns.push_back(r.nll_smooth);
        }
        rmse_filter = aggregate(rf);
        nll_filter = aggregate(nf);
        rmse_smooth = aggregate(rs);
        nll_smooth = aggregate(ns);
    }
};

/// Moment source configured for one method and run.
inline EstimationResult estimate(const SystemModel& model, const std::vector<Vector>& measurements, Method method,
                                 const ExperimentSettings& settings, std::uint64_t run) {
    if (method == Method::gibbs) {
        GibbsConfig cfg = settings.gibbs;
        cfg.seed = settings.seed;
        return filter_and_smooth(model, measurements, GibbsSource{cfg, run});
    }
    MomentBackendConfig cfg = settings.unscented;
    cfg.ekf_fd_step = settings.ekf_fd_step;
    switch (method) {
        case Method::kf:
            if (!model.affine) throw ConfigError("kf requires an affine system; use ekf, ukf, ckf or gibbs");
            cfg.kind = BackendKind::linear;
            break;
        case Method::ekf: cfg.kind = BackendKind::ekf; break;
        case Method::ukf: cfg.kind = BackendKind::ukf; break;
        case Method::ckf: cfg.kind = BackendKind::ckf; break;
        case Method::gibbs: break;
    }
    return filter_and_smooth(model, measurements, DeterministicSource{cfg});
}

inline Trajectory simulate_run(const SystemModel& model, const ExperimentSettings& settings, std::uint64_t run) {
    return simulate(model, settings.horizon, derive_seed(settings.seed, {kTrajectoryStream, run}));
}

inline RunMetrics evaluate(const Trajectory& traj, const EstimationResult& res) {
    RunMetrics m;
    m.rmse_filter = rmse(traj.states, res.filtered);
    m.nll_filter = nll(traj.states, res.filtered);
    m.rmse_smooth = rmse(traj.states, *res.smoothed);
    m.nll_smooth = nll(traj.states, *res.smoothed);
    if (!std::isfinite(m.rmse_filter) || !std::isfinite(m.nll_filter) || !std::isfinite(m.rmse_smooth) ||
        !std::isfinite(m.nll_smooth)) {
        m.failed = true;
        m.error = "non-finite metric";
    }
    return m;
}

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("ESTIM_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs every method on the same simulated trajectories. Failed runs are
/// recorded and excluded from the aggregates. Results do not depend on the
/// thread count.
inline std::vector<ExperimentReport> run_experiment(const SystemModel& model, const ExperimentSettings& settings) {
    model.validate();
    if (settings.methods.empty()) return {};
    for (Method m : settings.methods)
        if (m == Method::kf && !model.affine)
            throw ConfigError("kf requires an affine system; use ekf, ukf, ckf or gibbs");

    std::vector<ExperimentReport> reports(settings.methods.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        reports[i].method = settings.methods[i];
        reports[i].per_run.resize(settings.runs);
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t run = next++; run < settings.runs; run = next++) {
            Trajectory traj;
            try {
                traj = simulate_run(model, settings, run);
            } catch (const std::exception& e) {
                for (auto& rep : reports) {
                    rep.per_run[run].failed = true;
                    rep.per_run[run].error = std::string("simulation: ") + e.what();
                }
                continue;
            }
            for (std::size_t i = 0; i < reports.size(); ++i) {
                RunMetrics& out = reports[i].per_run[run];
                try {
                    out = evaluate(traj, estimate(model, traj.measurements, settings.methods[i], settings, run));
                } catch (const std::exception& e) {
                    out = RunMetrics{};
                    out.failed = true;
                    out.error = e.what();
                }
            }
        }
    };

    const unsigned threads = std::min<unsigned>(resolve_threads(settings.threads),
                                                static_cast<unsigned>(std::max<std::size_t>(settings.runs, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    }
    for (auto& r : reports) r.finalize();
    return reports;
}

}  // namespace estim
