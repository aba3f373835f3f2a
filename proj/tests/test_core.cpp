#include "estim/core.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace estim;
using estim::testing::random_spd;

namespace {

Matrix m11(double v) { return Matrix::Constant(1, 1, v); }
Vector v1(double v) { return Vector::Constant(1, v); }

JointGaussian scalar_joint(double aa, double bb, double ab) {
    return {GaussianBelief::scalar(0.0, aa), GaussianBelief::scalar(0.0, bb), m11(ab)};
}

}  // namespace

TEST(ConditionJoint, HandEvaluatedScalarCase) {
    const auto post = condition_joint(scalar_joint(6.0, 34.0, -12.0), v1(2.0));
    EXPECT_NEAR(post.mean()(0), -12.0 / 17.0, 1e-12);
    EXPECT_NEAR(post.cov()(0, 0), 6.0 - 144.0 / 34.0, 1e-12);
}

TEST(ConditionJoint, AgreesWithMonteCarloConditional) {
    Matrix cov(2, 2);
    cov << 6.0, -12.0, -12.0, 34.0;
    const auto mc = estim::testing::monte_carlo_conditional(cov, Vector::Zero(2), 2.0, 0.1, 1'000'000, 11);
    ASSERT_GT(mc.accepted, 5000u);
    const auto post = condition_joint(scalar_joint(6.0, 34.0, -12.0), v1(2.0));
    const double se_mean = std::sqrt(mc.var / static_cast<double>(mc.accepted));
    const double se_var = mc.var * std::sqrt(2.0 / static_cast<double>(mc.accepted));
    EXPECT_NEAR(post.mean()(0), mc.mean, 3.0 * se_mean);
    EXPECT_NEAR(post.cov()(0, 0), mc.var, 3.0 * se_var);
}

TEST(ConditionJoint, RandomTwoDimensionalJointsMatchMonteCarlo) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        const Matrix cov = random_spd(2, rng, 0.3);
        const Vector mean = estim::testing::random_vector(2, rng);
        const double observed = mean(1) + 0.5 * std::sqrt(cov(1, 1));
        const double radius = 0.02 * std::sqrt(cov(1, 1));
        const auto mc = estim::testing::monte_carlo_conditional(cov, mean, observed, radius, 1'000'000,
                                                                100 + trial);
        const auto joint = JointGaussian::from_full(mean, cov, 1);
        const auto post = condition_joint(joint, v1(observed));
        const double se_mean = std::sqrt(mc.var / static_cast<double>(mc.accepted));
        const double se_var = mc.var * std::sqrt(2.0 / static_cast<double>(mc.accepted));
        EXPECT_NEAR(post.mean()(0), mc.mean, 3.0 * se_mean) << "trial " << trial;
        EXPECT_NEAR(post.cov()(0, 0), mc.var, 3.0 * se_var) << "trial " << trial;
    }
}

TEST(ConditionJoint, IndependentBlocksAreUnchanged) {
    const auto post = condition_joint(scalar_joint(3.0, 7.0, 0.0), v1(123.0));
    EXPECT_EQ(post.mean()(0), 0.0);
    EXPECT_EQ(post.cov()(0, 0), 3.0);
}

TEST(ConditionJoint, ZeroInnovationKeepsMeanButShrinksCovariance) {
    const JointGaussian joint{GaussianBelief::scalar(1.5, 6.0), GaussianBelief::scalar(-3.0, 34.0), m11(-12.0)};
    const auto post = condition_joint(joint, v1(-3.0));
    EXPECT_EQ(post.mean()(0), 1.5);
    EXPECT_NEAR(post.cov()(0, 0), 6.0 - 144.0 / 34.0, 1e-12);
}

TEST(ConditionJoint, UnfactorizableObservationCovarianceReportsTimeStep) {
    // Passes the relative PSD tolerance but stays indefinite beyond the largest jitter.
    Matrix bb(2, 2);
    bb << 1e6, 0.0, 0.0, -1e-3;
    const JointGaussian joint{GaussianBelief::scalar(0.0, 1.0), GaussianBelief(Vector::Zero(2), bb),
                              Matrix::Zero(1, 2)};
    try {
        condition_joint(joint, Vector::Zero(2), 7);
        FAIL() << "expected SingularCovarianceError";
    } catch (const SingularCovarianceError& e) {
        ASSERT_TRUE(e.time().has_value());
        EXPECT_EQ(*e.time(), 7);
    }
}

TEST(ConditionJoint, NeverIncreasesMarginalVariances) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index da = 1 + trial % 3, db = 1 + (trial / 3) % 3;
        const Matrix cov = random_spd(da + db, rng, 1e-3);
        const Vector mean = estim::testing::random_vector(da + db, rng);
        const auto joint = JointGaussian::from_full(mean, cov, da);
        const auto post = condition_joint(joint, estim::testing::random_vector(db, rng, 3.0));
        for (Eigen::Index i = 0; i < da; ++i) EXPECT_LE(post.cov()(i, i), joint.cov_aa()(i, i) + 1e-9);
        EXPECT_TRUE(is_symmetric(post.cov()));
        EXPECT_TRUE(is_psd(post.cov()));
    }
}

TEST(GaussianLogDensity, StandardCases) {
    EXPECT_NEAR(gaussian_log_density(GaussianBelief::scalar(0, 1), v1(0.0)), -0.9189385332046727, 1e-12);
    EXPECT_NEAR(gaussian_log_density(GaussianBelief::scalar(0, 5), v1(0.0)), -1.723657489421723, 1e-12);
    const GaussianBelief iso(Vector::Zero(2), Matrix::Identity(2, 2));
    EXPECT_NEAR(gaussian_log_density(iso, Vector::Ones(2)), -std::log(2.0 * std::numbers::pi) - 1.0, 1e-12);
}

TEST(GaussianLogDensity, IntegratesToOne) {
    const GaussianBelief b = GaussianBelief::scalar(1.3, 2.7);
    const double lo = 1.3 - 12.0 * std::sqrt(2.7), hi = 1.3 + 12.0 * std::sqrt(2.7);
    const int n = 20000;
    const double h = (hi - lo) / n;
    double total = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        total += w * std::exp(gaussian_log_density(b, v1(lo + i * h)));
    }
    total *= h;
    EXPECT_GE(total, 0.999);
    EXPECT_LE(total, 1.001);
}

TEST(SafeCholesky, IdentityNeedsNoJitter) {
    const auto f = safe_cholesky(Matrix::Identity(3, 3));
    EXPECT_EQ(f.jitter, 0.0);
    EXPECT_TRUE(f.lower.isApprox(Matrix::Identity(3, 3)));
}

TEST(SafeCholesky, NearSingularReproducesInput) {
    Matrix a(2, 2);
    a << 4.0, 2.0, 2.0, 1.0000000001;
    const auto f = safe_cholesky(a);
    EXPECT_LE(f.jitter, 1e-8);
    const Matrix rebuilt = f.lower * f.lower.transpose();
    EXPECT_LE((rebuilt - a).cwiseAbs().maxCoeff(), f.jitter + 1e-12);
}

TEST(SafeCholesky, SingularMatrixUsesJitter) {
    Matrix a(2, 2);
    a << 1.0, 1.0, 1.0, 1.0;
    const auto f = safe_cholesky(a);
    EXPECT_GT(f.jitter, 0.0);
    EXPECT_LE(f.jitter, kMaxJitter);
    const Matrix expected = a + f.jitter * Matrix::Identity(2, 2);
    EXPECT_LE((f.lower * f.lower.transpose() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SafeCholesky, IndefiniteMatrixThrows) {
    Matrix a(2, 2);
    a << 1.0, 2.0, 2.0, 1.0;
    EXPECT_THROW(safe_cholesky(a), NonPsdError);
}

TEST(SolvePsd, IdentityAndDiagonal) {
    std::mt19937_64 rng(3);
    const Matrix b = estim::testing::random_matrix(3, 2, rng);
    EXPECT_TRUE(solve_psd(Matrix::Identity(3, 3), b).isApprox(b));
    Matrix d(2, 2);
    d << 2.0, 0.0, 0.0, 4.0;
    const Matrix x = solve_psd(d, Matrix::Ones(2, 1));
    EXPECT_NEAR(x(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(x(1, 0), 0.25, 1e-15);
}

TEST(SolvePsd, RankDeficientFallsBackToPseudoInverse) {
    Matrix a(2, 2);
    a << 1.0, 1.0, 1.0, 1.0;
    const Matrix rhs = Matrix::Constant(2, 1, 2.0);
    const Matrix x = solve_psd(a, rhs);
    EXPECT_LE((a * x - rhs).cwiseAbs().maxCoeff(), 1e-10);
    // Minimum-norm solution lies in the row space span{(1, 1)}.
    EXPECT_NEAR(x(0, 0), x(1, 0), 1e-12);
    EXPECT_NEAR(x(0, 0), 1.0, 1e-12);
}

TEST(SolvePsd, MatchesExplicitInverseOnRandomSpd) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const Matrix a = random_spd(4, rng);
        const Matrix b = estim::testing::random_matrix(4, 3, rng);
        EXPECT_LE((solve_psd(a, b) - a.inverse() * b).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(GaussianBelief, SymmetrizesAndValidates) {
    Matrix c(2, 2);
    c << 2.0, 1.0, 1.0 + 1e-12, 3.0;
    const GaussianBelief b(Vector::Zero(2), c);
    EXPECT_EQ(b.cov()(0, 1), b.cov()(1, 0));
    EXPECT_THROW(GaussianBelief(Vector::Zero(3), c), ConfigError);
    Matrix neg(1, 1);
    neg << -1.0;
    EXPECT_THROW(GaussianBelief(Vector::Zero(1), neg), NonPsdError);
    Matrix nan(1, 1);
    nan << std::nan("");
    EXPECT_THROW(GaussianBelief(Vector::Zero(1), nan), NonFiniteError);
}

TEST(JointGaussian, RejectsIndefiniteAssembly) {
    // Marginals are fine but |cov_ab| exceeds sqrt(aa * bb).
    EXPECT_THROW(scalar_joint(1.0, 1.0, 2.0), NonPsdError);
}

TEST(JointGaussian, FromFullRoundTrips) {
    std::mt19937_64 rng(21);
    const Matrix cov = random_spd(5, rng);
    const Vector mean = estim::testing::random_vector(5, rng);
    const auto j = JointGaussian::from_full(mean, cov, 2);
    EXPECT_EQ(j.full_mean(), mean);
    EXPECT_LE((j.full_cov() - 0.5 * (cov + cov.transpose())).cwiseAbs().maxCoeff(), 0.0);
}
