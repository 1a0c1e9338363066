#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "gpcal/optimize.hpp"
#include "oracles.hpp"

using namespace gpcal;

namespace {

struct Data {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

Data se_prior_sample(std::uint64_t seed, Eigen::Index n = 60) {
    std::mt19937_64 rng(seed);
    Data d{oracle::uniform_matrix(rng, n, 2), {}};
    d.y = oracle::sample_gp(rng, d.X, KernelSpec{KernelFamily::SquaredExponential, {1.0, 0.3}}, 0.1);
    return d;
}

OptimizeConfig quick(int restarts = 3, std::uint64_t seed = 1) {
    OptimizeConfig c;
    c.restarts = restarts;
    c.init_seed = seed;
    return c;
}

} // namespace

TEST(Optimize, RecoversKnownSquaredExponentialHyperparameters) {
    const auto d = se_prior_sample(101);
    const auto res = optimize_hyperparameters(d.X, d.y, KernelFamily::SquaredExponential, quick(5));
    const Eigen::Vector3d truth(std::log(1.0), std::log(0.3), std::log(0.1));
    bool any = false;
    for (const auto &theta : res.final_log_params) any = any || (theta - truth).lpNorm<Eigen::Infinity>() <= 0.5;
    EXPECT_TRUE(any);
    const auto lp = res.best_kernel.log_params();
    EXPECT_NEAR(lp[1], truth[1], 0.5);
    EXPECT_NEAR(std::log(res.best_noise_std), truth[2], 0.5);
}

TEST(Optimize, ConstantTargetsConverge) {
    std::mt19937_64 rng(102);
    const auto X = oracle::uniform_matrix(rng, 20, 2);
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(20, 3.0);
    auto cfg = quick(2);
    const auto res = optimize_hyperparameters(X, y, KernelFamily::SquaredExponential, cfg);
    const auto r = static_cast<std::size_t>(res.best_restart);
    EXPECT_TRUE(res.converged[r]);
    EXPECT_LT(res.final_gradient[r].lpNorm<Eigen::Infinity>(), cfg.grad_tol);
    EXPECT_LT(res.best_kernel.params().signal_std, 1e-3);
    EXPECT_LT(res.best_noise_std, 1e-3);
}

TEST(Optimize, BestIsNoWorseThanAnyStart) {
    for (auto f : kAllFamilies) {
        const auto d = se_prior_sample(103, 40);
        const auto res = optimize_hyperparameters(d.X, d.y, f, quick(4));
        for (double f0 : res.initial_nlml) EXPECT_LE(res.best_nlml, f0);
        for (double fr : res.per_restart_nlml) EXPECT_LE(res.best_nlml, fr);
    }
}

TEST(Optimize, GradientSmallAtOptimum) {
    const auto d = se_prior_sample(104, 50);
    for (auto f : kAllFamilies) {
        const auto res = optimize_hyperparameters(d.X, d.y, f, quick(3));
        const auto r = static_cast<std::size_t>(res.best_restart);
        const auto g = log_marginal_gradient(d.X, d.y, res.best_kernel, res.best_noise_std);
        EXPECT_LT(g.lpNorm<Eigen::Infinity>(), 1e-4) << family_name(f);
        EXPECT_TRUE(res.converged[r]) << family_name(f);
        EXPECT_NEAR(-res.best_nlml, log_marginal_likelihood(d.X, d.y, res.best_kernel, res.best_noise_std), 1e-9);
    }
}

TEST(Optimize, Deterministic) {
    const auto d = se_prior_sample(105, 40);
    const auto a = optimize_hyperparameters(d.X, d.y, KernelFamily::RationalQuadratic, quick(3, 9));
    const auto b = optimize_hyperparameters(d.X, d.y, KernelFamily::RationalQuadratic, quick(3, 9));
    EXPECT_EQ(a.best_nlml, b.best_nlml);
    EXPECT_EQ(a.best_restart, b.best_restart);
    EXPECT_EQ(a.per_restart_nlml, b.per_restart_nlml);
    EXPECT_EQ(a.iterations_used, b.iterations_used);
    EXPECT_EQ(a.converged, b.converged);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_EQ(a.best_kernel.log_params(), b.best_kernel.log_params());
}

TEST(Optimize, ThreadCountDoesNotChangeResult) {
    const auto d = se_prior_sample(106, 40);
    ::setenv("GPCAL_THREADS", "1", 1);
    const auto a = optimize_hyperparameters(d.X, d.y, KernelFamily::Matern52, quick(4));
    ::setenv("GPCAL_THREADS", "4", 1);
    const auto b = optimize_hyperparameters(d.X, d.y, KernelFamily::Matern52, quick(4));
    ::unsetenv("GPCAL_THREADS");
    EXPECT_EQ(a.per_restart_nlml, b.per_restart_nlml);
    EXPECT_EQ(a.best_restart, b.best_restart);
}

TEST(Optimize, TracesAreMonotone) {
    const auto d = se_prior_sample(107, 50);
    for (auto f : kAllFamilies) {
        const auto res = optimize_hyperparameters(d.X, d.y, f, quick(3));
        for (const auto &tr : res.trace) {
            ASSERT_FALSE(tr.empty());
            for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LE(tr[i], tr[i - 1]) << family_name(f);
        }
    }
}

TEST(Optimize, ConvergedRunsCarryCertificate) {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const auto d = se_prior_sample(110 + s, 30);
        for (auto f : kAllFamilies) {
            const auto cfg = quick(3, s);
            const auto res = optimize_hyperparameters(d.X, d.y, f, cfg);
            for (std::size_t r = 0; r < res.converged.size(); ++r) {
                if (res.converged[r]) {
                    EXPECT_LT(res.final_gradient[r].lpNorm<Eigen::Infinity>(), cfg.grad_tol);
                }
                EXPECT_LE(res.iterations_used[r], cfg.max_iters);
            }
        }
    }
}

TEST(Optimize, MoreRestartsNeverWorse) {
    const auto d = se_prior_sample(108, 40);
    double prev = std::numeric_limits<double>::infinity();
    std::vector<double> first;
    for (int r = 1; r <= 5; ++r) {
        const auto res = optimize_hyperparameters(d.X, d.y, KernelFamily::Exponential, quick(r, 77));
        EXPECT_LE(res.best_nlml, prev);
        prev = res.best_nlml;
        // Restart r starts from the same point whatever the total count.
        if (first.empty()) first = res.per_restart_nlml;
        EXPECT_EQ(res.per_restart_nlml.front(), first.front());
    }
}

TEST(Optimize, InitialPointsInsideConfiguredRanges) {
    OptimizeConfig cfg;
    for (int r = 0; r < 50; ++r) {
        const auto t = detail::initial_point(KernelFamily::RationalQuadratic, cfg, r);
        ASSERT_EQ(t.size(), 4);
        EXPECT_GE(t[0], cfg.init_signal.lo);
        EXPECT_LE(t[0], cfg.init_signal.hi);
        EXPECT_GE(t[1], cfg.init_length.lo);
        EXPECT_LE(t[1], cfg.init_length.hi);
        EXPECT_GE(t[2], cfg.init_alpha.lo);
        EXPECT_LE(t[2], cfg.init_alpha.hi);
        EXPECT_GE(t[3], cfg.init_noise.lo);
        EXPECT_LE(t[3], cfg.init_noise.hi);
    }
}

TEST(Optimize, InvalidConfigRejected) {
    const auto d = se_prior_sample(109, 10);
    auto bad = quick();
    bad.restarts = 0;
    EXPECT_THROW(optimize_hyperparameters(d.X, d.y, KernelFamily::Exponential, bad), ConfigError);
    bad = quick();
    bad.max_iters = 0;
    EXPECT_THROW(optimize_hyperparameters(d.X, d.y, KernelFamily::Exponential, bad), ConfigError);
    bad = quick();
    bad.grad_tol = 0.0;
    EXPECT_THROW(optimize_hyperparameters(d.X, d.y, KernelFamily::Exponential, bad), ConfigError);
}

TEST(Optimize, NonFiniteDataRejected) {
    auto d = se_prior_sample(109, 10);
    d.y[3] = NAN;
    EXPECT_THROW(optimize_hyperparameters(d.X, d.y, KernelFamily::Exponential, quick()), InvalidInput);
}

// Finite differences

TEST(FiniteDifference, AgreesWithAnalyticGradient) {
    std::mt19937_64 rng(120);
    for (auto f : kAllFamilies) {
        for (int t = 0; t < 5; ++t) {
            const auto X = oracle::uniform_matrix(rng, 10, 2);
            const auto k = oracle::random_kernel(rng, f, 0.3, 3.0);
            const Eigen::VectorXd y = oracle::sample_gp(rng, X, k, 0.2);
            const auto fd = finite_difference_gradient(X, y, k, 0.2, 1e-6);
            const auto g = log_marginal_gradient(X, y, k, 0.2);
            EXPECT_LE((g - fd).lpNorm<Eigen::Infinity>() / fd.lpNorm<Eigen::Infinity>(), 1e-5);
        }
    }
}

TEST(FiniteDifference, ErrorShrinksWithStep) {
    std::mt19937_64 rng(121);
    const auto X = oracle::uniform_matrix(rng, 10, 2);
    const KernelSpec k{KernelFamily::RationalQuadratic, {1.2, 0.4, 2.0}};
    const Eigen::VectorXd y = oracle::sample_gp(rng, X, k, 0.2);
    const auto g = log_marginal_gradient(X, y, k, 0.2);
    const double e4 = (finite_difference_gradient(X, y, k, 0.2, 1e-4) - g).norm();
    const double e5 = (finite_difference_gradient(X, y, k, 0.2, 1e-5) - g).norm();
    EXPECT_LT(e5, e4);
}

TEST(FiniteDifference, ExactOnQuadratic) {
    const Eigen::Vector3d c(1.0, -2.0, 0.5);
    auto quad = [&](const Eigen::VectorXd &x) { return 0.5 * x.squaredNorm() + c.dot(x) + 3.0; };
    const Eigen::VectorXd x = Eigen::Vector3d(0.25, 0.5, -1.0);
    const auto g = central_difference(quad, x, 1e-3);
    EXPECT_LE((g - (x + c)).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(FiniteDifference, NonPositiveStepRejected) {
    const auto d = se_prior_sample(122, 5);
    EXPECT_THROW(finite_difference_gradient(d.X, d.y, KernelSpec{KernelFamily::Exponential, {1, 1}}, 0.1, 0.0),
                 InvalidInput);
}
