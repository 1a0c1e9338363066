#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "gpcal/errors.hpp"
#include "gpcal/gp.hpp"
#include "gpcal/kernels.hpp"
#include "gpcal/parallel.hpp"

namespace gpcal {

/// Closed interval in log-space.
struct LogRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct OptimizeConfig {
    int restarts = 5;
    int max_iters = 200;
    double grad_tol = 1e-5;
    std::uint64_t init_seed = 0;
    // Initial log-parameters are drawn uniformly from these ranges.
    LogRange init_signal{std::log(0.1), std::log(2.0)};
    LogRange init_length{std::log(0.05), std::log(2.0)};
    LogRange init_alpha{std::log(0.5), std::log(5.0)};
    LogRange init_noise{std::log(0.01), std::log(0.5)};
    // Feasible box for every log-parameter. Keeps the objective bounded on degenerate data.
    LogRange bounds{std::log(1e-6), std::log(1e6)};
    int memory = 10;
    /// A run stops (unconverged) when three iterations lower the objective by less
    /// than this fraction of its magnitude...
    double stall_rel_decrease = 1e-10;
    /// ...or by less than this multiple of the objective's estimated round-off.
    double stall_round_off_factor = 10.0;

    void validate() const {
        if (restarts < 1) throw ConfigError("restarts must be >= 1");
        if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
        if (!(grad_tol > 0.0)) throw ConfigError("grad_tol must be > 0");
        if (memory < 1) throw ConfigError("memory must be >= 1");
        for (const auto &r : {init_signal, init_length, init_alpha, init_noise, bounds}) {
            if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) throw ConfigError("invalid log range");
        }
    }
};

struct OptimizeResult {
    KernelSpec best_kernel{KernelFamily::SquaredExponential, {}};
    double best_noise_std = 0.0;
    double best_nlml = std::numeric_limits<double>::infinity();
    int best_restart = -1;
    std::vector<double> per_restart_nlml;
    std::vector<double> initial_nlml;
    std::vector<int> iterations_used;
    std::vector<bool> converged;
    std::vector<bool> failed;
    /// Objective at every accepted iterate, per restart (first entry is the start point).
    std::vector<std::vector<double>> trace;
    /// Final log-parameter vector (kernel params then log noise) per restart.
    std::vector<Eigen::VectorXd> final_log_params;
    std::vector<Eigen::VectorXd> final_gradient;
};

/// Central differences of `f` at `theta`, one coordinate at a time.
template <typename F>
Eigen::VectorXd central_difference(const F &f, const Eigen::VectorXd &theta, double step) {
    if (!(step > 0.0)) throw InvalidInput("finite-difference step must be > 0");
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
        Eigen::VectorXd plus = theta, minus = theta;
        plus[p] += step;
        minus[p] -= step;
        g[p] = (f(plus) - f(minus)) / (2.0 * step);
    }
    return g;
}

/// Central differences of the log marginal likelihood over each log-parameter
/// (kernel params then log noise_std).
inline Eigen::VectorXd finite_difference_gradient(const Eigen::MatrixXd &X, const Eigen::VectorXd &y,
                                                  const KernelSpec &kernel, double noise_std, double step) {
    const auto lp = kernel.log_params();
    Eigen::VectorXd theta(static_cast<Eigen::Index>(lp.size() + 1));
    for (std::size_t i = 0; i < lp.size(); ++i) theta[static_cast<Eigen::Index>(i)] = lp[i];
    theta[theta.size() - 1] = std::log(noise_std);
    auto objective = [&](const Eigen::VectorXd &t) {
        const auto k = KernelSpec::from_log_params(kernel.family(), std::span<const double>(t.data(), t.size() - 1));
        return log_marginal_likelihood(X, y, k, std::exp(t[t.size() - 1]));
    };
    return central_difference(objective, theta, step);
}

namespace detail {

/// Negative log marginal likelihood and gradient over the packed log-parameter vector.
/// Returns nullopt when K_y cannot be factorized at this point.
struct NlmlObjective {
    const Eigen::MatrixXd &X;
    const Eigen::VectorXd &y;
    KernelFamily family;

    struct Value {
        double f;
        Eigen::VectorXd g;
        double round_off = 0.0;
    };

    std::optional<Value> operator()(const Eigen::VectorXd &theta) const {
        const auto np = static_cast<std::size_t>(num_params(family));
        try {
            const auto kernel = KernelSpec::from_log_params(family, std::span<const double>(theta.data(), np));
            auto r = lml_and_gradient(X, y, kernel, std::exp(theta[static_cast<Eigen::Index>(np)]));
            if (!std::isfinite(r.value) || !r.gradient.allFinite()) return std::nullopt;
            return Value{-r.value, -r.gradient, r.round_off};
        } catch (const NumericalFailure &) {
            return std::nullopt;
        } catch (const InvalidInput &) {
            return std::nullopt;
        }
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Uniform double in [0,1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Restart r's start point depends only on (seed, r), so restart prefixes are reproducible.
inline Eigen::VectorXd initial_point(KernelFamily family, const OptimizeConfig &cfg, int restart) {
    std::mt19937_64 rng(splitmix64(cfg.init_seed ^ splitmix64(static_cast<std::uint64_t>(restart) + 1)));
    std::vector<LogRange> ranges{cfg.init_signal, cfg.init_length};
    if (family == KernelFamily::RationalQuadratic) ranges.push_back(cfg.init_alpha);
    ranges.push_back(cfg.init_noise);
    Eigen::VectorXd theta(static_cast<Eigen::Index>(ranges.size()));
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        const double u = unit_uniform(rng);
        theta[static_cast<Eigen::Index>(i)] =
            std::clamp(ranges[i].lo + u * (ranges[i].hi - ranges[i].lo), cfg.bounds.lo, cfg.bounds.hi);
    }
    return theta;
}

struct Box {
    double lo, hi;

    [[nodiscard]] Eigen::VectorXd clamp(const Eigen::VectorXd &x) const {
        return x.unaryExpr([&](double v) { return std::clamp(v, lo, hi); });
    }

    /// Gradient with components pinned at an active bound zeroed.
    [[nodiscard]] Eigen::VectorXd projected(const Eigen::VectorXd &x, const Eigen::VectorXd &g) const {
        Eigen::VectorXd pg = g;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if ((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0)) pg[i] = 0.0;
        }
        return pg;
    }

    /// Largest step t with x + t·d inside the box.
    [[nodiscard]] double max_step(const Eigen::VectorXd &x, const Eigen::VectorXd &d) const {
        double t = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (d[i] > 0.0) t = std::min(t, (hi - x[i]) / d[i]);
            if (d[i] < 0.0) t = std::min(t, (lo - x[i]) / d[i]);
        }
        return std::max(t, 0.0);
    }
};

struct LineSearchPoint {
    double step = 0.0;
    double f = 0.0;
    Eigen::VectorXd g;
    double round_off = 0.0;
};

/// Strong-Wolfe line search (bracketing + zoom) along d, capped at max_step.
/// Any returned point satisfies sufficient decrease, so accepted objective values never increase.
template <typename Objective>
std::optional<LineSearchPoint> wolfe_search(const Objective &obj, const Box &box, const Eigen::VectorXd &x, double f0,
                                            const Eigen::VectorXd &g0, const Eigen::VectorXd &d, double initial,
                                            double max_step, double f_resolution) {
    constexpr double c1 = 1e-4, c2 = 0.9;
    constexpr int kMaxEvals = 12;
    const double slope0 = g0.dot(d);
    if (!(slope0 < 0.0)) return std::nullopt;

    struct Sample {
        double step, f, slope;
        Eigen::VectorXd g;
        bool ok;
        double round_off = 0.0;
    };
    auto sample = [&](double t) {
        const auto v = obj(box.clamp(x + t * d));
        if (!v) return Sample{t, std::numeric_limits<double>::infinity(), 0.0, {}, false};
        return Sample{t, v->f, v->g.dot(d), v->g, true, v->round_off};
    };
    auto armijo = [&](const Sample &s) { return s.ok && s.f <= f0 + c1 * s.step * slope0; };
    auto curvature = [&](const Sample &s) { return std::abs(s.slope) <= -c2 * slope0; };
    auto result = [](const Sample &s) { return LineSearchPoint{s.step, s.f, s.g, s.round_off}; };

    int evals = 0;
    auto zoom = [&](Sample lo, Sample hi) -> std::optional<LineSearchPoint> {
        while (evals < kMaxEvals) {
            double t;
            const double width = hi.step - lo.step;
            if (hi.ok) {
                // Minimizer of the quadratic through (lo.f, lo.slope, hi.f), safeguarded.
                const double denom = 2.0 * (hi.f - lo.f - lo.slope * width);
                t = denom > 0.0 ? lo.step - lo.slope * width * width / denom : lo.step + 0.5 * width;
            } else {
                t = lo.step + 0.5 * width;
            }
            const double a = std::min(lo.step, hi.step), b = std::max(lo.step, hi.step);
            t = std::clamp(t, a + 0.1 * (b - a), b - 0.1 * (b - a));
            if ((b - a) * d.lpNorm<Eigen::Infinity>() <= 1e-10) break;
            if (hi.ok && std::abs(hi.f - lo.f) <= f_resolution) break;
            const Sample s = sample(t);
            ++evals;
            if (!armijo(s) || s.f >= lo.f) {
                hi = s;
            } else {
                if (curvature(s)) return result(s);
                if (s.slope * (hi.step - lo.step) >= 0.0) hi = lo;
                lo = s;
            }
        }
        if (lo.step > 0.0 && lo.ok && lo.f < f0) return result(lo);
        return std::nullopt;
    };

    Sample prev{0.0, f0, slope0, g0, true};
    double t = std::min(initial, max_step);
    for (; evals < kMaxEvals;) {
        const Sample s = sample(t);
        ++evals;
        if (!armijo(s) || (evals > 1 && s.f >= prev.f)) return zoom(prev, s);
        if (curvature(s)) return result(s);
        if (s.slope >= 0.0) return zoom(s, prev);
        if (t >= max_step) return result(s);
        prev = s;
        t = std::min(2.0 * t, max_step);
    }
    if (prev.step > 0.0) return result(prev);
    return std::nullopt;
}

struct RunOutcome {
    double initial_f = std::numeric_limits<double>::infinity();
    double final_f = std::numeric_limits<double>::infinity();
    Eigen::VectorXd theta;
    Eigen::VectorXd gradient;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
    bool failed = false;
};

/// Limited-memory BFGS on the box-projected gradient, one restart.
template <typename Objective>
RunOutcome lbfgs(const Objective &obj, Eigen::VectorXd theta, const OptimizeConfig &cfg) {
    const Box box{cfg.bounds.lo, cfg.bounds.hi};
    RunOutcome out;
    theta = box.clamp(theta);
    auto v = obj(theta);
    if (!v) {
        out.failed = true;
        out.theta = theta;
        return out;
    }
    double f = v->f;
    Eigen::VectorXd g = v->g;
    double round_off = v->round_off;
    // Smallest objective change distinguishable from round-off.
    auto resolution_at = [&](double fv, double ro) {
        return std::max(cfg.stall_rel_decrease * std::max(1.0, std::abs(fv)), cfg.stall_round_off_factor * ro);
    };
    out.initial_f = f;
    out.trace.push_back(f);

    std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory; // (s, y)
    constexpr std::size_t kStallWindow = 3;
    for (out.iterations = 0; out.iterations < cfg.max_iters; ++out.iterations) {
        const Eigen::VectorXd pg = box.projected(theta, g);
        if (pg.lpNorm<Eigen::Infinity>() < cfg.grad_tol) {
            out.converged = true;
            break;
        }
        const Eigen::Array<bool, Eigen::Dynamic, 1> free = (pg.array() != 0.0) || (g.array() == 0.0);

        auto direction = [&] {
            // Two-loop recursion restricted to the free variables.
            Eigen::VectorXd q = pg;
            std::vector<double> rho(memory.size()), a(memory.size());
            for (std::size_t i = memory.size(); i-- > 0;) {
                const auto &[s, yv] = memory[i];
                rho[i] = 1.0 / yv.dot(s);
                a[i] = rho[i] * s.dot(q);
                q -= a[i] * yv;
            }
            if (!memory.empty()) {
                const auto &[s, yv] = memory.back();
                q *= s.dot(yv) / yv.squaredNorm();
            }
            for (std::size_t i = 0; i < memory.size(); ++i) {
                const auto &[s, yv] = memory[i];
                const double b = rho[i] * yv.dot(q);
                q += (a[i] - b) * s;
            }
            Eigen::VectorXd d = -q;
            for (Eigen::Index i = 0; i < d.size(); ++i) {
                if (!free[i]) d[i] = 0.0;
            }
            return d;
        };

        Eigen::VectorXd d = direction();
        if (!(g.dot(d) < -1e-12 * g.norm() * d.norm())) {
            memory.clear();
            d = -pg;
        }
        const double initial = memory.empty() ? std::min(1.0, 1.0 / pg.lpNorm<Eigen::Infinity>()) : 1.0;
        const double resolution = resolution_at(f, round_off);
        auto step = wolfe_search(obj, box, theta, f, g, d, initial, box.max_step(theta, d), resolution);
        if (!step && !memory.empty()) {
            memory.clear();
            d = -pg;
            step = wolfe_search(obj, box, theta, f, g, d, std::min(1.0, 1.0 / pg.lpNorm<Eigen::Infinity>()),
                                box.max_step(theta, d), resolution);
        }
        if (!step) break;

        const Eigen::VectorXd next = box.clamp(theta + step->step * d);
        const Eigen::VectorXd s = next - theta;
        const Eigen::VectorXd yv = step->g - g;
        if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
            memory.emplace_back(s, yv);
            if (static_cast<int>(memory.size()) > cfg.memory) memory.pop_front();
        }
        theta = next;
        f = step->f;
        g = step->g;
        out.trace.push_back(f);
        // Progress over the last few iterations is at the objective's round-off level.
        const std::size_t k = out.trace.size();
        round_off = step->round_off;
        if (k > kStallWindow && out.trace[k - 1 - kStallWindow] - f <= resolution_at(f, round_off)) {
            ++out.iterations;
            break;
        }
    }
    // Whatever stopped the loop, the final point is certified by its projected gradient.
    out.converged = box.projected(theta, g).lpNorm<Eigen::Infinity>() < cfg.grad_tol;
    out.final_f = f;
    out.theta = theta;
    out.gradient = box.projected(theta, g);
    return out;
}

} // namespace detail

/// Minimizes the negative log marginal likelihood over (kernel log-params, log noise_std)
/// from `restarts` seeded start points and keeps the best run (lowest index on ties).
inline OptimizeResult optimize_hyperparameters(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, KernelFamily family,
                                               const OptimizeConfig &config) {
    config.validate();
    detail::check_training_data(X, y, 1.0);
    const detail::NlmlObjective objective{X, y, family};

    const auto restarts = static_cast<std::size_t>(config.restarts);
    std::vector<detail::RunOutcome> runs(restarts);
    parallel_for(restarts, [&](std::size_t r) {
        runs[r] = detail::lbfgs(objective, detail::initial_point(family, config, static_cast<int>(r)), config);
    });

    OptimizeResult res;
    for (std::size_t r = 0; r < restarts; ++r) {
        const auto &run = runs[r];
        res.per_restart_nlml.push_back(run.final_f);
        res.initial_nlml.push_back(run.initial_f);
        res.iterations_used.push_back(run.iterations);
        res.converged.push_back(run.converged);
        res.failed.push_back(run.failed);
        res.trace.push_back(run.trace);
        res.final_log_params.push_back(run.theta);
        res.final_gradient.push_back(run.gradient);
        if (!run.failed && run.final_f < res.best_nlml) {
            res.best_nlml = run.final_f;
            res.best_restart = static_cast<int>(r);
        }
    }
    if (res.best_restart < 0) {
        throw NumericalFailure("hyperparameter optimization failed: covariance not factorizable at any start point");
    }
    const auto &best = runs[static_cast<std::size_t>(res.best_restart)].theta;
    const auto np = static_cast<std::size_t>(num_params(family));
    res.best_kernel = KernelSpec::from_log_params(family, std::span<const double>(best.data(), np));
    res.best_noise_std = std::exp(best[static_cast<Eigen::Index>(np)]);
    return res;
}

} // namespace gpcal
