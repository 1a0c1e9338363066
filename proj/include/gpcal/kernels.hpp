#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gpcal/errors.hpp"

namespace gpcal {

enum class KernelFamily { SquaredExponential, Exponential, Matern52, RationalQuadratic };

inline constexpr std::array<KernelFamily, 4> kAllFamilies = {
    KernelFamily::RationalQuadratic, KernelFamily::SquaredExponential, KernelFamily::Matern52,
    KernelFamily::Exponential};

/// Number of kernel hyperparameters (the BIC `m`); the noise level is not counted.
[[nodiscard]] constexpr int num_params(KernelFamily family) noexcept {
    return family == KernelFamily::RationalQuadratic ? 3 : 2;
}

/// Short token used on the command line and in model files.
[[nodiscard]] inline std::string_view family_token(KernelFamily family) noexcept {
    switch (family) {
    case KernelFamily::SquaredExponential: return "se";
    case KernelFamily::Exponential: return "exp";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::RationalQuadratic: return "rq";
    }
    return "?";
}

[[nodiscard]] inline std::string_view family_name(KernelFamily family) noexcept {
    switch (family) {
    case KernelFamily::SquaredExponential: return "Squared Exponential";
    case KernelFamily::Exponential: return "Exponential";
    case KernelFamily::Matern52: return "Matern 5/2";
    case KernelFamily::RationalQuadratic: return "Rational Quadratic";
    }
    return "?";
}

[[nodiscard]] inline std::optional<KernelFamily> parse_family(std::string_view token) noexcept {
    for (auto family : kAllFamilies) {
        if (family_token(family) == token) return family;
    }
    return std::nullopt;
}

struct HyperParams {
    double signal_std = 1.0;
    double length_scale = 1.0;
    double shape_alpha = 1.0; ///< Rational Quadratic only.
};

/// Covariance family plus hyperparameters. Immutable; parameters are validated on construction.
class KernelSpec {
public:
    KernelSpec(KernelFamily family, HyperParams params) : family_(family), params_(params) {
        auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
        if (!positive(params_.signal_std) || !positive(params_.length_scale)) {
            throw InvalidInput("kernel signal_std and length_scale must be finite and > 0");
        }
        if (family_ == KernelFamily::RationalQuadratic && !positive(params_.shape_alpha)) {
            throw InvalidInput("rational quadratic shape_alpha must be finite and > 0");
        }
    }

    /// Builds a kernel from log-parameters ordered (log signal_std, log length_scale[, log shape_alpha]).
    static KernelSpec from_log_params(KernelFamily family, std::span<const double> log_params) {
        if (static_cast<int>(log_params.size()) != gpcal::num_params(family)) {
            throw InvalidInput("wrong number of log-parameters for kernel family");
        }
        HyperParams p;
        p.signal_std = std::exp(log_params[0]);
        p.length_scale = std::exp(log_params[1]);
        if (family == KernelFamily::RationalQuadratic) p.shape_alpha = std::exp(log_params[2]);
        return {family, p};
    }

    [[nodiscard]] KernelFamily family() const noexcept { return family_; }
    [[nodiscard]] const HyperParams &params() const noexcept { return params_; }
    [[nodiscard]] int num_params() const noexcept { return gpcal::num_params(family_); }
    [[nodiscard]] double prior_variance() const noexcept { return params_.signal_std * params_.signal_std; }

    [[nodiscard]] std::vector<double> log_params() const {
        std::vector<double> out{std::log(params_.signal_std), std::log(params_.length_scale)};
        if (family_ == KernelFamily::RationalQuadratic) out.push_back(std::log(params_.shape_alpha));
        return out;
    }

    /// Covariance as a function of Euclidean distance r ≥ 0.
    [[nodiscard]] double from_distance(double r) const noexcept {
        const double s2 = prior_variance();
        const double u = r / params_.length_scale;
        switch (family_) {
        case KernelFamily::SquaredExponential: return s2 * std::exp(-0.5 * u * u);
        case KernelFamily::Exponential: return s2 * std::exp(-u);
        case KernelFamily::Matern52: {
            const double su = std::sqrt(5.0) * u;
            return s2 * (1.0 + su + su * su / 3.0) * std::exp(-su);
        }
        case KernelFamily::RationalQuadratic: {
            const double a = params_.shape_alpha;
            return s2 * std::exp(-a * std::log1p(u * u / (2.0 * a)));
        }
        }
        return 0.0;
    }

    /// Derivative of the covariance at distance r with respect to log length_scale
    /// (slot 0) and, for Rational Quadratic, log shape_alpha (slot 1).
    [[nodiscard]] std::array<double, 2> shape_derivatives(double r) const noexcept {
        const double s2 = prior_variance();
        const double u = r / params_.length_scale;
        const double u2 = u * u;
        switch (family_) {
        case KernelFamily::SquaredExponential: return {s2 * std::exp(-0.5 * u2) * u2, 0.0};
        case KernelFamily::Exponential: return {s2 * std::exp(-u) * u, 0.0};
        case KernelFamily::Matern52: {
            const double su = std::sqrt(5.0) * u;
            return {s2 * (5.0 / 3.0) * u2 * (1.0 + su) * std::exp(-su), 0.0};
        }
        case KernelFamily::RationalQuadratic: {
            const double a = params_.shape_alpha;
            const double log_base = std::log1p(u2 / (2.0 * a));
            const double base = 1.0 + u2 / (2.0 * a);
            const double k = s2 * std::exp(-a * log_base);
            const double d_len = k * u2 / base;
            const double d_alpha = k * (-a * log_base + u2 / (2.0 * base));
            return {d_len, d_alpha};
        }
        }
        return {0.0, 0.0};
    }

private:
    KernelFamily family_;
    HyperParams params_;
};

namespace detail {

template <typename A, typename B>
double distance(const Eigen::MatrixBase<A> &x, const Eigen::MatrixBase<B> &x2) {
    return (x - x2).norm();
}

inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd &X, const Eigen::MatrixXd &X2) {
    if (X.cols() != X2.cols()) throw InvalidInput("input dimension mismatch");
    const Eigen::Index n = X.rows(), m = X2.rows(), d = X.cols();
    Eigen::MatrixXd R(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double diff = X(i, c) - X2(j, c);
                acc += diff * diff;
            }
            R(i, j) = std::sqrt(acc);
        }
    }
    return R;
}

/// Symmetric distance matrix with an exactly-zero diagonal.
inline Eigen::MatrixXd self_distances(const Eigen::MatrixXd &X) {
    const Eigen::Index n = X.rows(), d = X.cols();
    Eigen::MatrixXd R(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        R(j, j) = 0.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index c = 0; c < d; ++c) {
                const double diff = X(i, c) - X(j, c);
                acc += diff * diff;
            }
            R(i, j) = R(j, i) = std::sqrt(acc);
        }
    }
    return R;
}

inline Eigen::MatrixXd apply_kernel(const KernelSpec &kernel, const Eigen::MatrixXd &R) {
    return R.unaryExpr([&](double r) { return kernel.from_distance(r); });
}

} // namespace detail

/// k(x, x2) for two input vectors of equal dimension.
template <typename A, typename B>
double eval(const KernelSpec &kernel, const Eigen::MatrixBase<A> &x, const Eigen::MatrixBase<B> &x2) {
    if (x.size() != x2.size() || x.size() == 0) throw InvalidInput("input dimension mismatch");
    return kernel.from_distance(detail::distance(x.derived().reshaped(), x2.derived().reshaped()));
}

/// Covariance matrix between the rows of X (n×N) and the rows of X2 (m×N).
inline Eigen::MatrixXd eval_matrix(const KernelSpec &kernel, const Eigen::MatrixXd &X, const Eigen::MatrixXd &X2) {
    return detail::apply_kernel(kernel, detail::pairwise_distances(X, X2));
}

/// K(X, X); exactly symmetric with σf² on the diagonal.
inline Eigen::MatrixXd eval_matrix(const KernelSpec &kernel, const Eigen::MatrixXd &X) {
    return detail::apply_kernel(kernel, detail::self_distances(X));
}

/// ∂K(X,X)/∂(log θ_p) for each kernel log-parameter, in log_params() order.
inline std::vector<Eigen::MatrixXd> grad_matrices(const KernelSpec &kernel, const Eigen::MatrixXd &X) {
    if (X.rows() == 0) throw InvalidInput("grad_matrices requires at least one input row");
    const Eigen::MatrixXd R = detail::self_distances(X);
    std::vector<Eigen::MatrixXd> out;
    out.reserve(kernel.num_params());
    out.push_back(2.0 * detail::apply_kernel(kernel, R));
    out.push_back(R.unaryExpr([&](double r) { return kernel.shape_derivatives(r)[0]; }));
    if (kernel.family() == KernelFamily::RationalQuadratic) {
        out.push_back(R.unaryExpr([&](double r) { return kernel.shape_derivatives(r)[1]; }));
    }
    return out;
}

namespace detail {

/// K(X,X) and its log-parameter derivatives from a single pass over the pairs.
inline std::pair<Eigen::MatrixXd, std::vector<Eigen::MatrixXd>> kernel_with_gradients(const KernelSpec &kernel,
                                                                                     const Eigen::MatrixXd &X) {
    const Eigen::Index n = X.rows();
    const int np = kernel.num_params();
    Eigen::MatrixXd K(n, n);
    std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(np), Eigen::MatrixXd(n, n));
    const Eigen::MatrixXd R = self_distances(X);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            const double r = R(i, j);
            const double k = kernel.from_distance(r);
            const auto d = kernel.shape_derivatives(r);
            K(i, j) = K(j, i) = k;
            grads[0](i, j) = grads[0](j, i) = 2.0 * k;
            grads[1](i, j) = grads[1](j, i) = d[0];
            if (np == 3) grads[2](i, j) = grads[2](j, i) = d[1];
        }
    }
    return {std::move(K), std::move(grads)};
}

} // namespace detail

} // namespace gpcal
