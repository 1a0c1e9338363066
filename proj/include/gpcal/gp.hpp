#pragma once

#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gpcal/errors.hpp"
#include "gpcal/kernels.hpp"
#include "gpcal/normalization.hpp"
#include "gpcal/parallel.hpp"

namespace gpcal {

/// The three additive terms of the log marginal likelihood.
struct LmlTerms {
    double data_fit = 0.0;      ///< −½ yᵀK_y⁻¹y
    double complexity = 0.0;    ///< −½ log|K_y|
    double normalization = 0.0; ///< −(n/2) log 2π

    [[nodiscard]] double total() const noexcept { return data_fit + complexity + normalization; }
};

struct Prediction {
    double mean = 0.0;
    double latent_var = 0.0;
    double predictive_var = 0.0;
    double interval_low = 0.0;
    double interval_high = 0.0;
};

/// Two-sided standard-normal quantile: P(|Z| ≤ z) = level.
inline double normal_quantile_two_sided(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InvalidInput("credible level must lie in (0, 1)");
    return std::numbers::sqrt2 * boost::math::erf_inv(level);
}

/// mean ∓ z(level)·sqrt(predictive_var).
inline std::pair<double, double> credible_interval(const Prediction &p, double level) {
    const double half = normal_quantile_two_sided(level) * std::sqrt(std::max(0.0, p.predictive_var));
    return {p.mean - half, p.mean + half};
}

namespace detail {

inline void check_training_data(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, double noise_std) {
    if (X.rows() < 1 || X.cols() < 1) throw InvalidInput("training set must have at least one row and column");
    if (X.rows() != y.size()) throw InvalidInput("row count of X does not match length of y");
    if (!X.allFinite() || !y.allFinite()) throw InvalidInput("training data contains NaN or Inf");
    if (!(std::isfinite(noise_std) && noise_std > 0.0)) throw InvalidInput("noise_std must be finite and > 0");
}

struct Factorization {
    Eigen::MatrixXd lower;
    double jitter = 0.0;
};

/// Factorizes K into `lower` (in place, upper triangle zeroed).
inline bool try_cholesky(const Eigen::MatrixXd &K, Eigen::MatrixXd &lower) {
    lower = K;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(lower);
    if (llt.info() != Eigen::Success) return false;
    lower.triangularView<Eigen::StrictlyUpper>().setZero();
    const auto diag = lower.diagonal();
    return diag.allFinite() && (diag.array() > 0.0).all();
}

/// Cholesky of K_y with one jitter retry (1e-10·trace/n on the diagonal).
inline Factorization factorize(Eigen::MatrixXd K) {
    Factorization f;
    if (try_cholesky(K, f.lower)) return f;
    const double jitter = 1e-10 * K.trace() / static_cast<double>(K.rows());
    K.diagonal().array() += jitter;
    if (std::isfinite(jitter) && jitter > 0.0 && try_cholesky(K, f.lower)) {
        f.jitter = jitter;
        return f;
    }
    throw NumericalFailure("covariance matrix is not positive definite (jitter " + std::to_string(jitter) + " tried)",
                           jitter);
}

inline Eigen::MatrixXd noisy_covariance(const KernelSpec &kernel, const Eigen::MatrixXd &X, double noise_std) {
    Eigen::MatrixXd K = eval_matrix(kernel, X);
    K.diagonal().array() += noise_std * noise_std;
    return K;
}

inline LmlTerms lml_terms_from(const Factorization &f, const Eigen::VectorXd &centered, const Eigen::VectorXd &alpha) {
    const double n = static_cast<double>(centered.size());
    LmlTerms t;
    t.data_fit = -0.5 * centered.dot(alpha);
    t.complexity = -f.lower.diagonal().array().log().sum();
    t.normalization = -0.5 * n * std::log(2.0 * std::numbers::pi);
    return t;
}

inline Eigen::VectorXd solve_with(const Eigen::MatrixXd &lower, const Eigen::VectorXd &b) {
    Eigen::VectorXd v = lower.triangularView<Eigen::Lower>().solve(b);
    lower.triangularView<Eigen::Lower>().transpose().solveInPlace(v);
    return v;
}

inline Eigen::VectorXd centered_targets(const Eigen::VectorXd &y) { return y.array() - y.mean(); }

struct LmlWithGradient {
    double value = 0.0;
    Eigen::VectorXd gradient; ///< over (kernel log-params..., log noise_std)
    /// Estimated absolute round-off in `value`: eps·(max L_ii / min L_ii)²·max(1, |value|).
    double round_off = 0.0;
};

/// Log marginal likelihood and its gradient sharing one factorization.
inline LmlWithGradient lml_and_gradient(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const KernelSpec &kernel,
                                        double noise_std) {
    check_training_data(X, y, noise_std);
    const Eigen::Index n = X.rows();
    const Eigen::VectorXd yc = centered_targets(y);
    auto [K, grads] = kernel_with_gradients(kernel, X);
    K.diagonal().array() += noise_std * noise_std;
    const Factorization f = factorize(std::move(K));
    const Eigen::VectorXd alpha = solve_with(f.lower, yc);

    // Lower triangle of K_y⁻¹ = L⁻ᵀL⁻¹.
    Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(n, n);
    f.lower.triangularView<Eigen::Lower>().solveInPlace(linv);
    Eigen::MatrixXd kinv = Eigen::MatrixXd::Zero(n, n);
    kinv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());

    // ½ tr((ααᵀ − K⁻¹) P) for symmetric P, read from the lower triangles only.
    auto half_trace = [&](const Eigen::MatrixXd &P) {
        double quad = 0.0, tr = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            double col_quad = 0.5 * alpha[j] * P(j, j);
            double col_tr = 0.5 * kinv(j, j) * P(j, j);
            for (Eigen::Index i = j + 1; i < n; ++i) {
                col_quad += alpha[i] * P(i, j);
                col_tr += kinv(i, j) * P(i, j);
            }
            quad += alpha[j] * col_quad;
            tr += col_tr;
        }
        return quad - tr;
    };

    LmlWithGradient out;
    out.value = lml_terms_from(f, yc, alpha).total();
    out.gradient.resize(static_cast<Eigen::Index>(grads.size()) + 1);
    for (std::size_t p = 0; p < grads.size(); ++p) out.gradient[static_cast<Eigen::Index>(p)] = half_trace(grads[p]);
    const double s2 = noise_std * noise_std;
    out.gradient[out.gradient.size() - 1] = s2 * (alpha.squaredNorm() - kinv.diagonal().sum());
    const double spread = f.lower.diagonal().maxCoeff() / f.lower.diagonal().minCoeff();
    out.round_off = std::numeric_limits<double>::epsilon() * spread * spread * std::max(1.0, std::abs(out.value));
    return out;
}

} // namespace detail

/// Log marginal likelihood of the centered targets, split into its three terms.
inline LmlTerms log_marginal_terms(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const KernelSpec &kernel,
                                   double noise_std) {
    detail::check_training_data(X, y, noise_std);
    const Eigen::VectorXd yc = detail::centered_targets(y);
    const auto f = detail::factorize(detail::noisy_covariance(kernel, X, noise_std));
    return detail::lml_terms_from(f, yc, detail::solve_with(f.lower, yc));
}

inline double log_marginal_likelihood(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const KernelSpec &kernel,
                                      double noise_std) {
    return log_marginal_terms(X, y, kernel, noise_std).total();
}

/// ∂L/∂(log θ) for every kernel log-parameter followed by log noise_std.
/// Costs one O(n³) factorization plus O(n²) per hyperparameter.
inline Eigen::VectorXd log_marginal_gradient(const Eigen::MatrixXd &X, const Eigen::VectorXd &y,
                                             const KernelSpec &kernel, double noise_std) {
    return detail::lml_and_gradient(X, y, kernel, noise_std).gradient;
}

/// Fitted exact GP. Immutable; safe to share between threads.
class TrainedModel {
public:
    [[nodiscard]] const Eigen::MatrixXd &train_inputs() const noexcept { return inputs_; }
    [[nodiscard]] const KernelSpec &kernel() const noexcept { return kernel_; }
    [[nodiscard]] double noise_std() const noexcept { return noise_std_; }
    [[nodiscard]] const Eigen::MatrixXd &chol_factor() const noexcept { return lower_; }
    [[nodiscard]] const Eigen::VectorXd &alpha() const noexcept { return alpha_; }
    [[nodiscard]] double target_offset() const noexcept { return offset_; }
    [[nodiscard]] const NormalizationTransform &input_transform() const noexcept { return transform_; }
    [[nodiscard]] double log_marginal() const noexcept { return lml_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] Eigen::Index size() const noexcept { return inputs_.rows(); }
    [[nodiscard]] Eigen::Index dim() const noexcept { return inputs_.cols(); }

    friend TrainedModel fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const KernelSpec &kernel,
                            double noise_std, std::optional<NormalizationTransform> transform);
    friend TrainedModel restore_model(Eigen::MatrixXd X, Eigen::VectorXd alpha, const KernelSpec &kernel,
                                      double noise_std, double target_offset, double jitter,
                                      NormalizationTransform transform);

private:
    TrainedModel(Eigen::MatrixXd inputs, KernelSpec kernel, double noise_std, NormalizationTransform transform)
        : inputs_(std::move(inputs)), kernel_(kernel), noise_std_(noise_std), transform_(std::move(transform)) {}

    Eigen::MatrixXd inputs_;
    KernelSpec kernel_;
    double noise_std_;
    Eigen::MatrixXd lower_;
    Eigen::VectorXd alpha_;
    double offset_ = 0.0;
    NormalizationTransform transform_;
    double lml_ = 0.0;
    double jitter_ = 0.0;
};

/// Factorizes K(X,X) + σn²I once and solves for α on mean-centered targets.
/// X is expected in normalized units; `transform` records how raw inputs map there.
inline TrainedModel fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const KernelSpec &kernel, double noise_std,
                        std::optional<NormalizationTransform> transform = std::nullopt) {
    detail::check_training_data(X, y, noise_std);
    if (transform && transform->dim() != X.cols()) throw InvalidInput("transform dimension does not match inputs");
    TrainedModel m(X, kernel, noise_std, transform ? *transform : NormalizationTransform::identity(X.cols()));
    m.offset_ = y.mean();
    const Eigen::VectorXd yc = y.array() - m.offset_;
    auto f = detail::factorize(detail::noisy_covariance(kernel, X, noise_std));
    m.alpha_ = detail::solve_with(f.lower, yc);
    m.lml_ = detail::lml_terms_from(f, yc, m.alpha_).total();
    m.jitter_ = f.jitter;
    m.lower_ = std::move(f.lower);
    return m;
}

/// Rebuilds a model from stored parts; the factor is recomputed and the stored α reused.
inline TrainedModel restore_model(Eigen::MatrixXd X, Eigen::VectorXd alpha, const KernelSpec &kernel, double noise_std,
                                  double target_offset, double jitter, NormalizationTransform transform) {
    detail::check_training_data(X, alpha, noise_std);
    if (transform.dim() != X.cols()) throw InvalidInput("transform dimension does not match inputs");
    TrainedModel m(std::move(X), kernel, noise_std, std::move(transform));
    Eigen::MatrixXd K = detail::noisy_covariance(kernel, m.inputs_, noise_std);
    K.diagonal().array() += jitter;
    if (!detail::try_cholesky(K, m.lower_)) throw NumericalFailure("stored model covariance is not positive definite", jitter);
    m.alpha_ = std::move(alpha);
    m.offset_ = target_offset;
    m.jitter_ = jitter;
    // yc = K_y·α recovers the centered targets the model was fit on.
    const Eigen::VectorXd yc = m.lower_ * (m.lower_.transpose() * m.alpha_);
    detail::Factorization f{m.lower_, jitter};
    m.lml_ = detail::lml_terms_from(f, yc, m.alpha_).total();
    return m;
}

namespace detail {

inline constexpr Eigen::Index kPredictChunk = 256;

inline double checked_latent_variance(double prior, double reduction) {
    const double v = prior - reduction;
    if (v >= 0.0) return v;
    if (v >= -1e-9 * std::max(1.0, prior)) return 0.0;
    throw NumericalFailure("posterior variance is negative beyond round-off (" + std::to_string(v) + ")");
}

} // namespace detail

/// Posterior mean, latent and predictive variance, and credible interval at each row of
/// Xstar (normalized units). Only the variance diagonal is formed.
inline std::vector<Prediction> predict(const TrainedModel &model, const Eigen::MatrixXd &Xstar, double level = 0.95) {
    if (Xstar.cols() != model.dim()) throw InvalidInput("test inputs have the wrong number of columns");
    if (!Xstar.allFinite()) throw InvalidInput("test inputs contain NaN or Inf");
    const double z = normal_quantile_two_sided(level);
    const double noise_var = model.noise_std() * model.noise_std();
    const double prior = model.kernel().prior_variance();
    const Eigen::Index m = Xstar.rows();
    std::vector<Prediction> out(static_cast<std::size_t>(m));
    const auto chunks = static_cast<std::size_t>((m + detail::kPredictChunk - 1) / detail::kPredictChunk);

    parallel_for(chunks, [&](std::size_t c) {
        const Eigen::Index begin = static_cast<Eigen::Index>(c) * detail::kPredictChunk;
        const Eigen::Index rows = std::min(detail::kPredictChunk, m - begin);
        const Eigen::MatrixXd kx = eval_matrix(model.kernel(), model.train_inputs(), Xstar.middleRows(begin, rows));
        const Eigen::VectorXd mean = kx.transpose() * model.alpha();
        const Eigen::MatrixXd v = model.chol_factor().triangularView<Eigen::Lower>().solve(kx);
        for (Eigen::Index i = 0; i < rows; ++i) {
            Prediction &p = out[static_cast<std::size_t>(begin + i)];
            p.mean = mean[i] + model.target_offset();
            p.latent_var = detail::checked_latent_variance(prior, v.col(i).squaredNorm());
            p.predictive_var = p.latent_var + noise_var;
            const double half = z * std::sqrt(p.predictive_var);
            p.interval_low = p.mean - half;
            p.interval_high = p.mean + half;
        }
    });
    return out;
}

/// Full latent posterior covariance K(X*,X*) − K(X*,X) K_y⁻¹ K(X,X*), for callers that need it.
inline Eigen::MatrixXd predict_covariance(const TrainedModel &model, const Eigen::MatrixXd &Xstar) {
    if (Xstar.cols() != model.dim()) throw InvalidInput("test inputs have the wrong number of columns");
    const Eigen::MatrixXd kx = eval_matrix(model.kernel(), model.train_inputs(), Xstar);
    const Eigen::MatrixXd v = model.chol_factor().triangularView<Eigen::Lower>().solve(kx);
    return eval_matrix(model.kernel(), Xstar) - v.transpose() * v;
}

} // namespace gpcal
