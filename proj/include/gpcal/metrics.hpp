#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gpcal/errors.hpp"
#include "gpcal/gp.hpp"

namespace gpcal {

namespace detail {

inline void check_pair(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size()) throw InvalidInput("truth and prediction lengths differ");
    if (truth.empty()) throw InvalidInput("metrics need at least one sample");
}

} // namespace detail

inline double mae(std::span<const double> truth, std::span<const double> pred) {
    detail::check_pair(truth, pred);
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) acc += std::abs(truth[i] - pred[i]);
    return acc / static_cast<double>(truth.size());
}

inline double sum_squared_error(std::span<const double> truth, std::span<const double> pred) {
    detail::check_pair(truth, pred);
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double e = truth[i] - pred[i];
        acc += e * e;
    }
    return acc;
}

inline double rmse(std::span<const double> truth, std::span<const double> pred) {
    return std::sqrt(sum_squared_error(truth, pred) / static_cast<double>(truth.size()));
}

/// 1 − SSE/SST. Unbounded below; undefined for constant truth.
inline double r_squared(std::span<const double> truth, std::span<const double> pred) {
    detail::check_pair(truth, pred);
    if (truth.size() < 2) throw InvalidInput("R² needs at least two samples");
    double mean = 0.0;
    for (double t : truth) mean += t;
    mean /= static_cast<double>(truth.size());
    double sst = 0.0;
    for (double t : truth) sst += (t - mean) * (t - mean);
    if (!(sst > 0.0)) throw DegenerateError("R² is undefined for constant truth (zero total sum of squares)");
    return 1.0 - sum_squared_error(truth, pred) / sst;
}

/// Fraction of truths inside each prediction's credible interval at `level`.
inline double coverage(std::span<const double> truth, std::span<const Prediction> preds, double level) {
    if (truth.size() != preds.size()) throw InvalidInput("truth and prediction lengths differ");
    if (truth.empty()) throw InvalidInput("coverage needs at least one sample");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto [lo, hi] = credible_interval(preds[i], level);
        if (lo <= truth[i] && truth[i] <= hi) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(truth.size());
}

struct EvalReport {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = std::numeric_limits<double>::quiet_NaN(); ///< NaN when truth is constant
    std::optional<double> coverage;                       ///< absent for point predictors
    std::size_t n = 0;
};

inline EvalReport evaluate_point(std::span<const double> truth, std::span<const double> pred) {
    EvalReport r;
    r.mae = mae(truth, pred);
    r.rmse = rmse(truth, pred);
    r.n = truth.size();
    if (truth.size() >= 2) {
        try {
            r.r2 = r_squared(truth, pred);
        } catch (const DegenerateError &) {
        }
    }
    return r;
}

inline std::vector<double> means_of(std::span<const Prediction> preds) {
    std::vector<double> out;
    out.reserve(preds.size());
    for (const auto &p : preds) out.push_back(p.mean);
    return out;
}

inline EvalReport evaluate(std::span<const double> truth, std::span<const Prediction> preds, double level) {
    const auto mean = means_of(preds);
    EvalReport r = evaluate_point(truth, mean);
    r.coverage = coverage(truth, preds, level);
    return r;
}

// ---------------------------------------------------------------------------
// BIC

enum class LogBase { Natural, Base10 };

/// −2L + m·log(n) in the configured base.
inline double bic(double log_marginal, int m, std::size_t n, LogBase base = LogBase::Natural) {
    if (n < 1) throw InvalidInput("BIC needs n >= 1");
    if (m < 0) throw InvalidInput("BIC needs m >= 0");
    const double logn = base == LogBase::Natural ? std::log(static_cast<double>(n)) : std::log10(static_cast<double>(n));
    return -2.0 * log_marginal + static_cast<double>(m) * logn;
}

// ---------------------------------------------------------------------------
// Linear least-squares baseline

struct LinearModel {
    Eigen::VectorXd weights;
    double intercept = 0.0;

    /// (w_1, …, w_N, intercept)
    [[nodiscard]] Eigen::VectorXd coefficients() const {
        Eigen::VectorXd c(weights.size() + 1);
        c << weights, intercept;
        return c;
    }
};

/// Ordinary least squares with intercept via column-pivoted Householder QR.
inline LinearModel linear_baseline_fit(const Eigen::MatrixXd &X, const Eigen::VectorXd &y) {
    if (X.rows() != y.size()) throw InvalidInput("row count of X does not match length of y");
    if (X.rows() <= X.cols()) throw InvalidInput("linear baseline needs more rows than input columns");
    if (!X.allFinite() || !y.allFinite()) throw InvalidInput("linear baseline data contains NaN or Inf");
    Eigen::MatrixXd A(X.rows(), X.cols() + 1);
    A << X, Eigen::VectorXd::Ones(X.rows());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < A.cols()) throw DegenerateError("linear baseline design matrix is rank deficient");
    const Eigen::VectorXd c = qr.solve(y);
    return {c.head(X.cols()), c[X.cols()]};
}

inline Eigen::VectorXd linear_baseline_predict(const LinearModel &model, const Eigen::MatrixXd &Xstar) {
    if (Xstar.cols() != model.weights.size()) throw InvalidInput("test inputs have the wrong number of columns");
    return (Xstar * model.weights).array() + model.intercept;
}

} // namespace gpcal
