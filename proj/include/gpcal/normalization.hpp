#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "gpcal/errors.hpp"

namespace gpcal {

/// Per-column affine map of inputs onto [0,1] using training-set extremes.
/// Points outside the training range map outside [0,1]; nothing is clipped.
class NormalizationTransform {
public:
    NormalizationTransform() = default;

    NormalizationTransform(Eigen::RowVectorXd min, Eigen::RowVectorXd max) : min_(std::move(min)), max_(std::move(max)) {
        if (min_.size() != max_.size() || min_.size() == 0) {
            throw InvalidInput("normalization bounds must be non-empty and of equal length");
        }
        for (Eigen::Index c = 0; c < min_.size(); ++c) {
            if (!std::isfinite(min_[c]) || !std::isfinite(max_[c]) || !(max_[c] > min_[c])) {
                throw InvalidInput("degenerate normalization: column " + std::to_string(c) + " has max <= min");
            }
        }
    }

    /// Column-wise min/max of the given (training) inputs.
    static NormalizationTransform from_inputs(const Eigen::MatrixXd &raw) {
        if (raw.rows() == 0) throw InvalidInput("cannot derive normalization from an empty input set");
        return {raw.colwise().minCoeff(), raw.colwise().maxCoeff()};
    }

    /// Identity map of the given dimension (min 0, max 1).
    static NormalizationTransform identity(Eigen::Index dim) {
        return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return min_.size(); }
    [[nodiscard]] const Eigen::RowVectorXd &min() const noexcept { return min_; }
    [[nodiscard]] const Eigen::RowVectorXd &max() const noexcept { return max_; }

    [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd &raw) const {
        check(raw);
        const Eigen::RowVectorXd span = max_ - min_;
        return (raw.rowwise() - min_).array().rowwise() / span.array();
    }

    [[nodiscard]] Eigen::MatrixXd invert(const Eigen::MatrixXd &normalized) const {
        check(normalized);
        const Eigen::RowVectorXd span = max_ - min_;
        return (normalized.array().rowwise() * span.array()).matrix().rowwise() + min_;
    }

    friend bool operator==(const NormalizationTransform &a, const NormalizationTransform &b) {
        return a.min_ == b.min_ && a.max_ == b.max_;
    }

private:
    void check(const Eigen::MatrixXd &m) const {
        if (min_.size() == 0) throw InvalidInput("normalization transform is uninitialised");
        if (m.cols() != min_.size()) throw InvalidInput("input dimension does not match normalization transform");
    }

    Eigen::RowVectorXd min_;
    Eigen::RowVectorXd max_;
};

} // namespace gpcal
