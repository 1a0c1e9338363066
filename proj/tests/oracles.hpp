#pragma once

// Naive reference implementations used to check the library. They share no code
// with include/gpcal beyond the KernelSpec parameter holder.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "gpcal/kernels.hpp"

namespace oracle {

// Kernel formulas written out directly, in the textbook form.
inline double kernel(const gpcal::KernelSpec &k, double r) {
    const double sf2 = std::pow(k.params().signal_std, 2);
    const double l = k.params().length_scale;
    switch (k.family()) {
    case gpcal::KernelFamily::SquaredExponential: return sf2 * std::exp(-r * r / (2 * l * l));
    case gpcal::KernelFamily::Exponential: return sf2 * std::exp(-r / l);
    case gpcal::KernelFamily::Matern52:
        return sf2 * (1 + std::sqrt(5.0) * r / l + 5 * r * r / (3 * l * l)) * std::exp(-std::sqrt(5.0) * r / l);
    case gpcal::KernelFamily::RationalQuadratic: {
        const double a = k.params().shape_alpha;
        return sf2 * std::pow(1 + r * r / (2 * a * l * l), -a);
    }
    }
    return 0;
}

inline Eigen::MatrixXd gram(const gpcal::KernelSpec &k, const Eigen::MatrixXd &A, const Eigen::MatrixXd &B) {
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < B.rows(); ++j) K(i, j) = kernel(k, (A.row(i) - B.row(j)).norm());
    return K;
}

struct Posterior {
    Eigen::VectorXd mean;
    Eigen::VectorXd latent_var;
};

// Explicit inverse of K_y; targets centered on their mean.
inline Posterior posterior(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const gpcal::KernelSpec &k, double sn,
                           const Eigen::MatrixXd &Xs) {
    const Eigen::MatrixXd Ky = gram(k, X, X) + sn * sn * Eigen::MatrixXd::Identity(X.rows(), X.rows());
    const Eigen::MatrixXd inv = Ky.inverse();
    const double mu = y.mean();
    const Eigen::VectorXd yc = y.array() - mu;
    const Eigen::MatrixXd Ks = gram(k, Xs, X);
    Posterior p;
    p.mean = (Ks * inv * yc).array() + mu;
    p.latent_var.resize(Xs.rows());
    for (Eigen::Index i = 0; i < Xs.rows(); ++i) {
        p.latent_var[i] = kernel(k, 0.0) - Ks.row(i).dot(inv * Ks.row(i).transpose());
    }
    return p;
}

// log N(yc | 0, K_y) using an explicit inverse and an LU determinant.
inline double lml(const Eigen::MatrixXd &X, const Eigen::VectorXd &y, const gpcal::KernelSpec &k, double sn) {
    const Eigen::MatrixXd Ky = gram(k, X, X) + sn * sn * Eigen::MatrixXd::Identity(X.rows(), X.rows());
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double n = static_cast<double>(X.rows());
    return -0.5 * yc.dot(Ky.inverse() * yc) - 0.5 * std::log(Ky.determinant()) - 0.5 * n * std::log(2 * M_PI);
}

inline Eigen::MatrixXd uniform_matrix(std::mt19937_64 &rng, Eigen::Index rows, Eigen::Index cols, double lo = 0.0,
                                      double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = u(rng);
    return M;
}

// One draw from N(0, K + sn² I) through a Cholesky factor of the oracle Gram matrix.
inline Eigen::VectorXd sample_gp(std::mt19937_64 &rng, const Eigen::MatrixXd &X, const gpcal::KernelSpec &k,
                                 double sn) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd K = gram(k, X, X) + (sn * sn + 1e-10) * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd L = K.llt().matrixL();
    std::normal_distribution<double> z;
    Eigen::VectorXd e(n);
    for (Eigen::Index i = 0; i < n; ++i) e[i] = z(rng);
    return L * e;
}

inline gpcal::KernelSpec random_kernel(std::mt19937_64 &rng, gpcal::KernelFamily f, double lo = 0.1, double hi = 10.0) {
    std::uniform_real_distribution<double> lu(std::log(lo), std::log(hi));
    std::uniform_real_distribution<double> au(std::log(0.5), std::log(5.0));
    return {f, {std::exp(lu(rng)), std::exp(lu(rng)), std::exp(au(rng))}};
}

} // namespace oracle
