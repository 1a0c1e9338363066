#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "gpcal/data.hpp"
#include "gpcal/gp.hpp"
#include "gpcal/metrics.hpp"
#include "gpcal/optimize.hpp"

namespace gpcal {

struct BicRow {
    KernelFamily family = KernelFamily::SquaredExponential;
    double log_marginal = 0.0;
    int m = 0;
    std::size_t n = 0;
    double bic = 0.0;
};

struct KernelComparisonRow {
    BicRow bic;
    EvalReport in_sample;
    bool failed = false;
    std::string failure; ///< set when `failed`
    std::optional<KernelSpec> kernel;
    double noise_std = 0.0;
};

/// Optimizes and fits each family on the full dataset, then ranks by BIC (ascending).
/// Families that fail numerically are kept as flagged rows after the successful ones.
inline std::vector<KernelComparisonRow> compare_kernels(const CalibrationDataset &dataset,
                                                        std::span<const KernelFamily> families,
                                                        const OptimizeConfig &config,
                                                        LogBase base = LogBase::Natural, double level = 0.95) {
    const auto transform = fit_transform(dataset);
    const auto [X, y] = normalize(dataset, transform);
    const std::vector<double> truth(y.data(), y.data() + y.size());

    std::vector<KernelComparisonRow> rows(families.size());
    for (std::size_t i = 0; i < families.size(); ++i) {
        auto &row = rows[i];
        row.bic.family = families[i];
        row.bic.m = num_params(families[i]);
        row.bic.n = dataset.size();
        try {
            const auto opt = optimize_hyperparameters(X, y, families[i], config);
            const auto model = fit(X, y, opt.best_kernel, opt.best_noise_std, transform);
            row.kernel = opt.best_kernel;
            row.noise_std = opt.best_noise_std;
            row.bic.log_marginal = model.log_marginal();
            row.bic.bic = bic(row.bic.log_marginal, row.bic.m, row.bic.n, base);
            row.in_sample = evaluate(truth, predict(model, X, level), level);
        } catch (const NumericalFailure &e) {
            row.failed = true;
            row.failure = e.what();
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto &a, const auto &b) {
        if (a.failed != b.failed) return !a.failed;
        return !a.failed && a.bic.bic < b.bic.bic;
    });
    return rows;
}

} // namespace gpcal
