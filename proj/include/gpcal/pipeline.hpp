#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gpcal/data.hpp"
#include "gpcal/gp.hpp"
#include "gpcal/metrics.hpp"
#include "gpcal/model_io.hpp"
#include "gpcal/model_select.hpp"
#include "gpcal/optimize.hpp"

namespace gpcal {

// ---------------------------------------------------------------------------
// Train / evaluate

struct TrainOutcome {
    TrainedModel model;
    OptimizeResult optimization;
    EvalReport in_sample;
    double bic = 0.0;
};

/// normalize (training statistics) → optimize hyperparameters → fit.
inline TrainOutcome train_model(const CalibrationDataset &train, KernelFamily family, const OptimizeConfig &config,
                                double level = 0.95, LogBase base = LogBase::Natural) {
    if (train.size() < 2) throw InvalidInput("training needs at least two records");
    const auto transform = fit_transform(train);
    const auto [X, y] = normalize(train, transform);
    auto opt = optimize_hyperparameters(X, y, family, config);
    auto model = fit(X, y, opt.best_kernel, opt.best_noise_std, transform);
    const std::vector<double> truth(y.data(), y.data() + y.size());
    auto report = evaluate(truth, predict(model, X, level), level);
    const double b = bic(model.log_marginal(), num_params(family), train.size(), base);
    return {std::move(model), std::move(opt), report, b};
}

/// Refit with fixed hyperparameters on a new training set.
inline TrainedModel fit_fixed(const CalibrationDataset &train, const KernelSpec &kernel, double noise_std) {
    const auto transform = fit_transform(train);
    const auto [X, y] = normalize(train, transform);
    return fit(X, y, kernel, noise_std, transform);
}

struct PointPrediction {
    std::size_t index = 0;
    double voltage = 0.0;
    double air_temp = 0.0;
    double truth = 0.0;
    double mean = 0.0;
    double predictive_std = 0.0;
    double interval_low = 0.0;
    double interval_high = 0.0;
};

struct EvaluationOutcome {
    EvalReport report;
    std::vector<PointPrediction> points;
};

/// Predicts raw records through the model's stored input transform.
inline EvaluationOutcome evaluate_model(const TrainedModel &model, const CalibrationDataset &test, double level = 0.95) {
    if (test.empty()) throw InvalidInput("evaluation set is empty");
    const auto [X, y] = normalize(test, model.input_transform());
    const auto preds = predict(model, X, level);
    const std::vector<double> truth(y.data(), y.data() + y.size());
    EvaluationOutcome out;
    out.report = evaluate(truth, preds, level);
    out.points.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto &r = test.records[i];
        out.points.push_back({i, r.voltage, r.air_temp, r.wind_speed, preds[i].mean, std::sqrt(preds[i].predictive_var),
                              preds[i].interval_low, preds[i].interval_high});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldResult {
    std::string label;
    EvalReport train;
    EvalReport test;
    KernelSpec kernel{KernelFamily::SquaredExponential, {}};
    double noise_std = 0.0;
    // By-run folds only.
    double nominal_temp = std::numeric_limits<double>::quiet_NaN();
    bool extrapolation = false;
};

struct Quartiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Linearly interpolated sample quantiles (the usual boxplot convention).
inline Quartiles quartiles(std::vector<double> v) {
    if (v.empty()) throw InvalidInput("quartiles of an empty sample");
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double h = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return {v.front(), q(0.25), q(0.5), q(0.75), v.back()};
}

struct CrossvalSummary {
    Quartiles mae, rmse, r2;
};

inline CrossvalSummary summarize_test(const std::vector<FoldResult> &folds) {
    std::vector<double> mae, rmse, r2;
    for (const auto &f : folds) {
        mae.push_back(f.test.mae);
        rmse.push_back(f.test.rmse);
        r2.push_back(f.test.r2);
    }
    return {quartiles(mae), quartiles(rmse), quartiles(r2)};
}

struct CrossvalOptions {
    KernelFamily family = KernelFamily::Exponential;
    OptimizeConfig optimize;
    double level = 0.95;
    /// Optimize once on the first training set and refit with those hyperparameters.
    bool reuse_hypers = false;
};

namespace detail {

inline FoldResult run_fold(const TrainTest &tt, const CrossvalOptions &opts, std::uint64_t seed,
                           const std::optional<std::pair<KernelSpec, double>> &fixed, std::string label) {
    FoldResult fr;
    fr.label = std::move(label);
    std::optional<TrainedModel> model;
    if (fixed) {
        model = fit_fixed(tt.train, fixed->first, fixed->second);
        const auto [X, y] = normalize(tt.train, model->input_transform());
        const std::vector<double> truth(y.data(), y.data() + y.size());
        fr.train = evaluate(truth, predict(*model, X, opts.level), opts.level);
    } else {
        auto cfg = opts.optimize;
        cfg.init_seed = seed;
        auto trained = train_model(tt.train, opts.family, cfg, opts.level);
        fr.train = trained.in_sample;
        model = std::move(trained.model);
    }
    fr.kernel = model->kernel();
    fr.noise_std = model->noise_std();
    fr.test = evaluate_model(*model, tt.test, opts.level).report;
    return fr;
}

} // namespace detail

/// `repeats` random train/test splits; repeat r uses seed + r for both the split and the optimizer.
inline std::vector<FoldResult> crossval_random(const CalibrationDataset &ds, double train_fraction, int repeats,
                                               std::uint64_t seed, const CrossvalOptions &opts) {
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    std::vector<FoldResult> out;
    std::optional<std::pair<KernelSpec, double>> fixed;
    for (int r = 0; r < repeats; ++r) {
        const std::uint64_t s = seed + static_cast<std::uint64_t>(r);
        const auto tt = split(ds, RandomFraction{train_fraction, s}).front();
        auto fr = detail::run_fold(tt, opts, s, fixed, "repeat " + std::to_string(r));
        if (opts.reuse_hypers && !fixed) fixed = std::make_pair(fr.kernel, fr.noise_std);
        out.push_back(std::move(fr));
    }
    return out;
}

inline std::vector<FoldResult> crossval_kfold(const CalibrationDataset &ds, int k, std::uint64_t seed,
                                              const CrossvalOptions &opts) {
    const auto pairs = split(ds, KFold{k, seed});
    std::vector<FoldResult> out;
    std::optional<std::pair<KernelSpec, double>> fixed;
    for (std::size_t f = 0; f < pairs.size(); ++f) {
        auto fr = detail::run_fold(pairs[f], opts, seed, fixed, "fold " + std::to_string(f + 1));
        if (opts.reuse_hypers && !fixed) fixed = std::make_pair(fr.kernel, fr.noise_std);
        out.push_back(std::move(fr));
    }
    return out;
}

struct ByRunOutcome {
    std::vector<FoldResult> folds;
    double mean_train_rmse = std::numeric_limits<double>::quiet_NaN();
    double mean_interpolation_rmse = std::numeric_limits<double>::quiet_NaN();
    double mean_extrapolation_rmse = std::numeric_limits<double>::quiet_NaN();
};

/// Leave-one-run-out: each listed run (every run when `runs` is empty) is held out in
/// turn. A run counts as extrapolation when its nominal (mean) temperature is the
/// lowest or highest of all runs.
inline ByRunOutcome crossval_byrun(const CalibrationDataset &ds, std::vector<std::string> runs, std::uint64_t seed,
                                   const CrossvalOptions &opts) {
    if (runs.empty()) runs = ds.run_ids();
    const auto temps = run_temperatures(ds);
    if (temps.size() < 2) throw ConfigError("by-run cross-validation needs at least two runs");
    double tmin = std::numeric_limits<double>::infinity(), tmax = -tmin;
    for (const auto &[id, t] : temps) {
        tmin = std::min(tmin, t);
        tmax = std::max(tmax, t);
    }
    ByRunOutcome out;
    std::optional<std::pair<KernelSpec, double>> fixed;
    double train_sum = 0.0, interp_sum = 0.0, extrap_sum = 0.0;
    int interp_n = 0, extrap_n = 0;
    for (const auto &run : runs) {
        const auto tt = split(ds, ByRun{{run}}).front();
        auto fr = detail::run_fold(tt, opts, seed, fixed, run);
        if (opts.reuse_hypers && !fixed) fixed = std::make_pair(fr.kernel, fr.noise_std);
        fr.nominal_temp = temps.at(run);
        fr.extrapolation = fr.nominal_temp <= tmin || fr.nominal_temp >= tmax;
        train_sum += fr.train.rmse;
        (fr.extrapolation ? extrap_sum : interp_sum) += fr.test.rmse;
        ++(fr.extrapolation ? extrap_n : interp_n);
        out.folds.push_back(std::move(fr));
    }
    out.mean_train_rmse = train_sum / static_cast<double>(out.folds.size());
    if (interp_n > 0) out.mean_interpolation_rmse = interp_sum / interp_n;
    if (extrap_n > 0) out.mean_extrapolation_rmse = extrap_sum / extrap_n;
    return out;
}

// ---------------------------------------------------------------------------
// Temperature-error sensitivity

struct SensitivityRow {
    std::string error_type; ///< "random" or "systematic"
    double level = 0.0;     ///< amplitude or offset, °C
    EvalReport report;
};

/// Injects each error level into the test set only and re-evaluates the fixed model.
/// Every random level reuses the same seed, so levels differ only in amplitude.
inline std::vector<SensitivityRow> sensitivity(const TrainedModel &model, const CalibrationDataset &test,
                                               const std::vector<double> &random_levels,
                                               const std::vector<double> &systematic_levels, std::uint64_t seed,
                                               ErrorDistribution dist = ErrorDistribution::Uniform,
                                               double level = 0.95) {
    std::vector<SensitivityRow> rows;
    for (double a : random_levels) {
        rows.push_back({"random", a, evaluate_model(model, inject_random_error(test, a, seed, dist), level).report});
    }
    for (double o : systematic_levels) {
        rows.push_back({"systematic", o, evaluate_model(model, inject_systematic_error(test, o), level).report});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Kernel comparison

struct CompareOutcome {
    std::vector<KernelComparisonRow> bic_rows;
    /// Held-out metrics per GPR family (BIC order) followed by the linear baseline.
    std::vector<std::pair<std::string, EvalReport>> test_metrics;
};

/// BIC on the full dataset; then each family is refit with its full-data hyperparameters
/// on a random training split and scored, alongside a linear baseline, on the rest.
inline CompareOutcome compare(const CalibrationDataset &ds, std::span<const KernelFamily> families,
                              const OptimizeConfig &config, LogBase base, double train_fraction, std::uint64_t seed,
                              double level = 0.95) {
    CompareOutcome out;
    out.bic_rows = compare_kernels(ds, families, config, base, level);
    const auto tt = split(ds, RandomFraction{train_fraction, seed}).front();
    for (const auto &row : out.bic_rows) {
        if (row.failed) continue;
        const auto model = fit_fixed(tt.train, *row.kernel, row.noise_std);
        out.test_metrics.emplace_back("GPR " + std::string(family_name(row.bic.family)),
                                      evaluate_model(model, tt.test, level).report);
    }
    const auto transform = fit_transform(tt.train);
    const auto train = normalize(tt.train, transform);
    const auto test = normalize(tt.test, transform);
    const auto lr = linear_baseline_fit(train.X, train.y);
    const Eigen::VectorXd pred = linear_baseline_predict(lr, test.X);
    out.test_metrics.emplace_back("LR Linear", evaluate_point(std::span<const double>(test.y.data(), test.y.size()),
                                                              std::span<const double>(pred.data(), pred.size())));
    return out;
}

// ---------------------------------------------------------------------------
// Report output

/// CSV with a header row; numbers written with 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable &row(std::vector<std::string> cells) {
        if (cells.size() != header_.size()) throw InvalidInput("CSV row width does not match header");
        rows_.push_back(std::move(cells));
        return *this;
    }

    void write_csv(std::ostream &os) const {
        auto line = [&](const std::vector<std::string> &cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
            os << '\n';
        };
        line(header_);
        for (const auto &r : rows_) line(r);
    }

    void write_csv(const std::string &path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw SchemaError("cannot open report file for writing: " + path);
        write_csv(os);
    }

    /// Aligned plain-text rendering; numeric cells are shortened for display.
    void write_text(std::ostream &os) const {
        auto shorten = [](const std::string &cell) {
            char *end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size() || cell.find_first_of(".eE") == std::string::npos) {
                return cell;
            }
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6g", v);
            return std::string(buf);
        };
        std::vector<std::vector<std::string>> all{header_};
        for (const auto &r : rows_) {
            std::vector<std::string> s;
            for (const auto &c : r) s.push_back(shorten(c));
            all.push_back(std::move(s));
        }
        std::vector<std::size_t> width(header_.size(), 0);
        for (const auto &r : all) {
            for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
        }
        for (std::size_t k = 0; k < all.size(); ++k) {
            for (std::size_t i = 0; i < all[k].size(); ++i) {
                os << (i ? "  " : "") << std::setw(static_cast<int>(width[i])) << std::left << all[k][i];
            }
            os << '\n';
            if (k == 0) {
                for (std::size_t i = 0; i < width.size(); ++i) os << (i ? "  " : "") << std::string(width[i], '-');
                os << '\n';
            }
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::vector<std::string> report_header() { return {"mae", "rmse", "r2", "coverage", "n"}; }

inline std::vector<std::string> report_cells(const EvalReport &r) {
    return {format17(r.mae), format17(r.rmse), format17(r.r2), r.coverage ? format17(*r.coverage) : "",
            std::to_string(r.n)};
}

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string> &b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

inline CsvTable predictions_table(const std::vector<PointPrediction> &points) {
    CsvTable t({"index", "voltage", "air_temp", "truth", "mean", "predictive_std", "interval_low", "interval_high"});
    for (const auto &p : points) {
        t.row({std::to_string(p.index), format17(p.voltage), format17(p.air_temp), format17(p.truth), format17(p.mean),
               format17(p.predictive_std), format17(p.interval_low), format17(p.interval_high)});
    }
    return t;
}

inline CsvTable folds_table(const std::vector<FoldResult> &folds) {
    CsvTable t({"fold", "kernel", "signal_std", "length_scale", "shape_alpha", "noise_std", "nominal_temp",
                "extrapolation", "train_mae", "train_rmse", "train_r2", "train_coverage", "train_n", "test_mae",
                "test_rmse", "test_r2", "test_coverage", "test_n"});
    for (const auto &f : folds) {
        auto cells = std::vector<std::string>{
            f.label,
            std::string(family_token(f.kernel.family())),
            format17(f.kernel.params().signal_std),
            format17(f.kernel.params().length_scale),
            f.kernel.family() == KernelFamily::RationalQuadratic ? format17(f.kernel.params().shape_alpha) : "",
            format17(f.noise_std),
            std::isnan(f.nominal_temp) ? "" : format17(f.nominal_temp),
            std::isnan(f.nominal_temp) ? "" : (f.extrapolation ? "1" : "0")};
        cells = concat(std::move(cells), report_cells(f.train));
        cells = concat(std::move(cells), report_cells(f.test));
        t.row(std::move(cells));
    }
    return t;
}

inline CsvTable summary_table(const CrossvalSummary &s) {
    CsvTable t({"metric", "min", "q1", "median", "q3", "max"});
    auto add = [&](const char *name, const Quartiles &q) {
        t.row({name, format17(q.min), format17(q.q1), format17(q.median), format17(q.q3), format17(q.max)});
    };
    add("mae", s.mae);
    add("rmse", s.rmse);
    add("r2", s.r2);
    return t;
}

inline CsvTable sensitivity_table(const std::vector<SensitivityRow> &rows) {
    CsvTable t({"error_type", "level", "mae", "rmse", "r2"});
    for (const auto &r : rows) {
        t.row({r.error_type, format17(r.level), format17(r.report.mae), format17(r.report.rmse), format17(r.report.r2)});
    }
    return t;
}

inline CsvTable bic_table(const std::vector<KernelComparisonRow> &rows) {
    CsvTable t({"kernel", "L", "m", "n", "BIC", "status"});
    for (const auto &r : rows) {
        t.row({std::string(family_name(r.bic.family)), r.failed ? "" : format17(r.bic.log_marginal),
               std::to_string(r.bic.m), std::to_string(r.bic.n), r.failed ? "" : format17(r.bic.bic),
               r.failed ? "failed: " + r.failure : "ok"});
    }
    return t;
}

inline CsvTable metrics_table(const std::vector<std::pair<std::string, EvalReport>> &rows) {
    CsvTable t({"model", "mae", "rmse", "r2", "n"});
    for (const auto &[name, r] : rows) {
        t.row({name, format17(r.mae), format17(r.rmse), format17(r.r2), std::to_string(r.n)});
    }
    return t;
}

} // namespace gpcal
