// gpcal: hot-wire anemometer calibration with exact GP regression.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gpcal/gpcal.hpp"

namespace fs = std::filesystem;
using namespace gpcal;

namespace {

enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kConfig = 2,
    kSchema = 3,
    kNumerical = 4,
    kModelFormat = 5,
    kRejected = 6,
};

struct Options {
    std::string data;
    std::string synth_config;
    std::string kernel = "exp";
    std::string split;
    std::uint64_t seed = 0;
    int repeats = 100;
    double level = 0.95;
    int restarts = 5;
    int max_iters = 200;
    double grad_tol = 1e-5;
    std::string bic_base = "e";
    std::string out = ".";
    std::string model;
    bool reuse_hypers = false;
    std::vector<double> random_levels{0.0, 0.1, 0.2, 0.5, 1.0};
    std::vector<double> systematic_levels{0.0, 0.1, 0.2, 0.5, 1.0};
    std::string error_dist = "uniform";
    bool seed_given = false;
};

// --split parsing

struct SplitArg {
    enum Kind { Random, Kfold, Byrun } kind = Random;
    double fraction = 0.7;
    int k = 6;
    std::vector<std::string> runs;
};

std::vector<std::string> split_list(const std::string &s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

SplitArg parse_split(const std::string &text) {
    SplitArg a;
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    try {
        if (kind == "random") {
            a.kind = SplitArg::Random;
            if (!arg.empty()) a.fraction = parse_double(arg);
            if (!(a.fraction > 0.0 && a.fraction < 1.0)) throw ConfigError("random split fraction must be in (0, 1)");
        } else if (kind == "kfold") {
            a.kind = SplitArg::Kfold;
            if (!arg.empty()) a.k = std::stoi(arg);
            if (a.k < 2) throw ConfigError("kfold needs k >= 2");
        } else if (kind == "byrun") {
            a.kind = SplitArg::Byrun;
            a.runs = split_list(arg);
        } else {
            throw ConfigError("unknown split '" + text + "' (expected random:FRAC, kfold:K or byrun[:ID,...])");
        }
    } catch (const InvalidInput &) {
        throw ConfigError("malformed split argument '" + text + "'");
    } catch (const std::invalid_argument &) {
        throw ConfigError("malformed split argument '" + text + "'");
    } catch (const std::out_of_range &) {
        throw ConfigError("malformed split argument '" + text + "'");
    }
    return a;
}

KernelFamily parse_kernel(const std::string &token) {
    if (auto f = parse_family(token)) return *f;
    throw ConfigError("unknown kernel '" + token + "' (expected se, exp, matern52 or rq)");
}

LogBase parse_base(const std::string &s) {
    if (s == "e") return LogBase::Natural;
    if (s == "10") return LogBase::Base10;
    throw ConfigError("--bic-base must be e or 10");
}

OptimizeConfig optimize_config(const Options &o) {
    OptimizeConfig c;
    c.restarts = o.restarts;
    c.max_iters = o.max_iters;
    c.grad_tol = o.grad_tol;
    c.init_seed = o.seed;
    c.validate();
    return c;
}

void check_level(double level) {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("--level must be in (0, 1)");
}

SynthConfig load_synth_config(const std::string &path) {
    SynthConfig c;
    if (path.empty()) return c;
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open synth config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("synth config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
    try {
        for (const auto &[key, value] : j.items()) {
            if (key == "run_temps") c.run_temps = value.get<std::vector<double>>();
            else if (key == "speed_steps") c.speed_steps = value.get<int>();
            else if (key == "speed_min") c.speed_min = value.get<double>();
            else if (key == "speed_max") c.speed_max = value.get<double>();
            else if (key == "samples_per_step") c.samples_per_step = value.get<int>();
            else if (key == "wire_temp") c.wire_temp = value.get<double>();
            else if (key == "king_a") c.king_a = value.get<double>();
            else if (key == "king_b") c.king_b = value.get<double>();
            else if (key == "king_n") c.king_n = value.get<double>();
            else if (key == "voltage_noise") c.voltage_noise = value.get<double>();
            else if (key == "speed_noise") c.speed_noise = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else throw ConfigError("unknown synth config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("synth config has a value of the wrong type: ") + e.what());
    }
    c.validate();
    return c;
}

CalibrationDataset load_dataset(const Options &o) {
    if (!o.data.empty()) return load_csv(o.data);
    if (!o.synth_config.empty()) return synthesize(load_synth_config(o.synth_config));
    throw ConfigError("no dataset: pass --data PATH or --synth-config PATH");
}

fs::path out_dir(const Options &o) {
    fs::path dir(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + o.out + ": " + ec.message());
    return dir;
}

void emit(const std::string &title, const CsvTable &table, const fs::path &path) {
    table.write_csv(path.string());
    std::cout << title << "\n";
    table.write_text(std::cout);
    std::cout << "\n";
}

CsvTable hyper_table(const KernelSpec &k, double noise_std, double log_marginal, double bic_value) {
    CsvTable t({"kernel", "signal_std", "length_scale", "shape_alpha", "noise_std", "log_marginal", "bic"});
    t.row({std::string(family_token(k.family())), format17(k.params().signal_std), format17(k.params().length_scale),
           k.family() == KernelFamily::RationalQuadratic ? format17(k.params().shape_alpha) : "", format17(noise_std),
           format17(log_marginal), format17(bic_value)});
    return t;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_train(const Options &o) {
    check_level(o.level);
    const auto family = parse_kernel(o.kernel);
    const auto base = parse_base(o.bic_base);
    const auto cfg = optimize_config(o);
    const auto ds = load_dataset(o);
    if (ds.size() < 10) throw InvalidInput("training needs at least 10 records");
    const auto dir = out_dir(o);

    CalibrationDataset train = ds;
    std::optional<CalibrationDataset> test;
    if (!o.split.empty()) {
        const auto sa = parse_split(o.split);
        if (sa.kind != SplitArg::Random) throw ConfigError("train supports only --split random:FRAC");
        auto tt = split(ds, RandomFraction{sa.fraction, o.seed}).front();
        save_csv((dir / "train.csv").string(), tt.train);
        save_csv((dir / "test.csv").string(), tt.test);
        train = std::move(tt.train);
        test = std::move(tt.test);
    }

    const auto outcome = train_model(train, family, cfg, o.level, base);
    save_model((dir / "model.gpm").string(), outcome.model);

    CsvTable report(concat({"set"}, report_header()));
    report.row(concat({"train"}, report_cells(outcome.in_sample)));
    if (test) {
        const auto ev = evaluate_model(outcome.model, *test, o.level);
        report.row(concat({"test"}, report_cells(ev.report)));
        predictions_table(ev.points).write_csv((dir / "predictions.csv").string());
    }
    emit("hyperparameters", hyper_table(outcome.model.kernel(), outcome.model.noise_std(),
                                        outcome.model.log_marginal(), outcome.bic),
         dir / "hyperparameters.csv");
    emit("report", report, dir / "train_report.csv");
    std::cout << "model written to " << (dir / "model.gpm").string() << "\n";
    return kOk;
}

int cmd_evaluate(const Options &o) {
    check_level(o.level);
    if (o.model.empty()) throw ConfigError("evaluate needs --model PATH");
    const auto model = load_model(o.model);
    const auto test = load_dataset(o);
    const auto dir = out_dir(o);
    const auto ev = evaluate_model(model, test, o.level);
    predictions_table(ev.points).write_csv((dir / "predictions.csv").string());
    CsvTable report(report_header());
    report.row(report_cells(ev.report));
    emit("evaluation", report, dir / "eval_report.csv");
    return kOk;
}

int cmd_crossval(const Options &o) {
    check_level(o.level);
    CrossvalOptions opts;
    opts.family = parse_kernel(o.kernel);
    opts.optimize = optimize_config(o);
    opts.level = o.level;
    opts.reuse_hypers = o.reuse_hypers;
    const auto sa = parse_split(o.split.empty() ? "random:0.7" : o.split);
    const auto ds = load_dataset(o);
    const auto dir = out_dir(o);

    if (sa.kind == SplitArg::Byrun) {
        const auto res = crossval_byrun(ds, sa.runs, o.seed, opts);
        emit("folds", folds_table(res.folds), dir / "folds.csv");
        CsvTable agg({"group", "mean_rmse"});
        agg.row({"train", format17(res.mean_train_rmse)});
        agg.row({"interpolation", std::isnan(res.mean_interpolation_rmse) ? "" : format17(res.mean_interpolation_rmse)});
        agg.row({"extrapolation", std::isnan(res.mean_extrapolation_rmse) ? "" : format17(res.mean_extrapolation_rmse)});
        emit("by-run summary", agg, dir / "byrun_summary.csv");
        return kOk;
    }
    std::vector<FoldResult> folds;
    if (sa.kind == SplitArg::Random) {
        if (o.repeats < 1) throw ConfigError("--repeats must be >= 1");
        folds = crossval_random(ds, sa.fraction, o.repeats, o.seed, opts);
    } else {
        folds = crossval_kfold(ds, sa.k, o.seed, opts);
    }
    emit("folds", folds_table(folds), dir / "folds.csv");
    emit("test summary", summary_table(summarize_test(folds)), dir / "summary.csv");
    return kOk;
}

int cmd_sensitivity(const Options &o) {
    check_level(o.level);
    ErrorDistribution dist;
    if (o.error_dist == "uniform") dist = ErrorDistribution::Uniform;
    else if (o.error_dist == "gaussian") dist = ErrorDistribution::Gaussian;
    else throw ConfigError("--error-dist must be uniform or gaussian");
    for (double a : o.random_levels) {
        if (!(a >= 0.0)) throw ConfigError("random error levels must be >= 0");
    }
    const auto dir = out_dir(o);
    const auto ds = load_dataset(o);

    std::optional<TrainedModel> model;
    CalibrationDataset test;
    if (!o.model.empty()) {
        model = load_model(o.model);
        test = ds;
    } else {
        const auto sa = parse_split(o.split.empty() ? "random:0.7" : o.split);
        if (sa.kind != SplitArg::Random) throw ConfigError("sensitivity supports only --split random:FRAC");
        auto tt = split(ds, RandomFraction{sa.fraction, o.seed}).front();
        model = train_model(tt.train, parse_kernel(o.kernel), optimize_config(o), o.level).model;
        test = std::move(tt.test);
    }
    const auto rows = sensitivity(*model, test, o.random_levels, o.systematic_levels, o.seed, dist, o.level);
    emit("sensitivity", sensitivity_table(rows), dir / "sensitivity.csv");
    return kOk;
}

int cmd_compare(const Options &o) {
    check_level(o.level);
    const auto base = parse_base(o.bic_base);
    const auto cfg = optimize_config(o);
    const auto sa = parse_split(o.split.empty() ? "random:0.7" : o.split);
    if (sa.kind != SplitArg::Random) throw ConfigError("compare supports only --split random:FRAC");
    const auto ds = load_dataset(o);
    const auto dir = out_dir(o);
    const auto res = compare(ds, kAllFamilies, cfg, base, sa.fraction, o.seed, o.level);
    emit("BIC", bic_table(res.bic_rows), dir / "bic.csv");
    emit("test metrics", metrics_table(res.test_metrics), dir / "metrics.csv");
    const bool any_ok = std::any_of(res.bic_rows.begin(), res.bic_rows.end(), [](const auto &r) { return !r.failed; });
    if (!any_ok) throw NumericalFailure("every kernel family failed");
    return kOk;
}

int cmd_synth(const Options &o) {
    auto cfg = load_synth_config(o.synth_config);
    if (o.seed_given) cfg.seed = o.seed;
    cfg.validate();
    const auto ds = synthesize(cfg);
    const auto dir = out_dir(o);
    const auto path = dir / "synthetic.csv";
    save_csv(path.string(), ds);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto &r : ds.records) {
        lo = std::min(lo, r.wind_speed);
        hi = std::max(hi, r.wind_speed);
    }
    std::cout << "runs " << ds.run_ids().size() << ", points " << ds.size() << ", speed range [" << lo << ", " << hi
              << "] m/s\n"
              << "written to " << path.string() << "\n";
    return kOk;
}

int run_guarded(const std::function<int()> &fn) {
    try {
        return fn();
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const ParseError &e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kSchema;
    } catch (const SchemaError &e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kSchema;
    } catch (const NumericalFailure &e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const FormatError &e) {
        std::cerr << "model format error: " << e.what() << "\n";
        return kModelFormat;
    } catch (const InvalidInput &e) {
        std::cerr << "rejected input: " << e.what() << "\n";
        return kRejected;
    } catch (const DegenerateError &e) {
        std::cerr << "degenerate input: " << e.what() << "\n";
        return kRejected;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUnexpected;
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Hot-wire anemometer calibration with Gaussian process regression"};
    app.require_subcommand(1);
    Options o;

    auto add_data = [&](CLI::App *c) {
        c->add_option("--data", o.data, "Calibration CSV (voltage,air_temp,wind_speed,run_id)");
        c->add_option("--synth-config", o.synth_config, "JSON synthetic-data config used when --data is absent");
    };
    auto add_seed = [&](CLI::App *c) {
        c->add_option("--seed", o.seed, "Seed for splits, error draws and optimizer starts")
            ->each([&](const std::string &) { o.seed_given = true; });
    };
    auto add_opt = [&](CLI::App *c) {
        c->add_option("--restarts", o.restarts, "Optimizer restarts")->capture_default_str();
        c->add_option("--max-iters", o.max_iters, "Optimizer iteration cap per restart")->capture_default_str();
        c->add_option("--grad-tol", o.grad_tol, "Projected-gradient infinity-norm tolerance")->capture_default_str();
    };
    auto add_common = [&](CLI::App *c) {
        add_data(c);
        add_seed(c);
        c->add_option("--level", o.level, "Credible level")->capture_default_str();
        c->add_option("--out", o.out, "Output directory")->capture_default_str();
    };

    auto *train = app.add_subcommand("train", "Optimize hyperparameters, fit and save a model");
    add_common(train);
    add_opt(train);
    train->add_option("--kernel", o.kernel, "se, exp, matern52 or rq")->capture_default_str();
    train->add_option("--split", o.split, "Hold out a test set: random:FRAC");
    train->add_option("--bic-base", o.bic_base, "Log base for BIC: e or 10")->capture_default_str();

    auto *evaluate = app.add_subcommand("evaluate", "Score a saved model on a dataset");
    add_common(evaluate);
    evaluate->add_option("--model", o.model, "Model file")->required();

    auto *crossval = app.add_subcommand("crossval", "Repeated random, k-fold or leave-one-run-out validation");
    add_common(crossval);
    add_opt(crossval);
    crossval->add_option("--kernel", o.kernel, "se, exp, matern52 or rq")->capture_default_str();
    crossval->add_option("--split", o.split, "random:FRAC, kfold:K or byrun[:ID,...]")->capture_default_str();
    crossval->add_option("--repeats", o.repeats, "Repeats for random splits")->capture_default_str();
    crossval->add_flag("--reuse-hypers", o.reuse_hypers, "Optimize once, then refit with those hyperparameters");

    auto *sens = app.add_subcommand("sensitivity", "Test-set air-temperature error sensitivity");
    add_common(sens);
    add_opt(sens);
    sens->add_option("--model", o.model, "Model file; --data is then the clean test set");
    sens->add_option("--kernel", o.kernel, "Kernel when training here")->capture_default_str();
    sens->add_option("--split", o.split, "random:FRAC when training here");
    sens->add_option("--random-levels", o.random_levels, "Random error amplitudes (deg C)")
        ->delimiter(',')
        ->capture_default_str();
    sens->add_option("--systematic-levels", o.systematic_levels, "Systematic offsets (deg C)")
        ->delimiter(',')
        ->capture_default_str();
    sens->add_option("--error-dist", o.error_dist, "uniform or gaussian")->capture_default_str();

    auto *cmp = app.add_subcommand("compare", "BIC kernel comparison plus held-out metrics and a linear baseline");
    add_common(cmp);
    add_opt(cmp);
    cmp->add_option("--bic-base", o.bic_base, "Log base for BIC: e or 10")->capture_default_str();
    cmp->add_option("--split", o.split, "random:FRAC for held-out metrics");

    auto *synth = app.add_subcommand("synth", "Write a synthetic King's-law dataset");
    synth->add_option("--synth-config", o.synth_config, "JSON config (defaults when absent)");
    add_seed(synth);
    synth->add_option("--out", o.out, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kConfig;
    }

    if (*train) return run_guarded([&] { return cmd_train(o); });
    if (*evaluate) return run_guarded([&] { return cmd_evaluate(o); });
    if (*crossval) return run_guarded([&] { return cmd_crossval(o); });
    if (*sens) return run_guarded([&] { return cmd_sensitivity(o); });
    if (*cmp) return run_guarded([&] { return cmd_compare(o); });
    if (*synth) return run_guarded([&] { return cmd_synth(o); });
    return kUnexpected;
}
