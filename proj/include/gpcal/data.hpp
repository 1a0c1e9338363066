#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gpcal/errors.hpp"
#include "gpcal/model_io.hpp"
#include "gpcal/normalization.hpp"

namespace gpcal {

/// One hot-wire sample: raw voltage (V), reference air temperature (°C),
/// reference wind speed (m/s) and the run it belongs to.
struct CalibrationRecord {
    double voltage = 0.0;
    double air_temp = 0.0;
    double wind_speed = 0.0;
    std::string run_id;

    friend bool operator==(const CalibrationRecord &, const CalibrationRecord &) = default;
};

struct CalibrationDataset {
    std::vector<CalibrationRecord> records;
    std::string provenance;

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }
    [[nodiscard]] bool empty() const noexcept { return records.empty(); }

    /// Distinct run ids in order of first appearance.
    [[nodiscard]] std::vector<std::string> run_ids() const {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (const auto &r : records) {
            if (seen.insert(r.run_id).second) out.push_back(r.run_id);
        }
        return out;
    }

    /// Raw input matrix with columns (voltage, air_temp).
    [[nodiscard]] Eigen::MatrixXd inputs() const {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(records.size()), 2);
        for (std::size_t i = 0; i < records.size(); ++i) {
            X(static_cast<Eigen::Index>(i), 0) = records[i].voltage;
            X(static_cast<Eigen::Index>(i), 1) = records[i].air_temp;
        }
        return X;
    }

    [[nodiscard]] Eigen::VectorXd targets() const {
        Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
        for (std::size_t i = 0; i < records.size(); ++i) y[static_cast<Eigen::Index>(i)] = records[i].wind_speed;
        return y;
    }
};

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string> &csv_columns() {
    static const std::vector<std::string> cols{"voltage", "air_temp", "wind_speed", "run_id"};
    return cols;
}

namespace detail {

inline std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

} // namespace detail

/// Reads `voltage,air_temp,wind_speed,run_id` CSV. Lines starting with '#' and blank
/// lines are skipped; columns may appear in any order. Row numbers in diagnostics are
/// 1-based file line numbers.
inline CalibrationDataset load_csv(std::istream &is, std::string provenance = "<stream>") {
    CalibrationDataset ds;
    ds.provenance = std::move(provenance);
    std::string line;
    std::size_t lineno = 0;
    std::map<std::string, std::size_t> index;
    bool have_header = false;
    while (std::getline(is, line)) {
        ++lineno;
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        const std::string t = detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto cells = detail::split_csv_line(t);
        if (!have_header) {
            for (std::size_t c = 0; c < cells.size(); ++c) index[cells[c]] = c;
            for (const auto &col : csv_columns()) {
                if (!index.count(col)) throw SchemaError("missing column '" + col + "' in " + ds.provenance);
            }
            have_header = true;
            continue;
        }
        auto cell = [&](const std::string &col) -> const std::string & {
            const auto c = index.at(col);
            if (c >= cells.size()) {
                throw ParseError("row " + std::to_string(lineno) + ": missing value for '" + col + "'", lineno, col);
            }
            return cells[c];
        };
        auto number = [&](const std::string &col) {
            double v;
            try {
                v = parse_double(cell(col));
            } catch (const InvalidInput &) {
                throw ParseError("row " + std::to_string(lineno) + ", column '" + col + "': cannot parse '" +
                                     cell(col) + "'",
                                 lineno, col);
            }
            if (!std::isfinite(v)) {
                throw ParseError("row " + std::to_string(lineno) + ", column '" + col + "': non-finite value", lineno,
                                 col);
            }
            return v;
        };
        CalibrationRecord r;
        r.voltage = number("voltage");
        r.air_temp = number("air_temp");
        r.wind_speed = number("wind_speed");
        r.run_id = cell("run_id");
        if (r.wind_speed < 0.0) {
            throw ParseError("row " + std::to_string(lineno) + ": negative wind_speed " + format17(r.wind_speed),
                             lineno, "wind_speed");
        }
        if (r.run_id.empty()) throw ParseError("row " + std::to_string(lineno) + ": empty run_id", lineno, "run_id");
        ds.records.push_back(std::move(r));
    }
    if (!have_header) throw SchemaError("no header row in " + ds.provenance);
    return ds;
}

inline CalibrationDataset load_csv(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SchemaError("cannot open data file: " + path);
    return load_csv(is, path);
}

inline void save_csv(std::ostream &os, const CalibrationDataset &ds) {
    if (!ds.provenance.empty()) os << "# " << ds.provenance << '\n';
    os << "voltage,air_temp,wind_speed,run_id\n";
    for (const auto &r : ds.records) {
        os << format17(r.voltage) << ',' << format17(r.air_temp) << ',' << format17(r.wind_speed) << ',' << r.run_id
           << '\n';
    }
}

inline void save_csv(const std::string &path, const CalibrationDataset &ds) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SchemaError("cannot open data file for writing: " + path);
    save_csv(os, ds);
}

// ---------------------------------------------------------------------------
// Normalization

struct NormalizedData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

/// Transform from the given (training) records only.
inline NormalizationTransform fit_transform(const CalibrationDataset &train) {
    if (train.empty()) throw InvalidInput("cannot normalize against an empty training set");
    return NormalizationTransform::from_inputs(train.inputs());
}

inline NormalizedData normalize(const CalibrationDataset &ds, const NormalizationTransform &transform) {
    return {transform.apply(ds.inputs()), ds.targets()};
}

// ---------------------------------------------------------------------------
// Splits

struct RandomFraction {
    double train_fraction = 0.7;
    std::uint64_t seed = 0;
};

struct KFold {
    int k = 6;
    std::uint64_t seed = 0;
};

struct ByRun {
    std::vector<std::string> held_out;
};

using SplitSpec = std::variant<RandomFraction, KFold, ByRun>;

struct TrainTest {
    CalibrationDataset train;
    CalibrationDataset test;
};

namespace detail {

inline std::uint64_t bounded(std::mt19937_64 &rng, std::uint64_t range) {
    // Rejection sampling keeps the draw unbiased and platform-independent.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t v;
    do {
        v = rng();
    } while (v >= limit);
    return v % range;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[bounded(rng, i)]);
    return idx;
}

inline CalibrationDataset subset(const CalibrationDataset &ds, const std::vector<std::size_t> &idx,
                                 const std::string &tag) {
    CalibrationDataset out;
    out.provenance = ds.provenance + " [" + tag + "]";
    out.records.reserve(idx.size());
    for (auto i : idx) out.records.push_back(ds.records[i]);
    return out;
}

} // namespace detail

/// Partitions the dataset. RandomFraction and ByRun yield one pair, KFold yields k.
inline std::vector<TrainTest> split(const CalibrationDataset &ds, const SplitSpec &spec) {
    const std::size_t n = ds.size();
    return std::visit(
        [&](const auto &s) -> std::vector<TrainTest> {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, RandomFraction>) {
                if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0)) {
                    throw InvalidInput("train fraction must lie in (0, 1)");
                }
                const auto idx = detail::shuffled_indices(n, s.seed);
                // Held-out size rounds to nearest: 0.7 of 4112 gives 2878 / 1234.
                auto n_test = static_cast<std::size_t>(std::llround((1.0 - s.train_fraction) * double(n)));
                if (n >= 2) n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
                const std::size_t n_train = n - std::min(n, n_test);
                std::vector<std::size_t> tr(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
                std::vector<std::size_t> te(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
                return {{detail::subset(ds, tr, "train"), detail::subset(ds, te, "test")}};
            } else if constexpr (std::is_same_v<S, KFold>) {
                if (s.k < 2) throw InvalidInput("k-fold requires k >= 2");
                if (static_cast<std::size_t>(s.k) > n) throw InvalidInput("k-fold requires at least k records");
                const auto idx = detail::shuffled_indices(n, s.seed);
                const auto k = static_cast<std::size_t>(s.k);
                std::vector<TrainTest> out;
                for (std::size_t f = 0; f < k; ++f) {
                    const std::size_t b = f * n / k, e = (f + 1) * n / k;
                    std::vector<std::size_t> tr, te;
                    for (std::size_t i = 0; i < n; ++i) (i >= b && i < e ? te : tr).push_back(idx[i]);
                    const auto tag = "fold " + std::to_string(f + 1) + "/" + std::to_string(k);
                    out.push_back({detail::subset(ds, tr, tag + " train"), detail::subset(ds, te, tag + " test")});
                }
                return out;
            } else {
                if (s.held_out.empty()) throw InvalidInput("by-run split needs at least one held-out run");
                const auto runs = ds.run_ids();
                const std::set<std::string> held(s.held_out.begin(), s.held_out.end());
                for (const auto &id : held) {
                    if (std::find(runs.begin(), runs.end(), id) == runs.end()) {
                        throw InvalidInput("held-out run '" + id + "' is not in the dataset");
                    }
                }
                std::vector<std::size_t> tr, te;
                for (std::size_t i = 0; i < n; ++i) (held.count(ds.records[i].run_id) ? te : tr).push_back(i);
                return {{detail::subset(ds, tr, "train"), detail::subset(ds, te, "held-out")}};
            }
        },
        spec);
}

// ---------------------------------------------------------------------------
// Temperature-error injection

enum class ErrorDistribution { Uniform, Gaussian };

/// Adds an independent seeded draw to every air_temp: uniform on [−a, a] by default,
/// or N(0, a²) with ErrorDistribution::Gaussian. Draws for a given seed are the same
/// unit variates scaled by the amplitude.
inline CalibrationDataset inject_random_error(const CalibrationDataset &ds, double amplitude, std::uint64_t seed,
                                              ErrorDistribution dist = ErrorDistribution::Uniform) {
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw InvalidInput("error amplitude must be >= 0");
    CalibrationDataset out = ds;
    if (amplitude == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto &r : out.records) {
        const double unit = dist == ErrorDistribution::Uniform
                                ? 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0
                                : normal(rng);
        r.air_temp += amplitude * unit;
    }
    return out;
}

inline CalibrationDataset inject_systematic_error(const CalibrationDataset &ds, double offset) {
    CalibrationDataset out = ds;
    for (auto &r : out.records) r.air_temp += offset;
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic hot-wire surrogate (King's law)

struct SynthConfig {
    std::vector<double> run_temps{19.0, 20.0, 22.0, 24.0, 26.0, 28.0, 30.0};
    int speed_steps = 30;
    double speed_min = 0.0;
    double speed_max = 21.0;
    int samples_per_step = 8;
    double wire_temp = 220.0;
    double king_a = 1.0;
    double king_b = 0.8;
    double king_n = 0.45;
    double voltage_noise = 0.005;
    double speed_noise = 0.05;
    std::uint64_t seed = 0;

    void validate() const {
        if (run_temps.empty()) throw ConfigError("synth: at least one run temperature is required");
        for (double t : run_temps) {
            if (!std::isfinite(t)) throw ConfigError("synth: run temperatures must be finite");
        }
        if (!(wire_temp > *std::max_element(run_temps.begin(), run_temps.end()))) {
            throw ConfigError("synth: wire temperature must exceed every air temperature");
        }
        if (speed_steps < 1 || samples_per_step < 1) throw ConfigError("synth: speed_steps and samples_per_step must be >= 1");
        if (!(speed_min >= 0.0 && speed_max >= speed_min)) throw ConfigError("synth: need 0 <= speed_min <= speed_max");
        if (!(king_a > 0.0 && king_b > 0.0 && king_n > 0.0)) throw ConfigError("synth: King coefficients must be > 0");
        if (!(voltage_noise >= 0.0 && speed_noise >= 0.0)) throw ConfigError("synth: noise levels must be >= 0");
    }
};

/// Bridge voltage sqrt((A + B·U^n)(Tw − Ta)).
inline double kings_law_voltage(const SynthConfig &cfg, double speed, double air_temp) {
    return std::sqrt((cfg.king_a + cfg.king_b * std::pow(speed, cfg.king_n)) * (cfg.wire_temp - air_temp));
}

inline std::string run_label(double temp) {
    std::ostringstream os;
    os << "T" << temp;
    return os.str();
}

/// One run per temperature; each run steps the speed linearly from speed_min to
/// speed_max and records samples_per_step noisy samples per step.
inline CalibrationDataset synthesize(const SynthConfig &cfg) {
    cfg.validate();
    CalibrationDataset ds;
    std::ostringstream prov;
    prov << "synthetic King's-law surrogate (seed " << cfg.seed << ", A=" << cfg.king_a << ", B=" << cfg.king_b
         << ", n=" << cfg.king_n << ", Tw=" << cfg.wire_temp << ")";
    ds.provenance = prov.str();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double temp : cfg.run_temps) {
        const std::string id = run_label(temp);
        for (int s = 0; s < cfg.speed_steps; ++s) {
            const double speed = cfg.speed_steps == 1 ? cfg.speed_min
                                                      : cfg.speed_min + (cfg.speed_max - cfg.speed_min) * s /
                                                                            (cfg.speed_steps - 1);
            for (int k = 0; k < cfg.samples_per_step; ++k) {
                CalibrationRecord r;
                r.air_temp = temp;
                r.voltage = kings_law_voltage(cfg, speed, temp) + cfg.voltage_noise * normal(rng);
                r.wind_speed = std::max(0.0, speed + cfg.speed_noise * normal(rng));
                r.run_id = id;
                ds.records.push_back(std::move(r));
            }
        }
    }
    return ds;
}

/// Mean air temperature per run, used as the run's nominal temperature.
inline std::map<std::string, double> run_temperatures(const CalibrationDataset &ds) {
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto &r : ds.records) {
        auto &[sum, count] = acc[r.run_id];
        sum += r.air_temp;
        ++count;
    }
    std::map<std::string, double> out;
    for (const auto &[id, sc] : acc) out[id] = sc.first / static_cast<double>(sc.second);
    return out;
}

} // namespace gpcal
