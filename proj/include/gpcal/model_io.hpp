#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gpcal/errors.hpp"
#include "gpcal/gp.hpp"

namespace gpcal {

inline constexpr const char *kModelHeader = "gpcal-model v1";

/// Shortest round-trip-safe text for a double: 17 significant digits.
inline std::string format17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(std::string_view text) {
    double v = 0.0;
    const char *first = text.data();
    const char *last = first + text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw InvalidInput("not a number: '" + std::string(text) + "'");
    return v;
}

namespace detail {

inline void write_row(std::ostream &os, const std::string &key, const Eigen::RowVectorXd &values) {
    os << key;
    for (Eigen::Index i = 0; i < values.size(); ++i) os << ' ' << format17(values[i]);
    os << '\n';
}

inline std::vector<double> parse_numbers(std::istringstream &line) {
    std::vector<double> out;
    std::string tok;
    while (line >> tok) out.push_back(parse_double(tok));
    return out;
}

} // namespace detail

/// Plain-text key/value model format:
///
///     gpcal-model v1
///     kernel <token>
///     log_params <v>...
///     noise_std <v>
///     target_offset <v>
///     jitter <v>
///     transform_min <v>...
///     transform_max <v>...
///     n <rows>
///     dim <cols>
///     input <v>...        (n lines)
///     alpha <v>...        (n values)
inline void save_model(std::ostream &os, const TrainedModel &model) {
    os << kModelHeader << '\n';
    os << "kernel " << family_token(model.kernel().family()) << '\n';
    const auto lp = model.kernel().log_params();
    detail::write_row(os, "log_params", Eigen::Map<const Eigen::RowVectorXd>(lp.data(), static_cast<Eigen::Index>(lp.size())));
    os << "noise_std " << format17(model.noise_std()) << '\n';
    os << "target_offset " << format17(model.target_offset()) << '\n';
    os << "jitter " << format17(model.jitter()) << '\n';
    detail::write_row(os, "transform_min", model.input_transform().min());
    detail::write_row(os, "transform_max", model.input_transform().max());
    os << "n " << model.size() << '\n';
    os << "dim " << model.dim() << '\n';
    for (Eigen::Index i = 0; i < model.size(); ++i) detail::write_row(os, "input", model.train_inputs().row(i));
    detail::write_row(os, "alpha", model.alpha().transpose());
}

inline void save_model(const std::string &path, const TrainedModel &model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw SchemaError("cannot open model file for writing: " + path);
    save_model(os, model);
    if (!os) throw SchemaError("failed writing model file: " + path);
}

inline TrainedModel load_model(std::istream &is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty model file");
    if (line != kModelHeader) {
        if (line.rfind("gpcal-model", 0) == 0) throw FormatError("unsupported model version: '" + line + "'");
        throw FormatError("not a gpcal model file");
    }
    std::map<std::string, std::vector<double>> fields;
    std::string family_tok;
    std::vector<double> inputs;
    std::size_t input_rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        try {
            if (key == "kernel") {
                ls >> family_tok;
            } else if (key == "input") {
                auto row = detail::parse_numbers(ls);
                inputs.insert(inputs.end(), row.begin(), row.end());
                ++input_rows;
            } else {
                fields[key] = detail::parse_numbers(ls);
            }
        } catch (const InvalidInput &e) {
            throw FormatError("malformed model field '" + key + "': " + e.what());
        }
    }
    auto scalar = [&](const std::string &key) {
        auto it = fields.find(key);
        if (it == fields.end() || it->second.size() != 1) throw FormatError("model file missing scalar '" + key + "'");
        return it->second[0];
    };
    auto vec = [&](const std::string &key) -> const std::vector<double> & {
        auto it = fields.find(key);
        if (it == fields.end()) throw FormatError("model file missing field '" + key + "'");
        return it->second;
    };
    const auto family = parse_family(family_tok);
    if (!family) throw FormatError("unknown kernel family '" + family_tok + "'");
    const auto n = static_cast<Eigen::Index>(scalar("n"));
    const auto dim = static_cast<Eigen::Index>(scalar("dim"));
    const auto &alpha = vec("alpha");
    const auto &tmin = vec("transform_min");
    const auto &tmax = vec("transform_max");
    if (n < 1 || dim < 1 || static_cast<Eigen::Index>(input_rows) != n ||
        static_cast<Eigen::Index>(inputs.size()) != n * dim || static_cast<Eigen::Index>(alpha.size()) != n ||
        static_cast<Eigen::Index>(tmin.size()) != dim || static_cast<Eigen::Index>(tmax.size()) != dim) {
        throw FormatError("model file has inconsistent dimensions");
    }
    try {
        Eigen::MatrixXd X = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            inputs.data(), n, dim);
        Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(alpha.data(), n);
        NormalizationTransform transform(Eigen::Map<const Eigen::RowVectorXd>(tmin.data(), dim),
                                         Eigen::Map<const Eigen::RowVectorXd>(tmax.data(), dim));
        const auto kernel = KernelSpec::from_log_params(*family, vec("log_params"));
        return restore_model(std::move(X), std::move(a), kernel, scalar("noise_std"), scalar("target_offset"),
                             scalar("jitter"), std::move(transform));
    } catch (const InvalidInput &e) {
        throw FormatError(std::string("model file holds invalid values: ") + e.what());
    }
}

inline TrainedModel load_model(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw SchemaError("cannot open model file: " + path);
    return load_model(is);
}

} // namespace gpcal
