#pragma once

// Text formats: measurement logs (CSV and JSON), estimation results, iterate
// and per-step traces. Doubles are written in shortest round-trip form, so a
// file read back reproduces the in-memory values exactly.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "sraf/estimator.hpp"

#ifndef SRAF_VERSION
#define SRAF_VERSION "0.0.0"
#endif

namespace sraf::io {

using nlohmann::json;

inline constexpr std::string_view tool_version = SRAF_VERSION;

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::string_view what) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
        text.remove_suffix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw DataError(std::string(what) + ": '" + std::string(text) + "' is not a number");
    }
    return v;
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Object keys serialize in sorted order, so equal configs hash equally.
inline std::string config_hash(const json& config) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(config.dump());
    return os.str();
}

inline json run_metadata(const json& config, std::uint64_t seed) {
    return {{"tool_version", std::string(tool_version)},
            {"config_hash", config_hash(config)},
            {"seed", seed}};
}

inline json to_json(const Vector& v) {
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
    return rows;
}

inline Vector vector_from_json(const json& j, std::string_view what) {
    if (j.is_number()) return Vector::Constant(1, j.get<double>());
    if (!j.is_array()) throw ConfigError(std::string(what) + ": expected a number or an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(std::string(what) + ": non-numeric entry");
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline json parse_json(const std::string& text, std::string_view what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Metadata lines: "# key=<json value>", one per top-level key.

inline void write_metadata_lines(std::ostream& os, const json& meta) {
    for (const auto& [key, value] : meta.items()) os << "# " << key << '=' << value.dump() << '\n';
}

inline void read_metadata_line(std::string_view line, json& meta) {
    line.remove_prefix(1);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) return;
    const std::string key(line.substr(0, eq));
    const std::string value(line.substr(eq + 1));
    const json parsed = json::parse(value, nullptr, false);
    meta[key] = parsed.is_discarded() ? json(value) : parsed;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline std::string join_header(std::string_view first, std::string_view prefix, Index count) {
    std::string s(first);
    for (Index i = 1; i <= count; ++i) s += "," + std::string(prefix) + std::to_string(i);
    return s;
}

// ---------------------------------------------------------------------------
// MeasurementLog

inline std::string log_to_csv(const MeasurementLog& log, const json& extra_meta = json::object()) {
    std::ostringstream os;
    json meta = log.metadata;
    for (const auto& [key, value] : extra_meta.items()) meta[key] = value;
    write_metadata_lines(os, meta);
    os << join_header("k", "z_", log.m);
    for (Index j = 1; j <= log.d; ++j) os << ",u_" << j;
    os << '\n';
    for (std::size_t k = 0; k < log.size(); ++k) {
        os << (k + 1);
        for (Index j = 0; j < log.m; ++j) os << ',' << format_double(log.z[k](j));
        for (Index j = 0; j < log.d; ++j) os << ',' << format_double(log.u[k](j));
        os << '\n';
    }
    return os.str();
}

inline MeasurementLog log_from_csv(const std::string& text) {
    MeasurementLog log;
    std::istringstream is(text);
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            read_metadata_line(line, log.metadata);
            continue;
        }
        const auto cells = split_csv(line);
        if (!have_header) {
            if (cells.empty() || cells[0] != "k") {
                throw DataError("measurement CSV: header must start with 'k'");
            }
            for (std::size_t c = 1; c < cells.size(); ++c) {
                const std::string expect_z = "z_" + std::to_string(log.m + 1);
                const std::string expect_u = "u_" + std::to_string(log.d + 1);
                if (log.d == 0 && cells[c] == expect_z) ++log.m;
                else if (cells[c] == expect_u) ++log.d;
                else throw DataError("measurement CSV: unexpected header column '" + std::string(cells[c]) + "'");
            }
            if (log.m == 0) throw DataError("measurement CSV: no z columns");
            have_header = true;
            continue;
        }
        const auto width = static_cast<std::size_t>(1 + log.m + log.d);
        const std::string where = "measurement CSV line " + std::to_string(line_no);
        if (cells.size() != width) {
            throw DataError(where + ": expected " + std::to_string(width) + " cells, found " +
                            std::to_string(cells.size()));
        }
        const double k = parse_double(cells[0], where);
        if (k != static_cast<double>(log.size() + 1)) {
            throw DataError(where + ": rows must be numbered 1, 2, ...");
        }
        Vector z(log.m), u(log.d);
        for (Index j = 0; j < log.m; ++j) z(j) = parse_double(cells[static_cast<std::size_t>(1 + j)], where);
        for (Index j = 0; j < log.d; ++j) {
            u(j) = parse_double(cells[static_cast<std::size_t>(1 + log.m + j)], where);
        }
        log.z.push_back(std::move(z));
        log.u.push_back(std::move(u));
    }
    if (!have_header) throw DataError("measurement CSV: missing header");
    return log;
}

inline json log_to_json(const MeasurementLog& log, const json& extra_meta = json::object()) {
    json meta = log.metadata;
    for (const auto& [key, value] : extra_meta.items()) meta[key] = value;
    json z = json::array(), u = json::array();
    for (std::size_t k = 0; k < log.size(); ++k) {
        z.push_back(to_json(log.z[k]));
        u.push_back(to_json(log.u[k]));
    }
    return {{"metadata", meta}, {"m", log.m}, {"d", log.d}, {"z", z}, {"u", u}};
}

inline MeasurementLog log_from_json(const json& j) {
    MeasurementLog log;
    try {
        log.m = j.at("m").get<Index>();
        log.d = j.at("d").get<Index>();
        if (j.contains("metadata")) log.metadata = j.at("metadata");
        const json& z = j.at("z");
        const json& u = j.at("u");
        if (z.size() != u.size()) throw DataError("measurement JSON: z and u lengths differ");
        for (std::size_t k = 0; k < z.size(); ++k) {
            Vector zk = vector_from_json(z[k], "measurement JSON z");
            Vector uk = u[k].empty() ? Vector(0) : vector_from_json(u[k], "measurement JSON u");
            if (zk.size() != log.m || uk.size() != log.d) {
                throw DataError("measurement JSON: row " + std::to_string(k + 1) + " has wrong width");
            }
            log.z.push_back(std::move(zk));
            log.u.push_back(std::move(uk));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("measurement JSON: ") + e.what());
    }
    return log;
}

// Reads CSV or JSON, chosen by the first non-blank character.
inline MeasurementLog read_log(const std::string& path) {
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        const json j = json::parse(text, nullptr, false);
        if (j.is_discarded()) throw DataError("'" + path + "' is not valid JSON");
        return log_from_json(j);
    }
    return log_from_csv(text);
}

// ---------------------------------------------------------------------------
// Estimation output

inline json result_to_json(const EstimationResult& r, Engine engine,
                           const json& meta = json::object()) {
    json trace = json::array();
    for (const auto& it : r.trace) {
        trace.push_back({{"n", it.n},
                         {"theta", to_json(it.theta)},
                         {"mu", it.mu},
                         {"grad_norm", it.grad_norm},
                         {"gamma", it.gamma}});
    }
    json out = {{"metadata", meta},
                {"engine", to_string(engine)},
                {"theta_hat", to_json(r.theta_hat)},
                {"termination", to_string(r.termination)},
                {"iterations", r.iterations()},
                {"evaluations", r.evaluations},
                {"failed_evaluations", r.failed_evaluations},
                {"mu", r.mu},
                {"gradient", to_json(r.gradient)},
                {"trace", trace}};
    if (r.last_failure) {
        out["last_failure"] = {{"step", r.last_failure->step},
                               {"cause", r.last_failure->cause},
                               {"theta", to_json(r.last_failure->theta)}};
    } else {
        out["last_failure"] = nullptr;
    }
    return out;
}

// n,theta_1..p,mu,gradnorm,gamma
inline std::string trace_to_csv(const EstimationResult& r, const json& meta = json::object()) {
    std::ostringstream os;
    write_metadata_lines(os, meta);
    const Index p = r.theta_hat.size();
    os << join_header("n", "theta_", p) << ",mu,gradnorm,gamma\n";
    for (const auto& it : r.trace) {
        os << it.n;
        for (Index i = 0; i < p; ++i) os << ',' << format_double(it.theta(i));
        os << ',' << format_double(it.mu) << ',' << format_double(it.grad_norm) << ','
           << format_double(it.gamma) << '\n';
    }
    return os.str();
}

// k,e_1..m,re_1..m,xhat_1..n: innovation (normalized for the square-root
// engines), diagonal of the engine's innovation factor, predicted state.
inline std::string step_trace_to_csv(const std::vector<StepOutput>& outs,
                                     const json& meta = json::object()) {
    std::ostringstream os;
    write_metadata_lines(os, meta);
    if (outs.empty()) return os.str();
    const Index m = outs.front().innovation.size();
    const Index n = outs.front().predicted_state.size();
    os << join_header("k", "e_", m);
    for (Index i = 1; i <= m; ++i) os << ",re_" << i;
    for (Index i = 1; i <= n; ++i) os << ",xhat_" << i;
    os << '\n';
    for (std::size_t k = 0; k < outs.size(); ++k) {
        const StepOutput& o = outs[k];
        os << (k + 1);
        for (Index i = 0; i < m; ++i) os << ',' << format_double(o.innovation(i));
        for (Index i = 0; i < m; ++i) os << ',' << format_double(o.innovation_factor(i, i));
        for (Index i = 0; i < n; ++i) os << ',' << format_double(o.predicted_state(i));
        os << '\n';
    }
    return os.str();
}

// k,mu_increment,grad_increment_1..p
inline std::string pi_trace_to_csv(const NegLogLikelihood& pi, const json& meta = json::object()) {
    std::ostringstream os;
    write_metadata_lines(os, meta);
    os << "k,mu_increment" << join_header("", "grad_increment_", pi.gradient.size()) << '\n';
    for (const auto& t : pi.trace) {
        os << t.k << ',' << format_double(t.increment);
        for (Index i = 0; i < t.gradient_increment.size(); ++i) {
            os << ',' << format_double(t.gradient_increment(i));
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace sraf::io
