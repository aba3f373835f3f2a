#pragma once

// Serialization of experiment reports (JSON, CSV, aligned text table) and
// single-run trace CSVs.

#include "estim/bench.hpp"

#include "json.hpp"

#include <cstdio>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace estim {

struct BenchReport {
    std::string system;
    std::uint64_t seed = 0;
    std::size_t horizon = 0;
    std::size_t runs = 0;
    GibbsConfig gibbs;
    std::vector<ExperimentReport> methods;
};

enum class ReportFormat { json, csv, table };

inline std::optional<ReportFormat> parse_format(std::string_view s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "table") return ReportFormat::table;
    return std::nullopt;
}

inline constexpr std::string_view kSingleRunWarning = "fewer than two successful runs; standard error reported as 0";

namespace detail {

inline nlohmann::ordered_json to_json(const Aggregate& a) { return {{"mean", a.mean}, {"se", a.se}}; }

inline Aggregate aggregate_from_json(const nlohmann::json& j) {
    return {j.at("mean").get<double>(), j.at("se").get<double>()};
}

/// Three significant digits.
inline std::string sig3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const BenchReport& report) {
    nlohmann::ordered_json j;
    j["system"] = report.system;
    j["seed"] = report.seed;
    j["horizon"] = report.horizon;
    j["runs"] = report.runs;
    j["gibbs"] = {{"samples", report.gibbs.n_samples},
                  {"iters", report.gibbs.n_iters},
                  {"burn_in", report.gibbs.burn_in}};
    j["methods"] = nlohmann::ordered_json::array();
    for (const auto& m : report.methods) {
        nlohmann::ordered_json jm;
        jm["name"] = std::string(to_string(m.method));
        jm["rmse_filter"] = detail::to_json(m.rmse_filter);
        jm["nll_filter"] = detail::to_json(m.nll_filter);
        jm["rmse_smooth"] = detail::to_json(m.rmse_smooth);
        jm["nll_smooth"] = detail::to_json(m.nll_smooth);
        jm["failed_runs"] = m.failed_runs;
        if (m.successful_runs() < 2) jm["warning"] = std::string(kSingleRunWarning);
        jm["per_run"] = nlohmann::ordered_json::array();
        for (const auto& r : m.per_run) {
            nlohmann::ordered_json jr;
            if (r.failed) {
                jr["failed"] = true;
                jr["error"] = r.error;
            } else {
                jr["rmse_filter"] = r.rmse_filter;
                jr["nll_filter"] = r.nll_filter;
                jr["rmse_smooth"] = r.rmse_smooth;
                jr["nll_smooth"] = r.nll_smooth;
            }
            jm["per_run"].push_back(std::move(jr));
        }
        j["methods"].push_back(std::move(jm));
    }
    return j;
}

inline BenchReport report_from_json(const nlohmann::json& j) {
    BenchReport report;
    report.system = j.at("system").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.horizon = j.at("horizon").get<std::size_t>();
    report.runs = j.at("runs").get<std::size_t>();
    if (j.contains("gibbs")) {
        report.gibbs.n_samples = j["gibbs"].at("samples").get<std::size_t>();
        report.gibbs.n_iters = j["gibbs"].at("iters").get<std::size_t>();
        report.gibbs.burn_in = j["gibbs"].at("burn_in").get<std::size_t>();
    }
    for (const auto& jm : j.at("methods")) {
        ExperimentReport m;
        const auto name = jm.at("name").get<std::string>();
        const auto method = parse_method(name);
        if (!method) throw ConfigError("report: unknown method '" + name + "'");
        m.method = *method;
        m.rmse_filter = detail::aggregate_from_json(jm.at("rmse_filter"));
        m.nll_filter = detail::aggregate_from_json(jm.at("nll_filter"));
        m.rmse_smooth = detail::aggregate_from_json(jm.at("rmse_smooth"));
        m.nll_smooth = detail::aggregate_from_json(jm.at("nll_smooth"));
        m.failed_runs = jm.at("failed_runs").get<std::size_t>();
        if (jm.contains("per_run")) {
            for (const auto& jr : jm["per_run"]) {
                RunMetrics r;
                if (jr.value("failed", false)) {
                    r.failed = true;
                    r.error = jr.value("error", std::string{});
                } else {
                    r.rmse_filter = jr.at("rmse_filter").get<double>();
                    r.nll_filter = jr.at("nll_filter").get<double>();
                    r.rmse_smooth = jr.at("rmse_smooth").get<double>();
                    r.nll_smooth = jr.at("nll_smooth").get<double>();
                }
                m.per_run.push_back(std::move(r));
            }
        }
        report.methods.push_back(std::move(m));
    }
    return report;
}

/// One row per (method, run).
inline std::string report_to_csv(const BenchReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "method,run,rmse_filter,nll_filter,rmse_smooth,nll_smooth,failed\n";
    for (const auto& m : report.methods) {
        for (std::size_t r = 0; r < m.per_run.size(); ++r) {
            const auto& run = m.per_run[r];
            os << to_string(m.method) << ',' << r << ',';
            if (run.failed)
                os << ",,,,1\n";
            else
                os << run.rmse_filter << ',' << run.nll_filter << ',' << run.rmse_smooth << ','
                   << run.nll_smooth << ",0\n";
        }
    }
    return os.str();
}

/// Filters block over smoothers block, "mean ± se" per cell.
inline std::string report_to_table(const BenchReport& report) {
    auto cell = [](const Aggregate& a) { return detail::sig3(a.mean) + " ± " + detail::sig3(a.se); };
    std::vector<std::vector<std::string>> rows;
    auto block = [&](std::string_view title, bool smoother) {
        std::vector<std::string> head{std::string(title)}, rmse_row{"RMSE"}, nll_row{"NLL"};
        for (const auto& m : report.methods) {
            head.emplace_back(smoother ? smoother_label(m.method) : filter_label(m.method));
            rmse_row.push_back(cell(smoother ? m.rmse_smooth : m.rmse_filter));
            nll_row.push_back(cell(smoother ? m.nll_smooth : m.nll_filter));
        }
        rows.push_back(std::move(head));
        rows.push_back(std::move(rmse_row));
        rows.push_back(std::move(nll_row));
    };
    block("filters", false);
    block("smoothers", true);

    // "±" is two bytes but one column wide.
    auto width = [](const std::string& s) {
        std::size_t w = 0;
        for (unsigned char c : s) w += (c & 0xC0) != 0x80;
        return w;
    };
    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], width(row[c]));

    std::ostringstream os;
    os << "system: " << report.system << "  runs: " << report.runs << "  horizon: " << report.horizon
       << "  seed: " << report.seed << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (r == 3) os << '\n';
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c) os << " | ";
            os << rows[r][c] << std::string(widths[c] - width(rows[r][c]), ' ');
        }
        os << '\n';
    }
    for (const auto& m : report.methods)
        if (m.failed_runs > 0) os << to_string(m.method) << ": " << m.failed_runs << " failed run(s) excluded\n";
    return os.str();
}

inline std::string emit_report(const BenchReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::json: return report_to_json(report).dump(2) + "\n";
        case ReportFormat::csv: return report_to_csv(report);
        case ReportFormat::table: return report_to_table(report);
    }
    return {};
}

/// Per-step CSV of truth, measurement and filter/smoother bands (first state component).
inline std::string trace_to_csv(const Trajectory& traj, const EstimationResult& res) {
    std::ostringstream os;
    os.precision(17);
    os << "t,x_truth,z,mu_filt,var_filt,mu_smooth,var_smooth\n";
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        os << t << ',' << traj.states[t](0) << ',';
        if (t > 0) os << traj.measurements[t - 1](0);
        os << ',' << res.filtered[t].mean()(0) << ',' << res.filtered[t].cov()(0, 0) << ',';
        if (res.smoothed)
            os << (*res.smoothed)[t].mean()(0) << ',' << (*res.smoothed)[t].cov()(0, 0);
        else
            os << ',';
        os << '\n';
    }
    return os.str();
}

}  // namespace estim
