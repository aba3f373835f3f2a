// estim: benchmark driver for the Gaussian filters and RTS smoothers.
//
//   estim bench --system linear --methods kf,gibbs --runs 100 --horizon 50 --seed 42 --out report.json
//   estim trace --system ungm --method ckf --seed 7 --horizon 50 --out trace.csv
//
// Exit codes: 0 success, 1 runtime error, 2 configuration error.

#include "estim/bench.hpp"
#include "estim/report.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

estim::SystemModel model_for(const std::string& system) {
    if (system == "linear") return estim::linear_benchmark_model();
    if (system == "ungm") return estim::ungm_benchmark_model();
    throw estim::ConfigError("unknown system '" + system + "' (valid: linear, ungm)");
}

std::string valid_methods() {
    std::string out;
    for (auto name : estim::kMethodNames) {
        if (!out.empty()) out += ", ";
        out += name;
    }
    return out;
}

estim::Method method_for(const std::string& name) {
    if (auto m = estim::parse_method(name)) return *m;
    throw estim::ConfigError("unknown method '" + name + "' (valid: " + valid_methods() + ")");
}

std::vector<estim::Method> methods_for(const std::string& list) {
    std::vector<estim::Method> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(method_for(item));
    return out;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

struct CommonFlags {
    std::string system = "linear";
    std::size_t horizon = 50;
    std::uint64_t seed = 42;
    std::size_t gibbs_samples = 1000;
    std::size_t gibbs_iters = 200;
    std::size_t gibbs_burnin = 100;
    double ukf_alpha = 1.0;
    double ukf_beta = 2.0;
    std::optional<double> ukf_kappa;
    std::string out = "-";

    void add_to(CLI::App& app) {
        app.add_option("--system", system, "Benchmark system: linear or ungm")->capture_default_str();
        app.add_option("--horizon", horizon, "Time horizon T")->capture_default_str();
        app.add_option("--seed", seed, "Master seed")->capture_default_str();
        app.add_option("--gibbs-samples", gibbs_samples, "Gibbs data set size N")->capture_default_str();
        app.add_option("--gibbs-iters", gibbs_iters, "Gibbs sweeps L")->capture_default_str();
        app.add_option("--gibbs-burnin", gibbs_burnin, "Gibbs burn-in B")->capture_default_str();
        app.add_option("--ukf-alpha", ukf_alpha, "UKF alpha")->capture_default_str();
        app.add_option("--ukf-beta", ukf_beta, "UKF beta")->capture_default_str();
        app.add_option("--ukf-kappa", ukf_kappa, "UKF kappa (default 3 - D)");
        app.add_option("--out", out, "Output path, '-' for stdout")->capture_default_str();
    }

    estim::ExperimentSettings settings() const {
        estim::ExperimentSettings s;
        s.horizon = horizon;
        s.seed = seed;
        s.gibbs.n_samples = gibbs_samples;
        s.gibbs.n_iters = gibbs_iters;
        s.gibbs.burn_in = gibbs_burnin;
        s.unscented.ukf_alpha = ukf_alpha;
        s.unscented.ukf_beta = ukf_beta;
        s.unscented.ukf_kappa = ukf_kappa;
        return s;
    }

    void validate(const estim::SystemModel& model) const {
        auto s = settings();
        s.gibbs.validate(model.dim_x + std::max(model.dim_x, model.dim_z));
        s.unscented.validate(model.dim_x);
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian filtering and RTS smoothing benchmarks"};
    app.require_subcommand(1);

    CommonFlags bench_flags;
    std::string methods = "kf,gibbs";
    std::size_t runs = 100;
    std::string format = "json";
    auto* bench = app.add_subcommand("bench", "Run the multi-run experiment and emit a report");
    bench_flags.add_to(*bench);
    bench->add_option("--methods", methods, "Comma list of kf, ekf, ukf, ckf, gibbs")->capture_default_str();
    bench->add_option("--runs", runs, "Independent runs")->capture_default_str();
    bench->add_option("--format", format, "json, csv or table")->capture_default_str();

    CommonFlags trace_flags;
    std::string method = "ckf";
    auto* trace = app.add_subcommand("trace", "Emit one run's filter/smoother bands as CSV");
    trace_flags.add_to(*trace);
    trace->add_option("--method", method, "One of kf, ekf, ukf, ckf, gibbs")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*bench) {
            const auto model = model_for(bench_flags.system);
            auto settings = bench_flags.settings();
            settings.methods = methods_for(methods);
            settings.runs = runs;
            const auto fmt = estim::parse_format(format);
            if (!fmt) throw estim::ConfigError("unknown format '" + format + "' (valid: json, csv, table)");
            bench_flags.validate(model);
            for (auto m : settings.methods)
                if (m == estim::Method::kf && !model.affine)
                    throw estim::ConfigError("kf requires an affine system; use ekf, ukf, ckf or gibbs");

            estim::BenchReport report{bench_flags.system, settings.seed, settings.horizon, settings.runs,
                                      settings.gibbs, estim::run_experiment(model, settings)};
            for (const auto& m : report.methods)
                if (m.failed_runs > 0)
                    std::cerr << "warning: " << estim::to_string(m.method) << ": " << m.failed_runs
                              << " failed run(s) excluded\n";
            write_output(bench_flags.out, estim::emit_report(report, *fmt));
        } else {
            const auto model = model_for(trace_flags.system);
            auto settings = trace_flags.settings();
            const auto m = method_for(method);
            settings.methods = {m};
            trace_flags.validate(model);
            const auto traj = estim::simulate_run(model, settings, 0);
            const auto result = estim::estimate(model, traj.measurements, m, settings, 0);
            write_output(trace_flags.out, estim::trace_to_csv(traj, result));
        }
    } catch (const estim::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return 0;
}
