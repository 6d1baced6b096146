#include "kmf/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

int run_command(const std::string& config, const std::optional<long>& seed, const std::optional<int>& threads,
                const std::string& out, const std::vector<std::string>& sets)
{
    kmf::ExperimentConfig cfg = kmf::load_config(config);
    if (seed) {
        if (*seed < 0) throw kmf::ConfigError("--seed must be non-negative");
        cfg.seed = static_cast<std::uint64_t>(*seed);
    }
    if (threads) cfg.threads = *threads;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw kmf::ConfigError("--set expects name=value, got '" + s + "'");
        kmf::set_parameter(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!out.empty()) cfg.output = out;
    const auto dir = kmf::output_directory(cfg);
    std::cerr << "kmf: running " << cfg.preset << " (seed " << cfg.seed << ", config " << kmf::config_hash(cfg)
              << ") into " << dir.string() << "\n";
    const kmf::RunManifest m = kmf::run_experiment(cfg, dir);
    for (const auto& [name, t] : m.phases) std::cerr << "  " << name << ": " << t << " s\n";
    for (const auto& [name, v] : m.metrics) std::cout << name << " = " << v << "\n";
    std::cout << m.directory.string() << "\n";
    return 0;
}

void print_presets(bool verbose)
{
    for (const auto& p : kmf::list_presets()) {
        std::cout << p.name << "\n    " << p.description << "\n";
        if (!verbose) continue;
        for (const auto& d : p.params) {
            std::cout << "    - " << d.name << " = " << kmf::format_value(d.value);
            if (!d.choices.empty()) {
                std::cout << "  {";
                for (size_t i = 0; i < d.choices.size(); ++i) std::cout << (i ? ", " : "") << d.choices[i];
                std::cout << "}";
            } else if (d.kind != kmf::ParamKind::flag && d.kind != kmf::ParamKind::text) {
                std::cout << "  [" << d.min << ", " << d.max << "]";
            }
            std::cout << "  " << d.help << "\n";
        }
    }
}

int compare_command(const std::string& a, const std::string& b, double tol, bool force)
{
    const kmf::CompareReport r = kmf::compare_runs(a, b, tol, force);
    for (const auto& n : r.notes) std::cerr << "note: " << n << "\n";
    int failed = 0;
    for (const auto& c : r.columns) {
        std::printf("%-4s %-16s %-22s rel_l2=%.3e", c.pass ? "ok" : "FAIL", c.file.c_str(), c.column.c_str(), c.rel_l2);
        if (c.predicted_band) std::printf("  predicted=%.3e", *c.predicted_band);
        std::printf("\n");
        failed += !c.pass;
    }
    std::printf("%d of %zu columns differ by more than %g\n", failed, r.columns.size(), tol);
    return r.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multi-fidelity uncertainty quantification for kinetic equations"};
    app.set_version_flag("--version", std::string(kmf::toolkit_version));
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run an experiment described by a YAML configuration");
    std::string config, out;
    std::optional<long> seed;
    std::optional<int> threads;
    std::vector<std::string> sets;
    run->add_option("config", config, "configuration file")->required();
    run->add_option("--seed", seed, "override the configured seed");
    run->add_option("--threads", threads, "worker threads (0: hardware concurrency)")->check(CLI::Range(0, 4096));
    run->add_option("--out", out, "output directory");
    run->add_option("--set", sets, "override a parameter, name=value")->allow_extra_args(false);

    auto* list = app.add_subcommand("list-presets", "list registered experiments");
    bool verbose = false;
    list->add_flag("-v,--verbose", verbose, "show parameters with defaults and ranges");

    auto* cmp = app.add_subcommand("compare", "compare the tables of two run directories");
    std::string dir_a, dir_b;
    double tol = 0.0;
    bool force = false;
    cmp->add_option("a", dir_a, "run directory")->required();
    cmp->add_option("b", dir_b, "reference run directory")->required();
    cmp->add_option("--tol", tol, "relative L2 tolerance per column")->required()->check(CLI::NonNegativeNumber);
    cmp->add_flag("--force", force, "compare despite version or hash mismatches");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) return run_command(config, seed, threads, out, sets);
        if (*list) {
            print_presets(verbose);
            return 0;
        }
        if (*cmp) return compare_command(dir_a, dir_b, tol, force);
    } catch (const kmf::LayoutMismatch& e) {
        std::cerr << "kmf: layout mismatch: " << e.what() << "\n";
        return 2;
    } catch (const kmf::SolverFailure& e) {
        std::cerr << "kmf: solver failure: " << e.what() << "\n";
        return 3;
    } catch (const kmf::ConfigError& e) {
        std::cerr << "kmf: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "kmf: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
