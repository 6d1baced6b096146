#include "kmf/experiment.hpp"

#include "kmf/agents.hpp"
#include "kmf/collocation.hpp"
#include "kmf/transport.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace kmf {

namespace fs = std::filesystem;

// ============================================================================
// scenario models
// ============================================================================

ParamSpace two_bumps_space() { return ParamSpace::cube(1, 0.0, 1.0); }

namespace {

Eigen::VectorXd stack_times(const std::vector<double>& times, const std::function<Eigen::VectorXd(double)>& at)
{
    std::vector<Eigen::VectorXd> parts;
    Eigen::Index n = 0;
    for (double t : times) {
        parts.push_back(at(t));
        n += parts.back().size();
    }
    Eigen::VectorXd out(n);
    Eigen::Index o = 0;
    for (const auto& p : parts) {
        out.segment(o, p.size()) = p;
        o += p.size();
    }
    return out;
}

void check_times(const std::vector<double>& times)
{
    if (times.empty()) throw ConfigError("at least one save time is required");
    for (size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] >= 0.0)) throw ConfigError("save times must be non-negative");
        if (i && times[i] <= times[i - 1]) throw ConfigError("save times must be strictly increasing");
    }
}

}  // namespace

SampleModel two_bumps_bgk_model(const TwoBumpsSetup& s)
{
    check_times(s.times);
    return [s](const Eigen::VectorXd& z, std::uint64_t) {
        return stack_times(s.times, [&](double t) { return bgk_exact_marginal_cells(s.velocity, z(0), s.nu, t); });
    };
}

SampleModel two_bumps_initial_model(const TwoBumpsSetup& s)
{
    check_times(s.times);
    return [s](const Eigen::VectorXd& z, std::uint64_t) {
        const Eigen::VectorXd f0 = two_bumps_marginal_cells(s.velocity, z(0));
        return stack_times(s.times, [&](double) { return f0; });
    };
}

SampleModel two_bumps_equilibrium_model(const TwoBumpsSetup& s)
{
    check_times(s.times);
    return [s](const Eigen::VectorXd& z, std::uint64_t) {
        const Eigen::VectorXd feq = maxwellian_marginal_cells(two_bumps_moments(z(0)), s.velocity);
        return stack_times(s.times, [&](double) { return feq; });
    };
}

SampleModel two_bumps_dsmc_model(const TwoBumpsSetup& s)
{
    check_times(s.times);
    if (s.N < 2) throw ConfigError("two-bumps DSMC needs at least 2 particles");
    if (!(s.dsmc_dt > 0.0 && s.dsmc_dt <= 2.0)) throw ConfigError("two-bumps DSMC step must lie in (0, 2]");
    return [s](const Eigen::VectorXd& z, std::uint64_t seed) {
        Rng rng(seed);
        Eigen::MatrixXd P = sample_two_bumps(s.N, z(0), rng);
        const double rho = two_bumps_moments(z(0)).rho;
        double now = 0.0;
        return stack_times(s.times, [&](double t) {
            const int n = static_cast<int>(std::ceil((t - now) / s.dsmc_dt - 1e-12));
            for (int k = 0; k < n; ++k) dsmc_maxwell_step(P, (t - now) / n, rng);
            now = t;
            const Eigen::VectorXd v1 = P.col(0);
            return Eigen::VectorXd(rho * histogram_reconstruct(v1, s.velocity).values.transpose());
        });
    };
}

ParamSpace sod_space() { return ParamSpace::cube(1, 0.0, 1.0); }

SampleModel sod_temperature_model(const SodSetup& s, SodModel which)
{
    check_times(s.times);
    if (s.nx < 2 || s.nv < 4) throw ConfigError("Sod grids need at least 2 cells and 4 velocities");
    return [s, which](const Eigen::VectorXd& z, std::uint64_t) {
        const Grid1D x(0.0, 1.0, s.nx);
        const MomentField ic = sod_moments(x, z(0));
        std::vector<MomentField> saved;
        if (which == SodModel::euler) {
            EulerConfig cfg;
            cfg.cfl = s.cfl;
            saved = euler_solver_1d(ic, x, s.times.back(), s.times, cfg).saved;
        } else {
            const VelocityGrid v(Grid1D(-s.v_max, s.v_max, s.nv), 1);
            BgkConfig cfg;
            cfg.epsilon = s.epsilon;
            cfg.muscl = which == SodModel::kinetic_high;
            cfg.cfl = s.cfl;
            saved = bgk_solver_1d(equilibrium_state(x, v, ic), cfg, s.times.back(), s.times).saved;
        }
        Eigen::VectorXd out(s.nx * static_cast<Eigen::Index>(saved.size()));
        for (size_t k = 0; k < saved.size(); ++k) out.segment(k * s.nx, s.nx) = saved[k].T;
        return out;
    };
}

double time_averaged_l2(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int n_times, double cell_size)
{
    if (a.size() != b.size() || n_times < 1 || a.size() % n_times != 0)
        throw std::invalid_argument("time_averaged_l2: inconsistent sizes");
    const Eigen::Index n = a.size() / n_times;
    double acc = 0.0;
    for (int k = 0; k < n_times; ++k) acc += (a.segment(k * n, n) - b.segment(k * n, n)).norm();
    return std::sqrt(cell_size) * acc / n_times;
}

// ============================================================================
// parameters
// ============================================================================

const ParamValue& ParamSet::at(const std::string& name) const
{
    auto it = values_.find(name);
    if (it == values_.end()) throw ConfigError("parameter '" + name + "' is not set");
    return it->second;
}

namespace {

template <typename T>
const T& get_as(const ParamValue& v, const std::string& name)
{
    if (auto p = std::get_if<T>(&v)) return *p;
    throw ConfigError("parameter '" + name + "' has a different type");
}

}  // namespace

bool ParamSet::flag(const std::string& n) const { return get_as<bool>(at(n), n); }
long ParamSet::integer(const std::string& n) const { return get_as<long>(at(n), n); }
double ParamSet::real(const std::string& n) const { return get_as<double>(at(n), n); }
const std::string& ParamSet::text(const std::string& n) const { return get_as<std::string>(at(n), n); }
const std::vector<long>& ParamSet::integers(const std::string& n) const { return get_as<std::vector<long>>(at(n), n); }
const std::vector<double>& ParamSet::reals(const std::string& n) const
{
    return get_as<std::vector<double>>(at(n), n);
}

namespace {

std::string fmt_double(double x)
{
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

}  // namespace

std::string format_value(const ParamValue& v)
{
    struct Visitor {
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(long i) const { return std::to_string(i); }
        std::string operator()(double d) const { return fmt_double(d); }
        std::string operator()(const std::string& s) const { return s; }
        std::string operator()(const std::vector<long>& l) const
        {
            std::string s = "[";
            for (size_t i = 0; i < l.size(); ++i) s += (i ? ", " : "") + std::to_string(l[i]);
            return s + "]";
        }
        std::string operator()(const std::vector<double>& l) const
        {
            std::string s = "[";
            for (size_t i = 0; i < l.size(); ++i) s += (i ? ", " : "") + fmt_double(l[i]);
            return s + "]";
        }
    };
    return std::visit(Visitor{}, v);
}

SchemaError::SchemaError(const std::string& source, int l, int c, const std::string& message)
    : ConfigError(source + ":" + std::to_string(l) + ":" + std::to_string(c) + ": " + message), line(l), column(c)
{
}

namespace {

// Range and choice check; returns an empty string when valid.
std::string check_value(const ParamDecl& d, const ParamValue& v)
{
    auto in_range = [&](double x) { return x >= d.min && x <= d.max; };
    auto range_text = [&] { return " outside [" + fmt_double(d.min) + ", " + fmt_double(d.max) + "]"; };
    switch (d.kind) {
    case ParamKind::flag:
        return std::holds_alternative<bool>(v) ? "" : "expected true or false";
    case ParamKind::integer:
        if (!std::holds_alternative<long>(v)) return "expected an integer";
        return in_range(double(std::get<long>(v))) ? "" : "value " + format_value(v) + range_text();
    case ParamKind::real: {
        if (!std::holds_alternative<double>(v)) return "expected a number";
        const double x = std::get<double>(v);
        if (!std::isfinite(x)) return "value must be finite";
        return in_range(x) ? "" : "value " + format_value(v) + range_text();
    }
    case ParamKind::text: {
        if (!std::holds_alternative<std::string>(v)) return "expected a string";
        const auto& s = std::get<std::string>(v);
        if (d.choices.empty() || std::find(d.choices.begin(), d.choices.end(), s) != d.choices.end()) return "";
        std::string all;
        for (const auto& c : d.choices) all += (all.empty() ? "" : ", ") + c;
        return "'" + s + "' is not one of {" + all + "}";
    }
    case ParamKind::integer_list: {
        if (!std::holds_alternative<std::vector<long>>(v)) return "expected a list of integers";
        const auto& l = std::get<std::vector<long>>(v);
        if (l.empty()) return "list must not be empty";
        for (long x : l)
            if (!in_range(double(x))) return "entry " + std::to_string(x) + range_text();
        return "";
    }
    case ParamKind::real_list: {
        if (!std::holds_alternative<std::vector<double>>(v)) return "expected a list of numbers";
        const auto& l = std::get<std::vector<double>>(v);
        if (l.empty()) return "list must not be empty";
        for (double x : l)
            if (!std::isfinite(x) || !in_range(x)) return "entry " + fmt_double(x) + range_text();
        return "";
    }
    }
    return "unknown parameter kind";
}

// ============================================================================
// run context and outputs
// ============================================================================

struct Table {
    std::vector<std::string> header;
    std::vector<Eigen::VectorXd> columns;

    void add(const std::string& name, const Eigen::VectorXd& c)
    {
        if (!columns.empty() && c.size() != columns.front().size())
            throw std::logic_error("table column '" + name + "' has a different length");
        header.push_back(name);
        columns.push_back(c);
    }
};

void write_atomic(const fs::path& file, const std::string& content)
{
    const fs::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, file);
}

class RunContext {
public:
    RunContext(const ExperimentConfig& cfg, fs::path dir) : cfg_(cfg), dir_(std::move(dir))
    {
        manifest_.config_hash = config_hash(cfg);
        manifest_.preset = cfg.preset;
        manifest_.seed = cfg.seed;
        manifest_.directory = dir_;
    }

    const ParamSet& p() const { return cfg_.params; }
    std::uint64_t seed() const { return cfg_.seed; }
    int threads() const { return cfg_.threads; }

    template <typename F>
    auto phase(const std::string& name, F&& f)
    {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            record(name, t0);
        } else {
            auto r = f();
            record(name, t0);
            return r;
        }
    }

    void csv(const std::string& name, const Table& t)
    {
        std::string s = "# kmf " + std::string(toolkit_version) + " config_hash=" + manifest_.config_hash + "\n";
        for (size_t j = 0; j < t.header.size(); ++j) s += (j ? "," : "") + t.header[j];
        s += "\n";
        const Eigen::Index n = t.columns.empty() ? 0 : t.columns.front().size();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (size_t j = 0; j < t.columns.size(); ++j) s += (j ? "," : "") + fmt_double(t.columns[j](i));
            s += "\n";
        }
        write_atomic(dir_ / name, s);
        manifest_.files.push_back(name);
    }

    void text(const std::string& name, const std::string& content)
    {
        write_atomic(dir_ / name, content);
        manifest_.files.push_back(name);
    }

    void metric(const std::string& name, double v) { manifest_.metrics.emplace_back(name, v); }

    RunManifest finish()
    {
        nlohmann::ordered_json j;
        j["schema"] = "kmf.run-manifest";
        j["schema_version"] = config_schema_version;
        j["toolkit_version"] = manifest_.version;
        j["preset"] = manifest_.preset;
        j["seed"] = manifest_.seed;
        j["config_hash"] = manifest_.config_hash;
        nlohmann::ordered_json params = nlohmann::ordered_json::object();
        for (const auto& [k, v] : cfg_.params.values()) params[k] = format_value(v);
        j["parameters"] = params;
        j["threads"] = cfg_.threads;
        nlohmann::ordered_json phases = nlohmann::ordered_json::array();
        for (const auto& [k, v] : manifest_.phases) phases.push_back({{"name", k}, {"seconds", v}});
        j["phases"] = phases;
        nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
        for (const auto& [k, v] : manifest_.metrics) metrics[k] = v;
        j["metrics"] = metrics;
        j["files"] = manifest_.files;
        write_atomic(dir_ / "manifest.json", j.dump(2) + "\n");
        return manifest_;
    }

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point t0)
    {
        manifest_.phases.emplace_back(name,
                                      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    const ExperimentConfig& cfg_;
    fs::path dir_;
    RunManifest manifest_;
};

// (time, coordinate) columns for time-major stacks on a uniform grid.
void add_time_grid(Table& t, const std::vector<double>& times, const Grid1D& g, const char* coord)
{
    const Eigen::Index n = g.n_cells, T = static_cast<Eigen::Index>(times.size());
    Eigen::VectorXd tc(n * T), xc(n * T);
    for (Eigen::Index k = 0; k < T; ++k) {
        tc.segment(k * n, n).setConstant(times[k]);
        xc.segment(k * n, n) = g.cell_centers();
    }
    t.add("time", tc);
    t.add(coord, xc);
}

Eigen::VectorXd per_time_l2(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int n_times, double h)
{
    const Eigen::Index n = a.size() / n_times;
    Eigen::VectorXd e(n_times);
    for (int k = 0; k < n_times; ++k) e(k) = std::sqrt(h) * (a.segment(k * n, n) - b.segment(k * n, n)).norm();
    return e;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

// ============================================================================
// preset runners
// ============================================================================

ParamDecl real(std::string n, double def, double lo, double hi, std::string help)
{
    return {std::move(n), ParamKind::real, def, lo, hi, {}, std::move(help)};
}
ParamDecl integer(std::string n, long def, double lo, double hi, std::string help)
{
    return {std::move(n), ParamKind::integer, def, lo, hi, {}, std::move(help)};
}
ParamDecl reals(std::string n, std::vector<double> def, double lo, double hi, std::string help)
{
    return {std::move(n), ParamKind::real_list, std::move(def), lo, hi, {}, std::move(help)};
}
ParamDecl integers(std::string n, std::vector<long> def, double lo, double hi, std::string help)
{
    return {std::move(n), ParamKind::integer_list, std::move(def), lo, hi, {}, std::move(help)};
}
ParamDecl text(std::string n, std::string def, std::vector<std::string> choices, std::string help)
{
    return {std::move(n), ParamKind::text, std::move(def), 0, 0, std::move(choices), std::move(help)};
}
ParamDecl flag(std::string n, bool def, std::string help) { return {std::move(n), ParamKind::flag, def, 0, 0, {}, std::move(help)}; }

using Issue = std::optional<std::pair<std::string, std::string>>;   // (parameter, message)

struct PresetEntry {
    PresetInfo info;
    std::function<Issue(const ParamSet&)> validate;
    std::function<void(RunContext&)> run;
};

Issue increasing(const ParamSet& p, const std::string& name)
{
    const auto& t = p.reals(name);
    for (size_t i = 1; i < t.size(); ++i)
        if (t[i] <= t[i - 1]) return std::make_pair(name, std::string("values must be strictly increasing"));
    return std::nullopt;
}

// ---------- homogeneous gas ----------

std::vector<ParamDecl> two_bumps_decls()
{
    return {reals("times", {0.5, 1.0, 2.0}, 0.0, 1e3, "save times"),
            real("nu", 1.0, 1e-6, 1e6, "BGK relaxation frequency"),
            real("v_max", 16.0, 1.0, 1e3, "velocity box half width"),
            integer("v_cells", 64, 4, 1 << 16, "cells of the v1 grid"),
            integer("reference_nodes", 20, 2, 400, "Gauss-Legendre nodes for exact expectations")};
}

TwoBumpsSetup two_bumps_setup(const ParamSet& p)
{
    TwoBumpsSetup s;
    s.times = p.reals("times");
    s.nu = p.real("nu");
    s.velocity = Grid1D(-p.real("v_max"), p.real("v_max"), int(p.integer("v_cells")));
    if (p.has("N")) s.N = int(p.integer("N"));
    if (p.has("dsmc_dt")) s.dsmc_dt = p.real("dsmc_dt");
    return s;
}

void run_two_bumps_mc(RunContext& ctx)
{
    const auto& p = ctx.p();
    const TwoBumpsSetup s = two_bumps_setup(p);
    const ParamSpace space = two_bumps_space();
    const SampleModel model = two_bumps_bgk_model(s);
    std::vector<long> Ms = p.integers("M_list");
    std::sort(Ms.begin(), Ms.end());
    const int nt = int(s.times.size());
    const double h = s.velocity.spacing();
    const Eigen::VectorXd ref =
        ctx.phase("reference", [&] { return collocation_expectation(model, space, int(p.integer("reference_nodes")), ctx.threads()); });
    const Eigen::MatrixXd Z = sample_uniform(space, int(Ms.back()), ctx.seed());
    const Eigen::MatrixXd Q =
        ctx.phase("samples", [&] { return evaluate_samples(model, Z, ctx.seed(), 0, -1, ctx.threads()); });
    Table err;
    Eigen::VectorXd mcol(Ms.size()), ecol(Ms.size()), pcol(Ms.size());
    EstimatorReport last;
    for (size_t i = 0; i < Ms.size(); ++i) {
        last = mc_estimate(Q.leftCols(Ms[i]));
        mcol(i) = double(Ms[i]);
        ecol(i) = time_averaged_l2(last.mean, ref, nt, h);
        pcol(i) = std::sqrt(h) * last.std.norm() / std::sqrt(double(Ms[i])) / nt;
    }
    err.add("M", mcol);
    err.add("l2_error", ecol);
    err.add("predicted", pcol);
    ctx.csv("errors.csv", err);
    Table f;
    add_time_grid(f, s.times, s.velocity, "v");
    f.add("mean", last.mean);
    f.add("std", last.std);
    f.add("reference", ref);
    ctx.csv("fields.csv", f);
    if (Ms.size() >= 2) {
        const Eigen::VectorXd lx = mcol.array().log(), ly = ecol.array().log();
        const double mx = lx.mean(), my = ly.mean();
        const double slope = ((lx.array() - mx) * (ly.array() - my)).sum() / (lx.array() - mx).square().sum();
        ctx.metric("error_slope", slope);
    }
    ctx.metric("sample_budget", double(Ms.back()));
}

void run_two_bumps_mscv2(RunContext& ctx)
{
    const auto& p = ctx.p();
    const TwoBumpsSetup s = two_bumps_setup(p);
    const ParamSpace space = two_bumps_space();
    const int M = int(p.integer("M")), nodes = int(p.integer("reference_nodes"));
    const int nt = int(s.times.size());
    const double h = s.velocity.spacing();
    const SampleModel hi = two_bumps_bgk_model(s), c0 = two_bumps_initial_model(s), c1 = two_bumps_equilibrium_model(s);
    const auto [ref, e0, e1] = ctx.phase("expectations", [&] {
        return std::make_tuple(collocation_expectation(hi, space, nodes, ctx.threads()),
                               collocation_expectation(c0, space, nodes, ctx.threads()),
                               collocation_expectation(c1, space, nodes, ctx.threads()));
    });
    const Eigen::MatrixXd Z = sample_uniform(space, M, ctx.seed());
    const auto [H, L0, L1] = ctx.phase("samples", [&] {
        return std::make_tuple(evaluate_samples(hi, Z, ctx.seed(), 0, -1, ctx.threads()),
                               evaluate_samples(c0, Z, ctx.seed(), 0, -1, ctx.threads()),
                               evaluate_samples(c1, Z, ctx.seed(), 0, -1, ctx.threads()));
    });
    const EstimatorReport r = ctx.phase("estimate", [&] {
        return mscv_multifidelity(H, {L0, L1}, {e0, e1}, p.flag("orthogonalize"));
    });
    const EstimatorReport mc = mc_estimate(H);
    Table f;
    add_time_grid(f, s.times, s.velocity, "v");
    f.add("mean", r.mean);
    f.add("std", r.std);
    f.add("residual_std", r.residual_std);
    f.add("lambda_1", r.lambda.col(0));
    f.add("lambda_2", r.lambda.col(1));
    f.add("mc_mean", mc.mean);
    f.add("reference", ref);
    ctx.csv("fields.csv", f);
    Table e;
    e.add("time", to_vec(s.times));
    e.add("mc_error", per_time_l2(mc.mean, ref, nt, h));
    e.add("mscv_error", per_time_l2(r.mean, ref, nt, h));
    ctx.csv("errors.csv", e);
    ctx.metric("residual_std_max", r.residual_std.maxCoeff());
    ctx.metric("std_max", r.std.maxCoeff());
    ctx.metric("sample_budget", M);
}

void run_two_bumps_dsmc(RunContext& ctx)
{
    const auto& p = ctx.p();
    const TwoBumpsSetup s = two_bumps_setup(p);
    const ParamSpace space = two_bumps_space();
    const int M = int(p.integer("M"));
    const SampleModel hi = two_bumps_dsmc_model(s), lo = two_bumps_bgk_model(s);
    const Eigen::VectorXd e_lo = ctx.phase("control_expectation", [&] {
        return collocation_expectation(lo, space, int(p.integer("reference_nodes")), ctx.threads());
    });
    const Eigen::MatrixXd Z = sample_uniform(space, M, ctx.seed());
    const Eigen::MatrixXd H =
        ctx.phase("high_fidelity", [&] { return evaluate_samples(hi, Z, ctx.seed(), 0, -1, ctx.threads()); });
    const Eigen::MatrixXd L =
        ctx.phase("control", [&] { return evaluate_samples(lo, Z, ctx.seed(), 0, -1, ctx.threads()); });
    const EstimatorReport r = mscv_bifidelity(H, L, e_lo);
    Table f;
    add_time_grid(f, s.times, s.velocity, "v");
    f.add("mean", r.mean);
    f.add("std", r.std);
    f.add("residual_std", r.residual_std);
    f.add("lambda", r.lambda.col(0));
    f.add("mc_mean", pointwise_mean(H));
    f.add("control_expectation", e_lo);
    ctx.csv("fields.csv", f);
    ctx.metric("variance_ratio", r.residual_std.squaredNorm() / std::max(r.std.squaredNorm(), 1e-300));
    ctx.metric("sample_budget", M);
}

// ---------- Sod ----------

std::vector<ParamDecl> sod_decls()
{
    return {real("epsilon", 1e-3, 1e-8, 1e2, "Knudsen number"),
            integer("nx", 100, 4, 1 << 14, "space cells"),
            integer("nv", 32, 4, 1 << 12, "velocity cells"),
            real("v_max", 8.0, 1.0, 100.0, "velocity box half width"),
            real("cfl", 0.9, 1e-3, 1.0, "CFL number of the kinetic and Euler schemes"),
            reals("times", {0.05, 0.1, 0.15}, 1e-6, 10.0, "save times"),
            integer("reference_nodes", 20, 0, 200,
                    "Gauss-Legendre nodes of the collocation reference for the high-fidelity model (0: none)")};
}

SodSetup sod_setup(const ParamSet& p)
{
    SodSetup s;
    s.epsilon = p.real("epsilon");
    s.nx = int(p.integer("nx"));
    s.nv = int(p.integer("nv"));
    s.v_max = p.real("v_max");
    s.cfl = p.real("cfl");
    s.times = p.reals("times");
    return s;
}

std::optional<Eigen::VectorXd> sod_reference(RunContext& ctx, const SodSetup& s)
{
    const int nodes = int(ctx.p().integer("reference_nodes"));
    if (nodes == 0) return std::nullopt;
    return ctx.phase("reference", [&] {
        return collocation_expectation(sod_temperature_model(s, SodModel::kinetic_high), sod_space(), nodes,
                                       ctx.threads());
    });
}

void run_sod_mscv(RunContext& ctx)
{
    const auto& p = ctx.p();
    const SodSetup s = sod_setup(p);
    const int M = int(p.integer("M")), ME = int(p.integer("M_ctrl")), nt = int(s.times.size());
    const Grid1D x(0.0, 1.0, s.nx);
    const Eigen::MatrixXd Z = sample_uniform(sod_space(), ME, ctx.seed());
    const Eigen::MatrixXd H = ctx.phase("high_fidelity", [&] {
        return evaluate_samples(sod_temperature_model(s, SodModel::kinetic_high), Z, ctx.seed(), 0, M, ctx.threads());
    });
    const Eigen::MatrixXd L = ctx.phase("control", [&] {
        return evaluate_samples(sod_temperature_model(s, SodModel::euler), Z, ctx.seed(), 0, ME, ctx.threads());
    });
    const EstimatorReport r = mscv_bifidelity(H, L);
    const Eigen::VectorXd mc = pointwise_mean(H);
    const auto ref = sod_reference(ctx, s);
    Table f;
    add_time_grid(f, s.times, x, "x");
    f.add("mean", r.mean);
    f.add("std", r.std);
    f.add("lambda", r.lambda.col(0));
    f.add("mc_mean", mc);
    if (ref) f.add("reference", *ref);
    ctx.csv("fields.csv", f);
    if (ref) {
        Table e;
        e.add("time", to_vec(s.times));
        e.add("mc_error", per_time_l2(mc, *ref, nt, x.spacing()));
        e.add("mscv_error", per_time_l2(r.mean, *ref, nt, x.spacing()));
        ctx.csv("errors.csv", e);
        ctx.metric("mc_error", time_averaged_l2(mc, *ref, nt, x.spacing()));
        ctx.metric("mscv_error", time_averaged_l2(r.mean, *ref, nt, x.spacing()));
    }
    ctx.metric("sample_budget", M);
}

void run_sod_hierarchical(RunContext& ctx)
{
    const auto& p = ctx.p();
    const SodSetup s = sod_setup(p);
    const auto& b = p.integers("budgets");
    const int nt = int(s.times.size());
    const Grid1D x(0.0, 1.0, s.nx);
    const Eigen::MatrixXd Z = sample_uniform(sod_space(), int(b[0]), ctx.seed());
    const Eigen::MatrixXd E = ctx.phase("euler", [&] {
        return evaluate_samples(sod_temperature_model(s, SodModel::euler), Z, ctx.seed(), 0, b[0], ctx.threads());
    });
    const Eigen::MatrixXd B = ctx.phase("bgk_low", [&] {
        return evaluate_samples(sod_temperature_model(s, SodModel::kinetic_low), Z, ctx.seed(), 0, b[1], ctx.threads());
    });
    const Eigen::MatrixXd H = ctx.phase("high_fidelity", [&] {
        return evaluate_samples(sod_temperature_model(s, SodModel::kinetic_high), Z, ctx.seed(), 0, b[2], ctx.threads());
    });
    const EstimatorReport hr = mscv_hierarchical(H, {E, B});
    const EstimatorReport tri = mscv_hierarchical(H, {E, B}, true);
    const EstimatorReport bf = mscv_bifidelity(H, B);
    const Eigen::VectorXd mc = pointwise_mean(H);
    const auto ref = sod_reference(ctx, s);
    Table f;
    add_time_grid(f, s.times, x, "x");
    f.add("mean", hr.mean);
    f.add("std", hr.std);
    f.add("lambda_1", hr.lambda.col(0));
    f.add("lambda_2", hr.lambda.col(1));
    f.add("tridiagonal_mean", tri.mean);
    f.add("bifidelity_mean", bf.mean);
    f.add("mc_mean", mc);
    if (ref) f.add("reference", *ref);
    ctx.csv("fields.csv", f);
    if (ref) {
        const double h = x.spacing();
        Table e;
        e.add("time", to_vec(s.times));
        e.add("mc_error", per_time_l2(mc, *ref, nt, h));
        e.add("bifidelity_error", per_time_l2(bf.mean, *ref, nt, h));
        e.add("hierarchical_error", per_time_l2(hr.mean, *ref, nt, h));
        e.add("tridiagonal_error", per_time_l2(tri.mean, *ref, nt, h));
        ctx.csv("errors.csv", e);
        ctx.metric("bifidelity_error", time_averaged_l2(bf.mean, *ref, nt, h));
        ctx.metric("hierarchical_error", time_averaged_l2(hr.mean, *ref, nt, h));
    }
    ctx.metric("sample_budget", double(b[2]));
}

// ---------- agents ----------

void run_mfcv(RunContext& ctx)
{
    const auto& p = ctx.p();
    const AgentPreset preset = agent_preset(p.text("agents"));
    MfcvConfig c;
    c.control = p.text("control") == "steady-state" ? MeanFieldControl::steady_state : MeanFieldControl::time_dependent;
    c.t_end = p.real("t_end");
    c.M = int(p.integer("M"));
    c.N = int(p.integer("N"));
    c.fp_refine = int(p.integer("fp_refine"));
    c.fp_dt = p.real("fp_dt");
    c.collocation_nodes = int(p.integer("collocation_nodes"));
    c.threads = ctx.threads();
    const MfcvReport r = ctx.phase("estimate", [&] { return mfcv_dsmc(preset, c, ctx.seed()); });
    Table f;
    f.add("w", preset.domain.cell_centers());
    f.add("mean", r.mean);
    f.add("std", r.std);
    f.add("residual_std", r.residual_std);
    f.add("lambda", r.lambda.col(0));
    f.add("mc_mean", r.mc_mean);
    f.add("control_expectation", r.control_expectation);
    ctx.csv("fields.csv", f);
    ctx.metric("variance_ratio", r.residual_std.squaredNorm() / std::max(r.std.squaredNorm(), 1e-300));
    ctx.metric("sample_budget", c.M);
}

// ---------- bi-fidelity collocation ----------

struct BfscProblem {
    ParamSpace space;
    Grid1D grid;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> hi, lo;
};

BfscProblem bfsc_problem(const std::string& name)
{
    BfscProblem b;
    if (name.rfind("sir-", 0) == 0) {
        auto sp = std::make_shared<SirPreset>(sir_preset(name));
        b.space = sp->space;
        b.grid = sp->grid;
        b.hi = [sp](const Eigen::VectorXd& z) { return sp->high(z); };
        b.lo = [sp](const Eigen::VectorXd& z) { return sp->low(z); };
    } else {
        auto tp = std::make_shared<TransportPreset>(transport_preset(name));
        b.space = tp->space;
        b.grid = tp->hi_grid;
        b.hi = [tp](const Eigen::VectorXd& z) { return tp->high(z); };
        b.lo = [tp](const Eigen::VectorXd& z) { return tp->low(z); };
    }
    return b;
}

Eigen::MatrixXd sweep(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::MatrixXd& Z,
                      int threads)
{
    const SampleModel m = [&f](const Eigen::VectorXd& z, std::uint64_t) { return f(z); };
    return evaluate_samples(m, Z, 0, 0, -1, threads);
}

}  // namespace

BfscStudy bfsc_study(const std::string& pair, int N, std::vector<long> Ms, int T, std::uint64_t seed, int threads)
{
    if (Ms.empty()) throw ConfigError("bfsc_study: no budgets");
    std::sort(Ms.begin(), Ms.end());
    if (Ms.front() < 1 || Ms.back() >= N) throw ConfigError("bfsc_study: budgets must lie in [1, candidates)");
    if (T < 2) throw ConfigError("bfsc_study: need at least 2 test points");
    const BfscProblem prob = bfsc_problem(pair);
    BfscStudy st;
    st.grid = prob.grid;
    st.candidates = sample_uniform(prob.space, N, substream_seed(seed, 1));
    const Eigen::MatrixXd Zt = sample_uniform(prob.space, T, substream_seed(seed, 2));
    const Eigen::MatrixXd loC = sweep(prob.lo, st.candidates, threads);
    const Eigen::MatrixXd loT = sweep(prob.lo, Zt, threads);
    const Eigen::MatrixXd hiT = sweep(prob.hi, Zt, threads);
    std::unordered_map<int, Eigen::VectorXd> cache;
    const auto hi_solve = [&](int i) -> Eigen::VectorXd {
        auto it = cache.find(i);
        if (it != cache.end()) return it->second;
        Eigen::VectorXd u = prob.hi(st.candidates.row(i).transpose());
        cache.emplace(i, u);
        return u;
    };
    st.hi_mean = pointwise_mean(hiT);
    st.hi_std = pointwise_std(hiT);
    for (long M : Ms) {
        BfscModel m = bfsc_build(loC, hi_solve, int(M));
        const Eigen::MatrixXd B = predict(m.surrogate, loT);
        int covered = 0;
        for (int t = 0; t < T; ++t) {
            const double err = (B.col(t) - hiT.col(t)).norm() / hiT.col(t).norm();
            if (error_bound(m.surrogate, loT.col(t), m.quality.R_e) >= err) ++covered;
        }
        BfscLevel lv;
        lv.M = int(M);
        lv.mean_error = (pointwise_mean(B) - st.hi_mean).norm() / st.hi_mean.norm();
        lv.std_error = (pointwise_std(B) - st.hi_std).norm() / std::max(st.hi_std.norm(), 1e-300);
        lv.R_s = m.quality.R_s;
        lv.R_e = m.quality.R_e;
        lv.rank = m.selection.rank;
        lv.bound_coverage = double(covered) / T;
        st.levels.push_back(lv);
        st.bf_mean = pointwise_mean(B);
        st.bf_std = pointwise_std(B);
        st.final_model = std::move(m);
    }
    st.hi_solves = int(cache.size());
    return st;
}

namespace {

void run_bfsc(RunContext& ctx)
{
    const auto& p = ctx.p();
    const BfscStudy st = ctx.phase("bifidelity", [&] {
        return bfsc_study(p.text("case"), int(p.integer("candidates")), p.integers("M_list"),
                          int(p.integer("test_points")), ctx.seed(), ctx.threads());
    });
    const auto col = [&](auto get) {
        Eigen::VectorXd v(st.levels.size());
        for (size_t k = 0; k < st.levels.size(); ++k) v(k) = double(get(st.levels[k]));
        return v;
    };
    Table e;
    e.add("M", col([](const BfscLevel& l) { return l.M; }));
    e.add("mean_error", col([](const BfscLevel& l) { return l.mean_error; }));
    e.add("std_error", col([](const BfscLevel& l) { return l.std_error; }));
    e.add("R_s", col([](const BfscLevel& l) { return l.R_s; }));
    e.add("R_e", col([](const BfscLevel& l) { return l.R_e; }));
    e.add("rank", col([](const BfscLevel& l) { return l.rank; }));
    e.add("bound_coverage", col([](const BfscLevel& l) { return l.bound_coverage; }));
    ctx.csv("errors.csv", e);
    const auto& idx = st.final_model.selection.indices;
    const Eigen::Index d = st.candidates.cols();
    Eigen::VectorXd order(idx.size()), cand(idx.size());
    Eigen::MatrixXd zs(idx.size(), d);
    for (size_t i = 0; i < idx.size(); ++i) {
        order(i) = double(i);
        cand(i) = idx[i];
        zs.row(i) = st.candidates.row(idx[i]);
    }
    Table sel;
    sel.add("order", order);
    sel.add("candidate", cand);
    for (Eigen::Index j = 0; j < d; ++j) sel.add("z_" + std::to_string(j + 1), zs.col(j));
    ctx.csv("selected.csv", sel);
    Table f;
    f.add("x", st.grid.cell_centers());
    f.add("hi_mean", st.hi_mean);
    f.add("hi_std", st.hi_std);
    f.add("bf_mean", st.bf_mean);
    f.add("bf_std", st.bf_std);
    ctx.csv("fields.csv", f);
    ctx.text("surrogate.json", serialize_surrogate(st.final_model.surrogate));
    ctx.metric("final_mean_error", st.levels.back().mean_error);
    ctx.metric("final_std_error", st.levels.back().std_error);
    ctx.metric("high_fidelity_solves", st.hi_solves);
}

// ---------- registry ----------

std::vector<ParamDecl> concat(std::vector<ParamDecl> a, const std::vector<ParamDecl>& b)
{
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<PresetEntry> build_registry()
{
    std::vector<PresetEntry> r;
    const auto times_ok = [](const ParamSet& p) { return increasing(p, "times"); };

    r.push_back({{"homog-two-bumps-mc", "plain Monte Carlo on the exact homogeneous BGK two-bumps solution, error vs budget",
                  concat(two_bumps_decls(),
                         {integers("M_list", {10, 100, 1000, 10000}, 2, 1e7, "sample budgets (prefixes of one draw)")})},
                 times_ok, run_two_bumps_mc});
    r.push_back({{"homog-two-bumps-mscv2",
                  "two-control MSCV (initial datum and equilibrium) on the exact homogeneous BGK solution",
                  concat(two_bumps_decls(), {integer("M", 100, 3, 1e7, "samples"),
                                             flag("orthogonalize", false, "Gram-Schmidt orthogonalized controls")})},
                 times_ok, run_two_bumps_mscv2});
    r.push_back({{"homog-two-bumps-dsmc-mscv", "bi-fidelity MSCV with DSMC high fidelity and exact BGK control",
                  concat(two_bumps_decls(), {integer("M", 100, 2, 1e7, "samples"),
                                             integer("N", 100000, 100, 1e8, "DSMC particles per sample"),
                                             real("dsmc_dt", 0.5, 1e-6, 2.0, "DSMC time step")})},
                 times_ok, run_two_bumps_dsmc});
    r.push_back({{"sod-mscv", "Sod tube, BGK high fidelity with Euler control, temperature mean",
                  concat(sod_decls(), {integer("M", 10, 2, 1e7, "high-fidelity samples"),
                                       integer("M_ctrl", 10000, 2, 1e8, "control samples")})},
                 [times_ok](const ParamSet& p) -> Issue {
                     if (auto i = times_ok(p)) return i;
                     if (p.integer("M_ctrl") < p.integer("M"))
                         return std::make_pair(std::string("M_ctrl"), std::string("must be at least M"));
                     return std::nullopt;
                 },
                 run_sod_mscv});
    r.push_back({{"sod-hierarchical", "Sod tube, hierarchical MSCV Euler -> first-order BGK -> high-order BGK",
                  concat(sod_decls(), {integers("budgets", {100000, 100, 10}, 2, 1e8,
                                                "samples of Euler, low BGK and high BGK (strictly decreasing)")})},
                 [times_ok](const ParamSet& p) -> Issue {
                     if (auto i = times_ok(p)) return i;
                     const auto& b = p.integers("budgets");
                     if (b.size() != 3) return std::make_pair(std::string("budgets"), std::string("needs three entries"));
                     if (!(b[0] > b[1] && b[1] > b[2]))
                         return std::make_pair(std::string("budgets"), std::string("must be strictly decreasing"));
                     return std::nullopt;
                 },
                 run_sod_hierarchical});

    const auto mfcv_decls = [](const std::string& agents, const std::string& control, double t_end) {
        return std::vector<ParamDecl>{
            text("agents", agents, agent_preset_names(), "agent model"),
            text("control", control, {"steady-state", "time-dependent"}, "mean-field control"),
            real("t_end", t_end, 0.0, 1e3, "final time"),
            integer("M", 100, 2, 1e7, "samples"),
            integer("N", 20000, 1000, 1e8, "agents per DSMC run"),
            integer("fp_refine", 10, 1, 1000, "Fokker-Planck cells per histogram cell"),
            real("fp_dt", 1e-3, 1e-6, 1.0, "Fokker-Planck time step"),
            integer("collocation_nodes", 20, 2, 200, "collocation nodes for the control expectation")};
    };
    const auto no_issue = [](const ParamSet&) -> Issue { return std::nullopt; };
    r.push_back({{"opinion-a-mfcv-s", "opinion model with uncertain initial data, steady-state mean-field control, t = 5",
                  mfcv_decls("opinion-A", "steady-state", 5.0)},
                 no_issue, run_mfcv});
    r.push_back({{"opinion-b-mfcv-s", "opinion model with uncertain compromise, steady-state mean-field control, t = 20",
                  mfcv_decls("opinion-B", "steady-state", 20.0)},
                 no_issue, run_mfcv});
    r.push_back({{"wealth-c-mfcv", "wealth model with uncertain initial data, time-dependent mean-field control, t = 1",
                  mfcv_decls("wealth-C", "time-dependent", 1.0)},
                 no_issue, run_mfcv});
    r.push_back({{"wealth-c-mfcv-s", "wealth model with uncertain initial data, steady-state mean-field control, t = 1",
                  mfcv_decls("wealth-C", "steady-state", 1.0)},
                 no_issue, run_mfcv});

    const auto bfsc_decls = [](const std::string& c, std::vector<long> Ms, long test) {
        return std::vector<ParamDecl>{
            text("case", c, transport_preset_names(), "model pair"),
            integer("candidates", 1000, 2, 1e6, "low-fidelity candidate points"),
            integers("M_list", std::move(Ms), 1, 1e4, "high-fidelity budgets; the largest is the final model"),
            integer("test_points", test, 2, 1e6, "Monte Carlo test points for the error table")};
    };
    const auto bfsc_ok = [](const ParamSet& p) -> Issue {
        for (long m : p.integers("M_list"))
            if (m >= p.integer("candidates"))
                return std::make_pair(std::string("M_list"), std::string("budgets must be below the candidate count"));
        return std::nullopt;
    };
    r.push_back({{"transport-kl-bfsc", "BFSC, transport vs Goldstein-Taylor, random cross section, eps = 1e-2",
                  bfsc_decls("transport-KL", {2, 4, 8}, 100)},
                 bfsc_ok, run_bfsc});
    r.push_back({{"transport-riemann-bfsc", "BFSC, transport vs Goldstein-Taylor, Riemann inflow, eps = 1e-8",
                  bfsc_decls("transport-riemann", {2, 4, 8, 12}, 300)},
                 bfsc_ok, run_bfsc});
    r.push_back({{"sir-diffusive-bfsc", "BFSC, kinetic vs two-velocity SIR, diffusive scaling",
                  bfsc_decls("sir-diffusive", {2, 4, 6, 8}, 200)},
                 bfsc_ok, run_bfsc});
    r.push_back({{"sir-hyperbolic-bfsc", "BFSC, kinetic vs two-velocity SIR, hyperbolic scaling",
                  bfsc_decls("sir-hyperbolic", {2, 4, 6, 8}, 200)},
                 bfsc_ok, run_bfsc});
    return r;
}

const std::vector<PresetEntry>& registry()
{
    static const std::vector<PresetEntry> r = build_registry();
    return r;
}

const PresetEntry& find_entry(const std::string& name)
{
    for (const auto& e : registry())
        if (e.info.name == name) return e;
    throw ConfigError("unknown preset '" + name + "'");
}

const ParamDecl* find_decl(const PresetInfo& info, const std::string& name)
{
    for (const auto& d : info.params)
        if (d.name == name) return &d;
    return nullptr;
}

// ============================================================================
// YAML parsing
// ============================================================================

struct Loc {
    int line = 0, col = 0;
};

Loc loc(const YAML::Node& n)
{
    const YAML::Mark m = n.Mark();
    if (m.is_null()) return {};
    return {m.line + 1, m.column + 1};
}

[[noreturn]] void fail(const std::string& src, Loc l, const std::string& msg) { throw SchemaError(src, l.line, l.col, msg); }

bool parse_long(const std::string& s, long& out)
{
    const char* b = s.data();
    const char* e = b + s.size();
    auto r = std::from_chars(b, e, out);
    if (r.ec == std::errc() && r.ptr == e) return true;
    double d;
    auto r2 = std::from_chars(b, e, d);
    if (r2.ec != std::errc() || r2.ptr != e || !std::isfinite(d) || d != std::floor(d) ||
        std::abs(d) > 9.0e18)
        return false;
    out = static_cast<long>(d);
    return true;
}

bool parse_double(const std::string& s, double& out)
{
    std::string t = s;
    if (!t.empty() && t[0] == '+') t.erase(0, 1);
    const char* b = t.data();
    const char* e = b + t.size();
    auto r = std::from_chars(b, e, out);
    return r.ec == std::errc() && r.ptr == e;
}

bool parse_bool(const std::string& s, bool& out)
{
    if (s == "true" || s == "True" || s == "yes") return (out = true), true;
    if (s == "false" || s == "False" || s == "no") return (out = false), true;
    return false;
}

// Scalar text to a value of the declared kind; empty optional on a type mismatch.
std::optional<ParamValue> parse_scalar_as(ParamKind k, const std::string& s)
{
    switch (k) {
    case ParamKind::flag: {
        bool b;
        if (parse_bool(s, b)) return b;
        return std::nullopt;
    }
    case ParamKind::integer: {
        long v;
        if (parse_long(s, v)) return v;
        return std::nullopt;
    }
    case ParamKind::real: {
        double v;
        if (parse_double(s, v)) return v;
        return std::nullopt;
    }
    case ParamKind::text:
        return s;
    default:
        return std::nullopt;
    }
}

std::optional<ParamValue> parse_text_as(ParamKind k, const std::string& s)
{
    if (k == ParamKind::integer_list || k == ParamKind::real_list) {
        std::string body = s;
        if (!body.empty() && body.front() == '[') body.erase(0, 1);
        if (!body.empty() && body.back() == ']') body.pop_back();
        std::vector<long> li;
        std::vector<double> ld;
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            if (k == ParamKind::integer_list) {
                long v;
                if (!parse_long(item, v)) return std::nullopt;
                li.push_back(v);
            } else {
                double v;
                if (!parse_double(item, v)) return std::nullopt;
                ld.push_back(v);
            }
        }
        if (k == ParamKind::integer_list) return li;
        return ld;
    }
    return parse_scalar_as(k, s);
}

const char* kind_name(ParamKind k)
{
    switch (k) {
    case ParamKind::flag: return "boolean";
    case ParamKind::integer: return "integer";
    case ParamKind::real: return "number";
    case ParamKind::text: return "string";
    case ParamKind::integer_list: return "list of integers";
    case ParamKind::real_list: return "list of numbers";
    }
    return "?";
}

ParamValue yaml_value(const std::string& src, const ParamDecl& d, const YAML::Node& n)
{
    if (d.kind == ParamKind::integer_list || d.kind == ParamKind::real_list) {
        if (!n.IsSequence()) fail(src, loc(n), "parameter '" + d.name + "' expects a " + kind_name(d.kind));
        std::vector<long> li;
        std::vector<double> ld;
        for (const auto& item : n) {
            if (!item.IsScalar()) fail(src, loc(item), "parameter '" + d.name + "' expects scalar entries");
            auto v = parse_scalar_as(d.kind == ParamKind::integer_list ? ParamKind::integer : ParamKind::real,
                                     item.Scalar());
            if (!v) fail(src, loc(item), "parameter '" + d.name + "': '" + item.Scalar() + "' is not a valid entry of a " +
                                             kind_name(d.kind));
            if (d.kind == ParamKind::integer_list)
                li.push_back(std::get<long>(*v));
            else
                ld.push_back(std::get<double>(*v));
        }
        if (d.kind == ParamKind::integer_list) return li;
        return ld;
    }
    if (!n.IsScalar()) fail(src, loc(n), "parameter '" + d.name + "' expects a " + kind_name(d.kind));
    auto v = parse_scalar_as(d.kind, n.Scalar());
    if (!v) fail(src, loc(n), "parameter '" + d.name + "' expects a " + kind_name(d.kind) + ", got '" + n.Scalar() + "'");
    return *v;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& src)
{
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        fail(src, {e.mark.line + 1, e.mark.column + 1}, e.msg);
    }
    if (!root.IsMap()) fail(src, loc(root), "configuration must be a mapping");
    static const std::vector<std::string> allowed{"schema", "preset", "seed", "threads", "output", "parameters"};
    std::map<std::string, YAML::Node> keys;
    for (const auto& kv : root) {
        const std::string k = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
            fail(src, loc(kv.first), "unknown key '" + k + "'");
        keys[k] = kv.second;
        keys["@" + k] = kv.first;
    }
    if (keys.count("schema")) {
        const auto& n = keys["schema"];
        long v = 0;
        if (!n.IsScalar() || !parse_long(n.Scalar(), v) || v != config_schema_version)
            fail(src, loc(n), "unsupported schema version (expected " + std::to_string(config_schema_version) + ")");
    }
    if (!keys.count("preset")) fail(src, loc(root), "missing required key 'preset'");
    if (!keys.count("seed")) fail(src, loc(root), "missing required key 'seed'");
    ExperimentConfig cfg;
    const YAML::Node pn = keys["preset"];
    if (!pn.IsScalar()) fail(src, loc(pn), "'preset' must be a string");
    const PresetEntry* entry = nullptr;
    try {
        entry = &find_entry(pn.Scalar());
    } catch (const ConfigError& e) {
        fail(src, loc(pn), e.what());
    }
    cfg.preset = entry->info.name;
    {
        const YAML::Node n = keys["seed"];
        long v = -1;
        if (!n.IsScalar() || !parse_long(n.Scalar(), v) || v < 0)
            fail(src, loc(n), "'seed' must be a non-negative integer");
        cfg.seed = static_cast<std::uint64_t>(v);
    }
    if (keys.count("threads")) {
        const YAML::Node n = keys["threads"];
        long v = -1;
        if (!n.IsScalar() || !parse_long(n.Scalar(), v) || v < 0 || v > 4096)
            fail(src, loc(n), "'threads' must be an integer in [0, 4096]");
        cfg.threads = int(v);
    }
    if (keys.count("output")) {
        const YAML::Node n = keys["output"];
        if (!n.IsScalar() || n.Scalar().empty()) fail(src, loc(n), "'output' must be a non-empty path");
        cfg.output = n.Scalar();
    }
    for (const auto& d : entry->info.params) cfg.params.set(d.name, d.value);
    std::map<std::string, Loc> where;
    if (keys.count("parameters")) {
        const YAML::Node ps = keys["parameters"];
        if (!ps.IsMap()) fail(src, loc(ps), "'parameters' must be a mapping");
        for (const auto& kv : ps) {
            const std::string name = kv.first.as<std::string>();
            const ParamDecl* d = find_decl(entry->info, name);
            if (!d) fail(src, loc(kv.first), "preset '" + cfg.preset + "' has no parameter '" + name + "'");
            if (where.count(name)) fail(src, loc(kv.first), "parameter '" + name + "' given twice");
            const ParamValue v = yaml_value(src, *d, kv.second);
            const std::string issue = check_value(*d, v);
            if (!issue.empty()) fail(src, loc(kv.second), "parameter '" + name + "': " + issue);
            cfg.params.set(name, v);
            where[name] = loc(kv.second);
        }
    }
    if (auto issue = entry->validate(cfg.params)) {
        const Loc l = where.count(issue->first) ? where[issue->first] : loc(keys["@preset"]);
        fail(src, l, "parameter '" + issue->first + "': " + issue->second);
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) throw SchemaError(file.string(), 0, 0, "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), file.string());
}

void set_parameter(ExperimentConfig& cfg, const std::string& name, const ParamValue& v)
{
    const PresetEntry& e = find_entry(cfg.preset);
    const ParamDecl* d = find_decl(e.info, name);
    if (!d) throw ConfigError("preset '" + cfg.preset + "' has no parameter '" + name + "'");
    ParamValue val = v;
    if (auto s = std::get_if<std::string>(&v); s && d->kind != ParamKind::text) {
        auto parsed = parse_text_as(d->kind, *s);
        if (!parsed) throw ConfigError("parameter '" + name + "' expects a " + kind_name(d->kind) + ", got '" + *s + "'");
        val = *parsed;
    }
    const std::string issue = check_value(*d, val);
    if (!issue.empty()) throw ConfigError("parameter '" + name + "': " + issue);
    ParamSet trial = cfg.params;
    trial.set(name, val);
    if (auto i = e.validate(trial)) throw ConfigError("parameter '" + i->first + "': " + i->second);
    cfg.params = std::move(trial);
}

std::string config_hash(const ExperimentConfig& cfg)
{
    std::string canon = "schema=" + std::to_string(config_schema_version) + "\npreset=" + cfg.preset +
                        "\nseed=" + std::to_string(cfg.seed) + "\n";
    for (const auto& [k, v] : cfg.params.values()) canon += k + "=" + format_value(v) + "\n";
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<PresetInfo>& list_presets()
{
    static const std::vector<PresetInfo> infos = [] {
        std::vector<PresetInfo> v;
        for (const auto& e : registry()) v.push_back(e.info);
        return v;
    }();
    return infos;
}

const PresetInfo& find_preset(const std::string& name) { return find_entry(name).info; }

ExperimentConfig preset_config(const std::string& name, std::uint64_t seed)
{
    const PresetEntry& e = find_entry(name);
    ExperimentConfig cfg;
    cfg.preset = e.info.name;
    cfg.seed = seed;
    for (const auto& d : e.info.params) cfg.params.set(d.name, d.value);
    return cfg;
}

fs::path output_directory(const ExperimentConfig& cfg)
{
    if (!cfg.output.empty()) return cfg.output;
    const char* root = std::getenv("KMF_OUTPUT_ROOT");
    const fs::path base = root && *root ? fs::path(root) : fs::path("runs");
    return base / (cfg.preset + "-" + config_hash(cfg));
}

RunManifest run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir)
{
    const PresetEntry& e = find_entry(cfg.preset);
    for (const auto& d : e.info.params) {
        if (!cfg.params.has(d.name)) throw ConfigError("parameter '" + d.name + "' is not set");
        const std::string issue = check_value(d, cfg.params.values().at(d.name));
        if (!issue.empty()) throw ConfigError("parameter '" + d.name + "': " + issue);
    }
    if (auto i = e.validate(cfg.params)) throw ConfigError("parameter '" + i->first + "': " + i->second);
    fs::create_directories(out_dir);
    RunContext ctx(cfg, out_dir);
    e.run(ctx);
    return ctx.finish();
}

// ============================================================================
// comparison
// ============================================================================

namespace {

struct CsvData {
    std::string hash;
    std::string version;
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;
    size_t rows = 0;
};

CsvData read_csv(const fs::path& file)
{
    std::ifstream in(file);
    if (!in) throw LayoutMismatch("cannot read " + file.string());
    CsvData d;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string tok;
            while (ss >> tok) {
                if (tok.rfind("config_hash=", 0) == 0) d.hash = tok.substr(12);
                else if (tok != "kmf" && d.version.empty()) d.version = tok;
            }
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        if (!have_header) {
            d.header = cells;
            d.columns.resize(cells.size());
            have_header = true;
            continue;
        }
        if (cells.size() != d.header.size())
            throw LayoutMismatch(file.string() + ": row " + std::to_string(d.rows + 1) + " has " +
                                 std::to_string(cells.size()) + " cells, header has " + std::to_string(d.header.size()));
        for (size_t j = 0; j < cells.size(); ++j) {
            double v;
            if (!parse_double(cells[j], v)) throw LayoutMismatch(file.string() + ": non-numeric cell '" + cells[j] + "'");
            d.columns[j].push_back(v);
        }
        ++d.rows;
    }
    return d;
}

std::optional<nlohmann::json> read_manifest(const fs::path& dir)
{
    std::ifstream in(dir / "manifest.json");
    if (!in) return std::nullopt;
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw LayoutMismatch((dir / "manifest.json").string() + ": " + e.what());
    }
}

std::vector<std::string> csv_files(const fs::path& dir, const std::optional<nlohmann::json>& manifest)
{
    std::vector<std::string> out;
    if (manifest && manifest->contains("files")) {
        for (const auto& f : (*manifest)["files"]) {
            const std::string s = f.get<std::string>();
            if (s.size() > 4 && s.substr(s.size() - 4) == ".csv") out.push_back(s);
        }
    } else {
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".csv") out.push_back(e.path().filename().string());
        std::sort(out.begin(), out.end());
    }
    return out;
}

std::string shape(const CsvData& d) { return std::to_string(d.rows) + "x" + std::to_string(d.header.size()); }

}  // namespace

CompareReport compare_runs(const fs::path& a, const fs::path& b, double tol, bool force)
{
    if (!fs::is_directory(a)) throw LayoutMismatch("not a run directory: " + a.string());
    if (!fs::is_directory(b)) throw LayoutMismatch("not a run directory: " + b.string());
    const auto ma = read_manifest(a), mb = read_manifest(b);
    CompareReport rep;
    auto version_of = [](const std::optional<nlohmann::json>& m) -> std::string {
        return m && m->contains("toolkit_version") ? (*m)["toolkit_version"].get<std::string>() : "";
    };
    const std::string va = version_of(ma), vb = version_of(mb);
    if (va != vb) {
        const std::string msg = "toolkit versions differ ('" + va + "' vs '" + vb + "')";
        if (!force) throw LayoutMismatch(msg + "; use --force to compare anyway");
        rep.notes.push_back(msg);
    }
    double budget = 0.0;
    if (ma && ma->contains("metrics") && (*ma)["metrics"].contains("sample_budget"))
        budget = (*ma)["metrics"]["sample_budget"].get<double>();
    const auto files = csv_files(a, ma);
    if (files.empty()) throw LayoutMismatch("no tables in " + a.string());
    for (const auto& f : files) {
        if (!fs::exists(b / f)) throw LayoutMismatch(f + " exists in " + a.string() + " but not in " + b.string());
        const CsvData da = read_csv(a / f), db = read_csv(b / f);
        for (const auto* d : {&da, &db}) {
            const auto& m = d == &da ? ma : mb;
            if (m && m->contains("config_hash") && !d->hash.empty() && d->hash != (*m)["config_hash"].get<std::string>()) {
                const std::string msg = f + " carries config hash " + d->hash + " that differs from its manifest";
                if (!force) throw LayoutMismatch(msg + "; use --force to compare anyway");
                rep.notes.push_back(msg);
            }
            if (!d->version.empty() && d->version != (d == &da ? va : vb) && !(d == &da ? va : vb).empty()) {
                const std::string msg = f + " was written by toolkit " + d->version;
                if (!force) throw LayoutMismatch(msg + "; use --force to compare anyway");
                rep.notes.push_back(msg);
            }
        }
        if (da.header != db.header || da.rows != db.rows)
            throw LayoutMismatch(f + ": layouts differ, " + a.string() + " has " + shape(da) + " [" +
                                 std::accumulate(da.header.begin(), da.header.end(), std::string(),
                                                 [](std::string s, const std::string& h) { return s.empty() ? h : s + "," + h; }) +
                                 "], " + b.string() + " has " + shape(db) + " [" +
                                 std::accumulate(db.header.begin(), db.header.end(), std::string(),
                                                 [](std::string s, const std::string& h) { return s.empty() ? h : s + "," + h; }) +
                                 "]");
        int mean_col = -1, std_col = -1;
        for (size_t j = 0; j < da.header.size(); ++j) {
            if (da.header[j] == "mean") mean_col = int(j);
            if (da.header[j] == "std") std_col = int(j);
        }
        for (size_t j = 0; j < da.header.size(); ++j) {
            const Eigen::Map<const Eigen::VectorXd> x(da.columns[j].data(), da.rows), y(db.columns[j].data(), db.rows);
            const double den = y.norm();
            ColumnDiff c;
            c.file = f;
            c.column = da.header[j];
            c.rel_l2 = den > 0.0 ? (x - y).norm() / den : (x - y).norm();
            c.pass = c.rel_l2 <= tol;
            if (int(j) == mean_col && std_col >= 0 && budget > 0.0 && den > 0.0) {
                const Eigen::Map<const Eigen::VectorXd> s(da.columns[std_col].data(), da.rows);
                c.predicted_band = s.norm() / std::sqrt(budget) / den;
            }
            rep.pass = rep.pass && c.pass;
            rep.columns.push_back(c);
        }
    }
    return rep;
}

}  // namespace kmf
