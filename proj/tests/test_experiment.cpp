#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kmf/experiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace kmf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("kmf_test_experiment_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int schema_line(const std::string& yaml)
{
    try {
        parse_config(yaml, "t.yaml");
    } catch (const SchemaError& e) {
        return e.line;
    }
    return -1;
}

}  // namespace

TEST_CASE("two-bumps scenario models")
{
    TwoBumpsSetup s;
    s.times = {0.0, 1.0};
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.4);
    const double h = s.velocity.spacing();
    const double rho = two_bumps_moments(0.4).rho;
    const int n = s.velocity.n_cells;

    const Eigen::VectorXd bgk = two_bumps_bgk_model(s)(z, 1);
    const Eigen::VectorXd f0 = two_bumps_initial_model(s)(z, 1);
    const Eigen::VectorXd feq = two_bumps_equilibrium_model(s)(z, 1);
    REQUIRE(bgk.size() == 2 * n);
    CHECK((bgk.head(n) - f0.head(n)).norm() < 1e-12);
    // Exact BGK relaxation is the convex combination of its endpoints.
    const double a = std::exp(-1.0);
    CHECK((bgk.tail(n) - (a * f0.tail(n) + (1 - a) * feq.tail(n))).norm() < 1e-10);
    CHECK(h * bgk.tail(n).sum() == doctest::Approx(rho).epsilon(1e-6));

    s.N = 20000;
    const SampleModel dsmc = two_bumps_dsmc_model(s);
    const Eigen::VectorXd d1 = dsmc(z, 5), d2 = dsmc(z, 5);
    CHECK(d1 == d2);
    CHECK(h * d1.tail(n).sum() == doctest::Approx(rho).epsilon(1e-9));
    CHECK((d1.head(n) - f0.head(n)).norm() < 0.05 * f0.head(n).norm());
    CHECK((d1.tail(n) - feq.tail(n)).norm() < 0.8 * (d1.head(n) - feq.head(n)).norm());

    s.dsmc_dt = 3.0;
    CHECK_THROWS_AS(two_bumps_dsmc_model(s), ConfigError);
    s.dsmc_dt = 0.5;
    s.times = {1.0, 0.5};
    CHECK_THROWS_AS(two_bumps_bgk_model(s), ConfigError);
}

TEST_CASE("Sod temperature hierarchy")
{
    SodSetup s;
    s.nx = 40;
    s.nv = 16;
    s.times = {0.05, 0.1};
    const Eigen::VectorXd z = Eigen::VectorXd::Constant(1, 0.5);
    const Eigen::VectorXd hi = sod_temperature_model(s, SodModel::kinetic_high)(z, 0);
    const Eigen::VectorXd lo = sod_temperature_model(s, SodModel::kinetic_low)(z, 0);
    const Eigen::VectorXd eu = sod_temperature_model(s, SodModel::euler)(z, 0);
    REQUIRE(hi.size() == 80);
    REQUIRE(lo.size() == 80);
    REQUIRE(eu.size() == 80);
    CHECK(hi.minCoeff() > 0.0);
    const double dx = 1.0 / 40;
    // Near the fluid limit the three models describe the same flow.
    CHECK(time_averaged_l2(hi, eu, 2, dx) < 0.2);
    CHECK(time_averaged_l2(lo, eu, 2, dx) < 0.2);
    CHECK(time_averaged_l2(hi, hi, 2, dx) == 0.0);
    CHECK_THROWS(time_averaged_l2(hi, hi.head(79), 2, dx));
}

TEST_CASE("configuration schema")
{
    const ExperimentConfig c = parse_config("preset: homog-two-bumps-mscv2\nseed: 3\nparameters:\n  M: 40\n  times: [1, 2]\n");
    CHECK(c.preset == "homog-two-bumps-mscv2");
    CHECK(c.seed == 3);
    CHECK(c.params.integer("M") == 40);
    CHECK(c.params.reals("times") == std::vector<double>{1.0, 2.0});
    CHECK(c.params.real("nu") == 1.0);

    CHECK(schema_line("preset: homog-two-bumps-mscv2\n") == 1);
    CHECK(schema_line("preset: homog-two-bumps-mscv2\nseed: 1\nextra: 2\n") == 3);
    CHECK(schema_line("preset: homog-two-bumps-mscv2\nseed: 1\nparameters:\n  M: 1\n") == 4);
    CHECK(schema_line("preset: homog-two-bumps-mscv2\nseed: 1\nparameters:\n  M: 10\n  nu: abc\n") == 5);
    CHECK(schema_line("preset: homog-two-bumps-mscv2\nseed: 1\nparameters:\n  times: [2, 1]\n") == 4);
    CHECK(schema_line("schema: 2\npreset: homog-two-bumps-mscv2\nseed: 1\n") == 1);
    CHECK(schema_line("preset: sod-mscv\nseed: 1\nparameters:\n  M: 50\n  M_ctrl: 20\n") == 5);
    CHECK(schema_line("preset: sod-hierarchical\nseed: 1\nparameters:\n\n  budgets: [10, 100, 5]\n") == 5);
    CHECK(schema_line("preset: [a\n") >= 1);
}

TEST_CASE("overrides and configuration hash")
{
    ExperimentConfig c = preset_config("transport-kl-bfsc", 11);
    const std::string h0 = config_hash(c);
    CHECK(h0.size() == 16);
    CHECK(config_hash(preset_config("transport-kl-bfsc", 11)) == h0);
    set_parameter(c, "M_list", std::string("[2, 3]"));
    CHECK(c.params.integers("M_list") == std::vector<long>{2, 3});
    CHECK(config_hash(c) != h0);
    set_parameter(c, "test_points", std::string("12"));
    CHECK(c.params.integer("test_points") == 12);
    CHECK_THROWS_AS(set_parameter(c, "test_points", std::string("1.5")), ConfigError);
    CHECK_THROWS_AS(set_parameter(c, "case", std::string("nonsense")), ConfigError);
    CHECK_THROWS_AS(set_parameter(c, "candidates", std::string("2")), ConfigError);
    CHECK_THROWS_AS(set_parameter(c, "unknown", std::string("2")), ConfigError);
    ExperimentConfig other = c;
    other.seed = 12;
    CHECK(config_hash(other) != config_hash(c));
}

TEST_CASE("preset registry")
{
    const auto& presets = list_presets();
    CHECK(presets.size() == 13);
    for (const auto& p : presets) {
        CHECK(!p.description.empty());
        CHECK(find_preset(p.name).name == p.name);
        const ExperimentConfig c = preset_config(p.name, 1);
        CHECK(c.params.values().size() == p.params.size());
    }
    CHECK_THROWS_AS(find_preset("missing"), ConfigError);
}

TEST_CASE("runs write reproducible tables and a manifest")
{
    ExperimentConfig c = preset_config("homog-two-bumps-mc", 5);
    set_parameter(c, "M_list", std::string("[10, 40]"));
    const fs::path a = scratch("a"), b = scratch("b");
    const RunManifest m = run_experiment(c, a);
    run_experiment(c, b);
    CHECK(m.config_hash == config_hash(c));
    for (const auto& f : m.files) CHECK(slurp(a / f) == slurp(b / f));
    const std::string errors = slurp(a / "errors.csv");
    CHECK(errors.rfind("# kmf " + std::string(toolkit_version) + " config_hash=" + m.config_hash + "\n", 0) == 0);
    CHECK(fs::exists(a / "manifest.json"));
    CHECK(!fs::exists(a / "manifest.json.tmp"));

    const CompareReport same = compare_runs(a, b, 0.0);
    CHECK(same.pass);
    bool banded = false;
    for (const auto& col : same.columns) banded = banded || col.predicted_band.has_value();
    CHECK(banded);

    ExperimentConfig c2 = c;
    c2.seed = 6;
    const fs::path d = scratch("d");
    run_experiment(c2, d);
    CHECK(compare_runs(a, d, 1e-3).pass == false);

    std::string tampered = slurp(b / "errors.csv");
    tampered.replace(tampered.find("config_hash=") + 12, 16, "0000000000000000");
    std::ofstream(b / "errors.csv", std::ios::binary | std::ios::trunc) << tampered;
    CHECK_THROWS_AS(compare_runs(a, b, 0.0), LayoutMismatch);
    CHECK(compare_runs(a, b, 0.0, true).pass);

    set_parameter(c2, "v_cells", std::string("32"));
    const fs::path e = scratch("e");
    run_experiment(c2, e);
    try {
        compare_runs(a, e, 1.0, true);
        FAIL("layout mismatch not detected");
    } catch (const LayoutMismatch& err) {
        CHECK(std::string(err.what()).find("x5") != std::string::npos);
    }
    for (const auto& p : {a, b, d, e}) fs::remove_all(p);
}

TEST_CASE("output directory precedence")
{
    ExperimentConfig c = preset_config("sod-mscv", 2);
    const fs::path def = output_directory(c);
    CHECK(def.filename().string() == "sod-mscv-" + config_hash(c));
    c.output = "custom";
    CHECK(output_directory(c) == fs::path("custom"));
}
