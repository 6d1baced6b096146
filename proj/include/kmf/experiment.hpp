#pragma once

#include "kmf/collocation.hpp"
#include "kmf/estimators.hpp"
#include "kmf/gas.hpp"
#include "kmf/numerics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace kmf {

inline constexpr const char* toolkit_version = "1.0.0";
inline constexpr int config_schema_version = 1;

// ---------- scenario models shared by presets and checks ----------

// Space homogeneous two-bumps problem; quantities are v1-marginal cell averages at each save time,
// stacked time-major.
struct TwoBumpsSetup {
    Grid1D velocity{-16.0, 16.0, 64};
    double nu = 1.0;
    std::vector<double> times{0.5, 1.0, 2.0};
    int N = 100000;         // DSMC particles
    double dsmc_dt = 0.5;
};

ParamSpace two_bumps_space();
SampleModel two_bumps_bgk_model(const TwoBumpsSetup& s);
SampleModel two_bumps_initial_model(const TwoBumpsSetup& s);
SampleModel two_bumps_equilibrium_model(const TwoBumpsSetup& s);
SampleModel two_bumps_dsmc_model(const TwoBumpsSetup& s);

// Sod tube with uncertain temperature; quantities are temperature fields at each save time, time-major.
struct SodSetup {
    int nx = 100;
    int nv = 32;
    double v_max = 8.0;
    double epsilon = 1e-3;
    double cfl = 0.9;
    std::vector<double> times{0.05, 0.1, 0.15};
};

enum class SodModel { kinetic_high, kinetic_low, euler };

ParamSpace sod_space();
// kinetic_high: BGK with MUSCL reconstruction; kinetic_low: first-order BGK; euler: Rusanov.
SampleModel sod_temperature_model(const SodSetup& s, SodModel which);

// Mean over save times of the L2 distance between two time-major stacks of n_times blocks.
double time_averaged_l2(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int n_times, double cell_size);

// Bi-fidelity collocation on a named transport or SIR model pair. Candidates and test points are
// drawn from substreams 1 and 2 of `seed`; errors are relative L2 of the test-set mean and std.
struct BfscLevel {
    int M = 0;
    double mean_error = 0.0;
    double std_error = 0.0;
    double R_s = 0.0;
    double R_e = 0.0;
    int rank = 0;
    double bound_coverage = 0.0;   // fraction of test points whose error bound dominates the true error
};

struct BfscStudy {
    std::vector<BfscLevel> levels;   // ascending M
    BfscModel final_model;
    Eigen::MatrixXd candidates;      // N x d parameter points
    Grid1D grid;                     // high-fidelity grid
    Eigen::VectorXd hi_mean, hi_std, bf_mean, bf_std;
    int hi_solves = 0;
};

BfscStudy bfsc_study(const std::string& pair, int candidates, std::vector<long> budgets, int test_points,
                     std::uint64_t seed, int threads = 0);

// ---------- configuration ----------

using ParamValue = std::variant<bool, long, double, std::string, std::vector<long>, std::vector<double>>;

enum class ParamKind { flag, integer, real, text, integer_list, real_list };

struct ParamDecl {
    std::string name;
    ParamKind kind = ParamKind::real;
    ParamValue value;   // default
    double min = 0.0, max = 0.0;   // inclusive range for numbers and list entries
    std::vector<std::string> choices;
    std::string help;
};

class ParamSet {
public:
    void set(const std::string& name, ParamValue v) { values_[name] = std::move(v); }
    bool has(const std::string& name) const { return values_.count(name) != 0; }
    bool flag(const std::string& name) const;
    long integer(const std::string& name) const;
    double real(const std::string& name) const;
    const std::string& text(const std::string& name) const;
    const std::vector<long>& integers(const std::string& name) const;
    const std::vector<double>& reals(const std::string& name) const;
    const std::map<std::string, ParamValue>& values() const { return values_; }

private:
    const ParamValue& at(const std::string& name) const;
    std::map<std::string, ParamValue> values_;
};

std::string format_value(const ParamValue& v);

// Schema violation with the location it was detected at (1-based; 0 when unknown).
struct SchemaError : ConfigError {
    SchemaError(const std::string& source, int line, int column, const std::string& message);
    int line = 0;
    int column = 0;
};

struct ExperimentConfig {
    std::string preset;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string output;   // empty: derived from the output root
    ParamSet params;      // preset defaults merged with overrides
};

// Parses and validates YAML text against the preset registry.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& file);

// Re-validates a value against its declaration; used for command line overrides.
void set_parameter(ExperimentConfig& cfg, const std::string& name, const ParamValue& v);

// FNV-1a 64 of the canonical (preset, seed, parameters) text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// ---------- presets and runs ----------

struct PresetInfo {
    std::string name;
    std::string description;
    std::vector<ParamDecl> params;
};

const std::vector<PresetInfo>& list_presets();
const PresetInfo& find_preset(const std::string& name);
// Configuration with every parameter at its default.
ExperimentConfig preset_config(const std::string& name, std::uint64_t seed);

struct RunManifest {
    std::string config_hash;
    std::string version = toolkit_version;
    std::string preset;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, double>> phases;   // wall time in seconds
    std::vector<std::string> files;
    std::vector<std::pair<std::string, double>> metrics;   // scalar summaries, including "sample_budget"
    std::filesystem::path directory;
};

// Output root from KMF_OUTPUT_ROOT (default "runs") joined with preset and hash, unless cfg.output is set.
std::filesystem::path output_directory(const ExperimentConfig& cfg);

RunManifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// ---------- comparison ----------

struct LayoutMismatch : ConfigError {
    using ConfigError::ConfigError;
};

struct ColumnDiff {
    std::string file;
    std::string column;
    double rel_l2 = 0.0;
    bool pass = true;
    std::optional<double> predicted_band;   // ||std|| / (sqrt(M) ||mean||) for mean columns
};

struct CompareReport {
    std::vector<ColumnDiff> columns;
    std::vector<std::string> notes;
    bool pass = true;
};

CompareReport compare_runs(const std::filesystem::path& a, const std::filesystem::path& b, double tolerance,
                           bool force = false);

}  // namespace kmf
