#pragma once

#include "kmf/agents.hpp"
#include "kmf/numerics.hpp"
#include "kmf/random_space.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace kmf {

// Sample matrices hold one grid point per row and one sample per column.
template <typename Scalar = double>
struct BasicEstimatorReport {
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Vec mean;            // estimate of E[q]
    Vec std;             // sample std of the high-fidelity quantity
    Vec residual_std;    // sample std of the controlled variable q - sum lambda_h q_h
    Mat lambda;          // n x L control weights (empty for plain MC)
    std::vector<long> budgets;
    std::vector<double> wall_times;   // seconds per evaluated model
    std::vector<std::string> diagnostics;
    int inactive_points = 0;          // grid points where a control was switched off
};

using EstimatorReport = BasicEstimatorReport<double>;

namespace detail {

// A control is inert at a point when its variance is negligible against the larger of its own
// and the high-fidelity variance there.
template <typename Scalar>
bool control_active(Scalar var_lo, Scalar var_hi)
{
    return var_lo > Scalar(1e-14) * std::max(var_lo, var_hi);
}

}  // namespace detail

// Pointwise Cov(q_hi, q_lo) / Var(q_lo); zero where Var(q_lo) <= 1e-14 * max(Var(q_lo), Var(q_hi)).
template <typename DH, typename DL>
Eigen::Matrix<typename DH::Scalar, Eigen::Dynamic, 1> optimal_lambda(const Eigen::MatrixBase<DH>& hi,
                                                                     const Eigen::MatrixBase<DL>& lo,
                                                                     int* inactive = nullptr)
{
    using Scalar = typename DH::Scalar;
    auto [var, cov] = pointwise_var_cov(hi, lo);
    const auto var_hi = pointwise_var_cov(hi, hi).first;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lam(var.size());
    int off = 0;
    for (Eigen::Index i = 0; i < var.size(); ++i) {
        if (!detail::control_active(var(i), var_hi(i))) {
            lam(i) = 0;
            ++off;
        } else {
            lam(i) = cov(i) / var(i);
        }
    }
    if (inactive) *inactive = off;
    return lam;
}

template <typename D>
EstimatorReport mc_estimate(const Eigen::MatrixBase<D>& q)
{
    if (q.cols() < 2) throw InsufficientSamples("mc_estimate: need at least 2 samples");
    EstimatorReport r;
    r.mean = pointwise_mean(q);
    r.std = pointwise_std(q);
    r.residual_std = r.std;
    r.budgets = {static_cast<long>(q.cols())};
    return r;
}

// Bi-fidelity estimator E_M[hi] - lam (E_M[lo] - E_lo).
// `lo` holds M_ctrl >= M samples whose first M columns pair with `hi`. With an offline
// expectation the control mean is exact and no budget correction is applied; otherwise
// E_lo = E_{M_ctrl}[lo] and lam = M_ctrl / (M + M_ctrl) * Cov / Var.
template <typename DH, typename DL>
EstimatorReport mscv_bifidelity(const Eigen::MatrixBase<DH>& hi, const Eigen::MatrixBase<DL>& lo,
                                const std::optional<Eigen::VectorXd>& offline = std::nullopt)
{
    const Eigen::Index M = hi.cols(), ME = lo.cols(), n = hi.rows();
    if (M < 2) throw InsufficientSamples("mscv_bifidelity: need at least 2 high-fidelity samples");
    if (lo.rows() != n) throw ConfigError("mscv_bifidelity: control has a different number of points");
    if (ME < M) throw ConfigError("mscv_bifidelity: control budget M_ctrl must be at least M");
    if (offline && offline->size() != n) throw ConfigError("mscv_bifidelity: offline expectation size mismatch");

    EstimatorReport r;
    const Eigen::MatrixXd lo_shared = lo.leftCols(M);
    Eigen::VectorXd lam = optimal_lambda(hi, lo_shared, &r.inactive_points);
    Eigen::VectorXd e_lo;
    if (offline) {
        e_lo = *offline;
    } else {
        e_lo = pointwise_mean(lo);
        lam *= static_cast<double>(ME) / static_cast<double>(M + ME);
    }
    const Eigen::VectorXd m_hi = pointwise_mean(hi), m_lo = pointwise_mean(lo_shared);
    r.mean = m_hi - lam.cwiseProduct(m_lo - e_lo);
    r.std = pointwise_std(hi);
    const Eigen::MatrixXd resid = hi - lam.asDiagonal() * lo_shared;
    r.residual_std = pointwise_std(resid);
    r.lambda = lam;
    r.budgets = {static_cast<long>(M), static_cast<long>(ME)};
    if (r.inactive_points) r.diagnostics.push_back("control inactive at " + std::to_string(r.inactive_points) + " points");
    return r;
}

// Multi-fidelity estimator with L controls sampled on the same M draws as `hi`.
// controls[h] may hold more columns than hi (first M shared); expectations[h] is either exact
// or empty, in which case the mean over all of controls[h] is used.
EstimatorReport mscv_multifidelity(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& controls,
                                   const std::vector<std::optional<Eigen::VectorXd>>& expectations,
                                   bool orthogonalize = false);

// Hierarchical estimator. levels[h-1] holds f_h (h = 1..L, increasing fidelity) on M_{h-1}
// samples; hi holds f on M_L samples. Each level's draws are a prefix of the previous one's.
EstimatorReport mscv_hierarchical(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& levels,
                                  bool solve_tridiagonal = false);

// Quasi-optimal products and tridiagonal optimum of the hierarchical weights (n x L each).
struct HierarchicalWeights {
    Eigen::MatrixXd quasi_optimal;
    Eigen::MatrixXd tridiagonal;
};
HierarchicalWeights hierarchical_weights(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& levels);

// ---------- model-level drivers ----------

// Maps a parameter point and a per-sample seed to a flattened quantity of interest.
using SampleModel = std::function<Eigen::VectorXd(const Eigen::VectorXd& z, std::uint64_t sample_seed)>;

// Seed handed to the model for sample k (independent of the parameter stream).
std::uint64_t model_seed(std::uint64_t seed, long k);

// Evaluates samples [first, first + count) of the draw sequence; failures are rethrown as
// SolverFailure naming the lowest failing sample index.
Eigen::MatrixXd evaluate_samples(const SampleModel& model, const Eigen::MatrixXd& Z, std::uint64_t seed,
                                 long first = 0, long count = -1, int threads = 0);

EstimatorReport mc_estimate(const SampleModel& model, const ParamSpace& space, int M, std::uint64_t seed);

EstimatorReport mscv_bifidelity(const SampleModel& hi, const SampleModel& lo, const ParamSpace& space, int M,
                                int M_ctrl, std::uint64_t seed,
                                const std::optional<Eigen::VectorXd>& offline = std::nullopt);

struct ControlVariate {
    SampleModel model;
    int budget = 0;                               // samples of this control (>= M)
    std::optional<Eigen::VectorXd> expectation;   // exact expectation when known
};

EstimatorReport mscv_multifidelity(const SampleModel& hi, const std::vector<ControlVariate>& controls,
                                   const ParamSpace& space, int M, std::uint64_t seed, bool orthogonalize = false);

// budgets = (M_0, ..., M_L); controls ordered by increasing fidelity.
EstimatorReport mscv_hierarchical(const SampleModel& hi, const std::vector<SampleModel>& controls,
                                  const std::vector<int>& budgets, const ParamSpace& space, std::uint64_t seed,
                                  bool solve_tridiagonal = false);

// Expectation over z of a model by tensor Gauss-Legendre collocation (n_nodes per dimension).
Eigen::VectorXd collocation_expectation(const SampleModel& model, const ParamSpace& space, int n_nodes,
                                        int threads = 0);

// ---------- mean-field control variates for agent ensembles ----------

enum class MeanFieldControl { time_dependent, steady_state };

struct MfcvConfig {
    MeanFieldControl control = MeanFieldControl::steady_state;
    double t_end = 5.0;
    int M = 10;
    int N = 20000;
    std::optional<Grid1D> grid;   // histogram grid, defaults to the preset domain
    int fp_refine = 10;           // Fokker-Planck cells per histogram cell
    double fp_dt = 1e-3;
    int collocation_nodes = 20;
    int threads = 0;
};

// Histogram density of a DSMC run with N agents at t_end (z is the first parameter component).
SampleModel dsmc_histogram_model(const AgentPreset& preset, double t_end, int N, const Grid1D& grid);
// Cell averages of the mean-field solution at t_end or of the analytic steady state.
SampleModel mean_field_model(const AgentPreset& preset, MeanFieldControl kind, double t_end, const Grid1D& grid,
                             int fp_refine = 10, double fp_dt = 1e-3);

struct MfcvReport : EstimatorReport {
    Eigen::VectorXd mc_mean;               // plain average of the same DSMC samples
    Eigen::VectorXd control_expectation;   // collocation estimate of E[control]
};

MfcvReport mfcv_dsmc(const AgentPreset& preset, const MfcvConfig& cfg, std::uint64_t seed);

}  // namespace kmf
