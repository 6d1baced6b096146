#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kmf {

// Raised when a statistic needs more samples than provided.
struct InsufficientSamples : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NotPositiveSemidefinite : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateState : std::domain_error {
    using std::domain_error::domain_error;
};

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct SolverFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Grid1D {
    double x_min = 0.0;
    double x_max = 1.0;
    int n_cells = 1;

    Grid1D() = default;
    Grid1D(double lo, double hi, int n);

    double spacing() const { return (x_max - x_min) / n_cells; }
    double center(int i) const { return x_min + (i + 0.5) * spacing(); }
    double face(int i) const { return x_min + i * spacing(); }
    Eigen::VectorXd cell_centers() const;
    // Index of the cell containing x, or -1 outside [x_min, x_max].
    int locate(double x) const;
};

template <typename Scalar = double>
struct VelocityQuadrature {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;

    Eigen::Index size() const { return nodes.size(); }
};

// n-point Gauss-Legendre rule on [-1, 1], nodes in increasing order.
VelocityQuadrature<double> gauss_legendre(int n);

// Positive half of an even Gauss-Legendre rule, weights rescaled to sum to one.
VelocityQuadrature<double> half_range_gauss_legendre(int n_full);

// A discretized solution: rows index physical cells, columns velocity or agent-state cells.
struct Field {
    std::optional<Grid1D> x;
    std::optional<Grid1D> v;
    Eigen::MatrixXd values;
    std::string model;
    double time = 0.0;

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    bool same_layout(const Field& other) const;
};

// Parameter draws (K x d_z) with the matching solutions stored column-wise (n_points x K).
struct SampleEnsemble {
    Eigen::MatrixXd params;
    Eigen::MatrixXd values;
    std::uint64_t seed = 0;

    Eigen::Index size() const { return values.cols(); }
};

// Discrete L^1_2 norm sum |f| (1+|v|)^2 dx dv; x spacing taken as 1 without an x axis.
double weighted_norm_l1_2(const Field& f);

// Unbiased (Var b, Cov(a, b)) with 1/(K-1) normalization.
template <typename DA, typename DB>
std::pair<typename DA::Scalar, typename DA::Scalar> sample_var_cov(const Eigen::DenseBase<DA>& a,
                                                                   const Eigen::DenseBase<DB>& b)
{
    using Scalar = typename DA::Scalar;
    const Eigen::Index k = a.size();
    if (k != b.size()) throw std::invalid_argument("sample_var_cov: length mismatch");
    if (k < 2) throw InsufficientSamples("sample_var_cov: need at least 2 samples");
    const Scalar ma = a.derived().sum() / Scalar(k);
    const Scalar mb = b.derived().sum() / Scalar(k);
    Scalar var = 0, cov = 0;
    for (Eigen::Index i = 0; i < k; ++i) {
        const Scalar db = b.derived()(i) - mb;
        var += db * db;
        cov += (a.derived()(i) - ma) * db;
    }
    return {var / Scalar(k - 1), cov / Scalar(k - 1)};
}

// Row-wise version: each row of A, B is one grid point, columns are samples.
template <typename DA, typename DB>
std::pair<Eigen::Matrix<typename DA::Scalar, Eigen::Dynamic, 1>,
          Eigen::Matrix<typename DA::Scalar, Eigen::Dynamic, 1>>
pointwise_var_cov(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B)
{
    using Scalar = typename DA::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (A.rows() != B.rows() || A.cols() != B.cols())
        throw std::invalid_argument("pointwise_var_cov: shape mismatch");
    const Eigen::Index k = A.cols();
    if (k < 2) throw InsufficientSamples("pointwise_var_cov: need at least 2 samples");
    const Vec ma = A.rowwise().sum() / Scalar(k);
    const Vec mb = B.rowwise().sum() / Scalar(k);
    Vec var = Vec::Zero(A.rows()), cov = Vec::Zero(A.rows());
    for (Eigen::Index j = 0; j < k; ++j) {
        const Vec db = B.col(j) - mb;
        var.array() += db.array().square();
        cov.array() += (A.col(j) - ma).array() * db.array();
    }
    return {var / Scalar(k - 1), cov / Scalar(k - 1)};
}

template <typename D>
Eigen::Matrix<typename D::Scalar, Eigen::Dynamic, 1> pointwise_mean(const Eigen::MatrixBase<D>& A)
{
    return A.rowwise().sum() / typename D::Scalar(A.cols());
}

template <typename D>
Eigen::Matrix<typename D::Scalar, Eigen::Dynamic, 1> pointwise_std(const Eigen::MatrixBase<D>& A)
{
    if (A.cols() < 2) return Eigen::Matrix<typename D::Scalar, Eigen::Dynamic, 1>::Zero(A.rows());
    return pointwise_var_cov(A, A).first.cwiseMax(0).cwiseSqrt();
}

// G_ij = <u_i, u_j>_W for snapshot columns of U; W is a diagonal weight (empty = unit weights).
template <typename D>
Eigen::Matrix<typename D::Scalar, Eigen::Dynamic, Eigen::Dynamic>
gram_matrix(const Eigen::MatrixBase<D>& U,
            const Eigen::Matrix<typename D::Scalar, Eigen::Dynamic, 1>& weights = {})
{
    using Scalar = typename D::Scalar;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (weights.size() != 0 && weights.size() != U.rows())
        throw std::invalid_argument("gram_matrix: weight length does not match snapshot length");
    const Eigen::Index n = U.cols();
    Mat WU = weights.size() ? Mat(weights.asDiagonal() * U) : Mat(U);
    Mat G(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i <= j; ++i) {
            const Scalar g = U.col(i).dot(WU.col(j));
            G(i, j) = g;
            G(j, i) = g;
        }
    return G;
}

template <typename Scalar = double>
struct PivotedCholesky {
    std::vector<int> perm;                                       // pivot order, then the rest ascending
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> L;     // N x rank, rows in pivot order
    int rank = 0;
    std::vector<Scalar> pivot_residual;                          // residual diagonal of each pivot
};

// Greedy diagonal pivoting: each step takes the largest residual diagonal, lowest index on ties.
template <typename D>
PivotedCholesky<typename D::Scalar> pivoted_cholesky(const Eigen::MatrixBase<D>& G, int m)
{
    using Scalar = typename D::Scalar;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    const int n = static_cast<int>(G.rows());
    if (G.cols() != n) throw std::invalid_argument("pivoted_cholesky: matrix not square");
    if (m < 1 || m > n) throw std::invalid_argument("pivoted_cholesky: target rank out of range");

    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d = G.diagonal();
    const Scalar dmax = d.size() ? d.maxCoeff() : Scalar(0);
    const Scalar scale = std::max(dmax, Scalar(0));
    if (d.minCoeff() < -Scalar(1e-10) * scale) throw NotPositiveSemidefinite("pivoted_cholesky: negative diagonal");

    PivotedCholesky<Scalar> out;
    Mat Lfull = Mat::Zero(n, m);   // rows in original index order
    std::vector<char> taken(n, 0);
    for (int k = 0; k < m; ++k) {
        int best = -1;
        Scalar best_val = 0;
        for (int i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best < 0 || d(i) > best_val) {
                best = i;
                best_val = d(i);
            }
        }
        if (best < 0 || best_val <= Scalar(1e-12) * scale) break;
        if (best_val < -Scalar(1e-10) * scale) throw NotPositiveSemidefinite("pivoted_cholesky: negative residual");
        taken[best] = 1;
        out.perm.push_back(best);
        out.pivot_residual.push_back(best_val);
        const Scalar piv = std::sqrt(best_val);
        for (int i = 0; i < n; ++i) {
            if (taken[i] && i != best) continue;
            Scalar s = G(i, best);
            for (int j = 0; j < k; ++j) s -= Lfull(i, j) * Lfull(best, j);
            Lfull(i, k) = (i == best) ? piv : s / piv;
        }
        for (int i = 0; i < n; ++i)
            if (!taken[i]) d(i) -= Lfull(i, k) * Lfull(i, k);
        ++out.rank;
    }
    for (int i = 0; i < n; ++i)
        if (!taken[i]) out.perm.push_back(i);
    out.L = Mat::Zero(n, out.rank);
    for (int r = 0; r < n; ++r) out.L.row(r) = Lfull.row(out.perm[r]).head(out.rank);
    return out;
}

// Solves a tridiagonal system with sub-diagonal a (a(0) unused), diagonal b, super-diagonal c (c(n-1) unused).
template <typename DA, typename DB, typename DC, typename DD>
Eigen::Matrix<typename DB::Scalar, Eigen::Dynamic, 1> thomas_solve(const Eigen::MatrixBase<DA>& a,
                                                                 const Eigen::MatrixBase<DB>& b,
                                                                 const Eigen::MatrixBase<DC>& c,
                                                                 const Eigen::MatrixBase<DD>& d)
{
    using Scalar = typename DB::Scalar;
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    const Eigen::Index n = b.size();
    if (a.size() != n || c.size() != n || d.size() != n) throw std::invalid_argument("thomas_solve: size mismatch");
    Vec cp(n), dp(n), x(n);
    Scalar den = b(0);
    if (den == Scalar(0)) throw std::runtime_error("thomas_solve: zero pivot");
    cp(0) = c(0) / den;
    dp(0) = d(0) / den;
    for (Eigen::Index i = 1; i < n; ++i) {
        den = b(i) - a(i) * cp(i - 1);
        if (den == Scalar(0)) throw std::runtime_error("thomas_solve: zero pivot");
        cp(i) = i + 1 < n ? c(i) / den : Scalar(0);
        dp(i) = (d(i) - a(i) * dp(i - 1)) / den;
    }
    x(n - 1) = dp(n - 1);
    for (Eigen::Index i = n - 2; i >= 0; --i) x(i) = dp(i) - cp(i) * x(i + 1);
    return x;
}

enum class OutOfRange { clamp, reject };

// Piecewise-constant density counts/(N dw) on the grid; integrates to one.
Field histogram_reconstruct(const Eigen::Ref<const Eigen::VectorXd>& particles, const Grid1D& grid,
                            OutOfRange policy = OutOfRange::clamp);

// Thread count used by ensemble loops; 0 selects hardware concurrency.
void set_default_threads(int n);
int default_threads();

// Runs body(i) for i in [0, n); each index is processed exactly once.
void parallel_for(int n, const std::function<void(int)>& body, int threads = 0);

}  // namespace kmf
