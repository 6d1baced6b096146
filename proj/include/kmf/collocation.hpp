#pragma once

#include "kmf/numerics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace kmf {

// Diagonally weighted inner product; empty weights mean the Euclidean one.
struct InnerProduct {
    Eigen::VectorXd weights;

    double dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
    double norm(const Eigen::VectorXd& a) const;
    Eigen::MatrixXd gram(const Eigen::MatrixXd& U) const;
    Eigen::VectorXd against(const Eigen::MatrixXd& U, const Eigen::VectorXd& a) const;   // U^T W a
};

struct SelectionResult {
    std::vector<int> indices;            // selected candidates in pivot order
    PivotedCholesky<double> cholesky;    // of the candidate Gramian, truncated at the achieved rank
    int rank = 0;
    std::vector<std::string> warnings;
};

// Greedy selection by pivoted Cholesky of the low-fidelity Gramian; snapshots are columns.
SelectionResult select_points(const Eigen::MatrixXd& lo_snapshots, int M, const InnerProduct& ip = {});

// Reference greedy: at each step the candidate with the largest distance to the span of the
// selected snapshots (lowest index on ties), distances by explicit least squares.
std::vector<int> greedy_select_reference(const Eigen::MatrixXd& lo_snapshots, int M, const InnerProduct& ip = {});

struct BifiSurrogate {
    std::vector<int> indices;
    Eigen::MatrixXd lo_basis;    // n_L x M
    Eigen::MatrixXd hi_basis;    // n_H x M
    Eigen::MatrixXd gram_lo;     // M x M
    Eigen::MatrixXd gram_hi;     // M x M
    InnerProduct lo_ip, hi_ip;
    double shift = 0.0;          // Tikhonov shift applied to gram_lo
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> lo_qr;   // of the weighted basis, used when unshifted
    std::string config_hash;

    int size() const { return static_cast<int>(lo_basis.cols()); }
    bool regularized() const { return shift > 0.0; }
};

BifiSurrogate build_surrogate(const Eigen::MatrixXd& lo_basis, const Eigen::MatrixXd& hi_basis,
                              std::vector<int> indices, const InnerProduct& lo_ip = {},
                              const InnerProduct& hi_ip = {});

// Coefficients c solving G^L c = f^L with f^L_k = <u, u^L_k>.
Eigen::VectorXd project_low(const Eigen::VectorXd& u_lo, const BifiSurrogate& s);
Eigen::VectorXd reconstruct(const Eigen::VectorXd& c, const BifiSurrogate& s);
// Columns of the result are reconstructions for the columns of lo.
Eigen::MatrixXd predict(const BifiSurrogate& s, const Eigen::MatrixXd& lo);

// Distance of u to the span of the low- or high-fidelity basis.
double distance_lo(const BifiSurrogate& s, const Eigen::VectorXd& u_lo);
double distance_hi(const BifiSurrogate& s, const Eigen::VectorXd& u_hi);

struct QualityIndicators {
    double R_s = std::numeric_limits<double>::infinity();
    double R_e = std::numeric_limits<double>::infinity();
    bool R_s_indeterminate = false;
    bool R_e_indeterminate = false;
    double rel_distance_lo = 0.0;
    double rel_distance_hi = 0.0;
    double projection_gap = 0.0;   // ||P_H u^H - u^B||
    std::vector<std::string> warnings;
};

// Indicators at a test point with both fidelities solved (typically the (M+1)-th selected point).
QualityIndicators quality_indicators(const BifiSurrogate& s, const Eigen::VectorXd& u_lo, const Eigen::VectorXd& u_hi);

// Relative error bound d^L(u)/||u|| (c1 + c2 R_e) for a new point from its low-fidelity solution.
double error_bound(const BifiSurrogate& s, const Eigen::VectorXd& u_lo, double R_e, double c1 = 1.0, double c2 = 1.0);

// Offline/online pipeline: selects M + 1 points, solves the high-fidelity model on them and builds
// the surrogate from the first M; the last one drives the quality indicators.
struct BfscModel {
    SelectionResult selection;
    BifiSurrogate surrogate;
    QualityIndicators quality;
    bool has_test_point = false;
};

BfscModel bfsc_build(const Eigen::MatrixXd& lo_candidates, const std::function<Eigen::VectorXd(int)>& hi_solve,
                     int M, const InnerProduct& lo_ip = {}, const InnerProduct& hi_ip = {});

// Versioned JSON container.
inline constexpr int surrogate_schema_version = 1;
std::string serialize_surrogate(const BifiSurrogate& s);
BifiSurrogate deserialize_surrogate(const std::string& text);

}  // namespace kmf
