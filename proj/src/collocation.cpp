#include "kmf/collocation.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace kmf {

double InnerProduct::dot(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const
{
    if (weights.size() == 0) return a.dot(b);
    return a.dot(weights.cwiseProduct(b));
}

double InnerProduct::norm(const Eigen::VectorXd& a) const { return std::sqrt(std::max(dot(a, a), 0.0)); }

Eigen::MatrixXd InnerProduct::gram(const Eigen::MatrixXd& U) const { return gram_matrix(U, weights); }

Eigen::VectorXd InnerProduct::against(const Eigen::MatrixXd& U, const Eigen::VectorXd& a) const
{
    if (weights.size() == 0) return U.transpose() * a;
    return U.transpose() * weights.cwiseProduct(a);
}

namespace {

void check_layout(const InnerProduct& ip, Eigen::Index n, const char* who)
{
    if (ip.weights.size() != 0 && ip.weights.size() != n)
        throw std::invalid_argument(std::string(who) + ": inner-product weights do not match the snapshot length");
}

Eigen::MatrixXd weighted(const InnerProduct& ip, const Eigen::MatrixXd& U)
{
    if (ip.weights.size() == 0) return U;
    return ip.weights.cwiseSqrt().asDiagonal() * U;
}

// Coefficients of the columns of lo in the low-fidelity basis: least squares by QR, or the
// shifted normal equations when the Gramian needed regularization.
Eigen::MatrixXd low_coefficients(const BifiSurrogate& s, const Eigen::MatrixXd& lo)
{
    if (s.shift == 0.0) return s.lo_qr.solve(weighted(s.lo_ip, lo));
    Eigen::MatrixXd A = s.gram_lo;
    A.diagonal().array() += s.shift;
    const Eigen::MatrixXd F = s.lo_basis.transpose() * (s.lo_ip.weights.size() ? Eigen::MatrixXd(s.lo_ip.weights.asDiagonal() * lo) : lo);
    return A.ldlt().solve(F);
}

}  // namespace

SelectionResult select_points(const Eigen::MatrixXd& lo, int M, const InnerProduct& ip)
{
    const int N = static_cast<int>(lo.cols());
    if (M < 1 || M > N) throw std::invalid_argument("select_points: need 1 <= M <= N");
    check_layout(ip, lo.rows(), "select_points");
    SelectionResult r;
    r.cholesky = pivoted_cholesky(ip.gram(lo), M);
    r.rank = r.cholesky.rank;
    r.indices.assign(r.cholesky.perm.begin(), r.cholesky.perm.begin() + r.rank);
    if (r.rank < M)
        r.warnings.push_back("candidate snapshots have numerical rank " + std::to_string(r.rank) + " < M = " +
                             std::to_string(M));
    return r;
}

std::vector<int> greedy_select_reference(const Eigen::MatrixXd& lo, int M, const InnerProduct& ip)
{
    const int N = static_cast<int>(lo.cols());
    if (M < 1 || M > N) throw std::invalid_argument("greedy_select_reference: need 1 <= M <= N");
    check_layout(ip, lo.rows(), "greedy_select_reference");
    Eigen::VectorXd sw = Eigen::VectorXd::Ones(lo.rows());
    if (ip.weights.size()) sw = ip.weights.cwiseSqrt();
    const Eigen::MatrixXd U = sw.asDiagonal() * lo;
    std::vector<int> sel;
    std::vector<char> taken(N, 0);
    for (int k = 0; k < M; ++k) {
        Eigen::MatrixXd B(U.rows(), sel.size());
        for (std::size_t i = 0; i < sel.size(); ++i) B.col(i) = U.col(sel[i]);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
        if (!sel.empty()) qr.compute(B);
        int best = -1;
        double best_d = -1.0;
        for (int i = 0; i < N; ++i) {
            if (taken[i]) continue;
            Eigen::VectorXd res = U.col(i);
            if (!sel.empty()) res -= B * qr.solve(res);
            const double d = res.squaredNorm();
            if (d > best_d) {
                best_d = d;
                best = i;
            }
        }
        sel.push_back(best);
        taken[best] = 1;
    }
    return sel;
}

BifiSurrogate build_surrogate(const Eigen::MatrixXd& lo_basis, const Eigen::MatrixXd& hi_basis,
                              std::vector<int> indices, const InnerProduct& lo_ip, const InnerProduct& hi_ip)
{
    if (lo_basis.cols() != hi_basis.cols()) throw std::invalid_argument("build_surrogate: basis counts differ");
    if (lo_basis.cols() == 0) throw std::invalid_argument("build_surrogate: empty basis");
    if (!indices.empty() && static_cast<Eigen::Index>(indices.size()) != lo_basis.cols())
        throw std::invalid_argument("build_surrogate: index count differs from basis count");
    check_layout(lo_ip, lo_basis.rows(), "build_surrogate");
    check_layout(hi_ip, hi_basis.rows(), "build_surrogate");
    BifiSurrogate s;
    s.indices = std::move(indices);
    s.lo_basis = lo_basis;
    s.hi_basis = hi_basis;
    s.lo_ip = lo_ip;
    s.hi_ip = hi_ip;
    s.gram_lo = lo_ip.gram(lo_basis);
    s.gram_hi = hi_ip.gram(hi_basis);
    Eigen::LLT<Eigen::MatrixXd> llt(s.gram_lo);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-14)
        s.shift = 1e-12 * s.gram_lo.trace() / static_cast<double>(s.gram_lo.rows());
    else
        s.lo_qr.compute(weighted(lo_ip, lo_basis));
    return s;
}

Eigen::VectorXd project_low(const Eigen::VectorXd& u, const BifiSurrogate& s)
{
    if (u.size() != s.lo_basis.rows()) throw std::invalid_argument("project_low: layout does not match the basis");
    return low_coefficients(s, u);
}

Eigen::VectorXd reconstruct(const Eigen::VectorXd& c, const BifiSurrogate& s)
{
    if (c.size() != s.hi_basis.cols()) throw std::invalid_argument("reconstruct: coefficient count differs from basis");
    return s.hi_basis * c;
}

Eigen::MatrixXd predict(const BifiSurrogate& s, const Eigen::MatrixXd& lo)
{
    if (lo.rows() != s.lo_basis.rows()) throw std::invalid_argument("predict: layout does not match the basis");
    return s.hi_basis * low_coefficients(s, lo);
}

namespace {

Eigen::VectorXd residual(const Eigen::MatrixXd& U, const Eigen::MatrixXd& G, const InnerProduct& ip,
                         const Eigen::VectorXd& u, Eigen::VectorXd* coeff = nullptr)
{
    const Eigen::VectorXd c = G.completeOrthogonalDecomposition().solve(ip.against(U, u));
    if (coeff) *coeff = c;
    return u - U * c;
}

}  // namespace

double distance_lo(const BifiSurrogate& s, const Eigen::VectorXd& u)
{
    if (u.size() != s.lo_basis.rows()) throw std::invalid_argument("distance_lo: layout does not match the basis");
    return s.lo_ip.norm(residual(s.lo_basis, s.gram_lo, s.lo_ip, u));
}

double distance_hi(const BifiSurrogate& s, const Eigen::VectorXd& u)
{
    if (u.size() != s.hi_basis.rows()) throw std::invalid_argument("distance_hi: layout does not match the basis");
    return s.hi_ip.norm(residual(s.hi_basis, s.gram_hi, s.hi_ip, u));
}

QualityIndicators quality_indicators(const BifiSurrogate& s, const Eigen::VectorXd& u_lo, const Eigen::VectorXd& u_hi)
{
    QualityIndicators q;
    const double nl = s.lo_ip.norm(u_lo), nh = s.hi_ip.norm(u_hi);
    const double dl = distance_lo(s, u_lo);
    Eigen::VectorXd ch;
    const Eigen::VectorXd rh = residual(s.hi_basis, s.gram_hi, s.hi_ip, u_hi, &ch);
    const double dh = s.hi_ip.norm(rh);
    q.rel_distance_lo = nl > 0.0 ? dl / nl : 0.0;
    q.rel_distance_hi = nh > 0.0 ? dh / nh : 0.0;
    const Eigen::VectorXd ub = reconstruct(project_low(u_lo, s), s);
    q.projection_gap = s.hi_ip.norm(s.hi_basis * ch - ub);

    const double tiny = 1e-14;
    if (q.rel_distance_lo <= tiny) {
        q.R_s_indeterminate = true;
        q.warnings.push_back("R_s undefined: low-fidelity test solution lies in the basis span");
    } else {
        q.R_s = q.rel_distance_hi / q.rel_distance_lo;
    }
    if (q.rel_distance_hi <= tiny) {
        q.R_e_indeterminate = true;
        q.warnings.push_back("R_e undefined: high-fidelity test solution lies in the basis span");
    } else {
        q.R_e = q.projection_gap / dh;
    }
    if (!q.R_s_indeterminate && (q.R_s > 10.0 || q.R_s < 0.1))
        q.warnings.push_back("model similarity R_s = " + std::to_string(q.R_s) + " is far from 1");
    if (!q.R_e_indeterminate && q.R_e >= 10.0)
        q.warnings.push_back("R_e = " + std::to_string(q.R_e) + " exceeds 10");
    return q;
}

double error_bound(const BifiSurrogate& s, const Eigen::VectorXd& u_lo, double R_e, double c1, double c2)
{
    const double n = s.lo_ip.norm(u_lo);
    if (!(n > 0.0)) return std::numeric_limits<double>::infinity();
    return distance_lo(s, u_lo) / n * (c1 + c2 * R_e);
}

BfscModel bfsc_build(const Eigen::MatrixXd& lo_candidates, const std::function<Eigen::VectorXd(int)>& hi_solve, int M,
                     const InnerProduct& lo_ip, const InnerProduct& hi_ip)
{
    const int N = static_cast<int>(lo_candidates.cols());
    if (M < 1 || M > N) throw std::invalid_argument("bfsc_build: need 1 <= M <= N");
    BfscModel out;
    out.selection = select_points(lo_candidates, std::min(M + 1, N), lo_ip);
    const int m = std::min(M, out.selection.rank);
    if (m < 1) throw DegenerateState("bfsc_build: low-fidelity candidates are all zero");
    std::vector<int> idx(out.selection.indices.begin(), out.selection.indices.begin() + m);
    Eigen::MatrixXd lo(lo_candidates.rows(), m);
    std::vector<Eigen::VectorXd> hi;
    for (int k = 0; k < m; ++k) {
        lo.col(k) = lo_candidates.col(idx[k]);
        hi.push_back(hi_solve(idx[k]));
    }
    Eigen::MatrixXd H(hi[0].size(), m);
    for (int k = 0; k < m; ++k) H.col(k) = hi[k];
    out.surrogate = build_surrogate(lo, H, idx, lo_ip, hi_ip);
    if (out.selection.rank > m) {
        const int t = out.selection.indices[m];
        out.quality = quality_indicators(out.surrogate, lo_candidates.col(t), hi_solve(t));
        out.has_test_point = true;
    }
    return out;
}

// ---------- serialization ----------

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& A)
{
    nlohmann::json cols = nlohmann::json::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) cols.push_back(std::vector<double>(A.col(j).data(), A.col(j).data() + A.rows()));
    return {{"rows", A.rows()}, {"cols", A.cols()}, {"columns", cols}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j)
{
    const Eigen::Index r = j.at("rows").get<Eigen::Index>(), c = j.at("cols").get<Eigen::Index>();
    Eigen::MatrixXd A(r, c);
    const auto& cols = j.at("columns");
    if (static_cast<Eigen::Index>(cols.size()) != c) throw ConfigError("surrogate: column count mismatch");
    for (Eigen::Index k = 0; k < c; ++k) {
        const auto v = cols[k].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(v.size()) != r) throw ConfigError("surrogate: row count mismatch");
        A.col(k) = Eigen::Map<const Eigen::VectorXd>(v.data(), r);
    }
    return A;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j)
{
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string serialize_surrogate(const BifiSurrogate& s)
{
    nlohmann::json j;
    j["schema"] = "kmf.bifi-surrogate";
    j["version"] = surrogate_schema_version;
    j["indices"] = s.indices;
    j["lo_basis"] = matrix_to_json(s.lo_basis);
    j["hi_basis"] = matrix_to_json(s.hi_basis);
    j["gram_lo"] = matrix_to_json(s.gram_lo);
    j["lo_weights"] = std::vector<double>(s.lo_ip.weights.data(), s.lo_ip.weights.data() + s.lo_ip.weights.size());
    j["hi_weights"] = std::vector<double>(s.hi_ip.weights.data(), s.hi_ip.weights.data() + s.hi_ip.weights.size());
    j["shift"] = s.shift;
    j["config_hash"] = s.config_hash;
    return j.dump(1);
}

BifiSurrogate deserialize_surrogate(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("surrogate: ") + e.what());
    }
    if (j.value("schema", "") != "kmf.bifi-surrogate") throw ConfigError("surrogate: unknown schema");
    if (j.value("version", -1) != surrogate_schema_version)
        throw ConfigError("surrogate: unsupported schema version " + std::to_string(j.value("version", -1)));
    try {
        InnerProduct lo_ip{vector_from_json(j.at("lo_weights"))}, hi_ip{vector_from_json(j.at("hi_weights"))};
        BifiSurrogate s = build_surrogate(matrix_from_json(j.at("lo_basis")), matrix_from_json(j.at("hi_basis")),
                                          j.at("indices").get<std::vector<int>>(), lo_ip, hi_ip);
        s.gram_lo = matrix_from_json(j.at("gram_lo"));
        s.shift = j.at("shift").get<double>();
        s.config_hash = j.value("config_hash", "");
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("surrogate: ") + e.what());
    }
}

}  // namespace kmf
