#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kmf/numerics.hpp"
#include "kmf/random_space.hpp"

#include <atomic>
#include <cmath>

using namespace kmf;

TEST_CASE("gauss_legendre small rules")
{
    auto q1 = gauss_legendre(1);
    CHECK(q1.nodes(0) == doctest::Approx(0.0));
    CHECK(q1.weights(0) == doctest::Approx(2.0));
    auto q2 = gauss_legendre(2);
    CHECK(q2.nodes(0) == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-14));
    CHECK(q2.nodes(1) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
    CHECK(q2.weights(0) == doctest::Approx(1.0));
    CHECK(q2.weights(1) == doctest::Approx(1.0));
    CHECK_THROWS_AS(gauss_legendre(0), std::invalid_argument);
}

TEST_CASE("gauss_legendre exactness")
{
    auto q = gauss_legendre(16);
    const double s = (q.weights.array() * q.nodes.array().pow(30)).sum();
    CHECK(std::abs(s - 2.0 / 31.0) < 1e-12);
    for (int n : {3, 5, 8, 20, 33}) {
        auto r = gauss_legendre(n);
        CHECK(r.weights.sum() == doctest::Approx(2.0).epsilon(1e-13));
        const double m = (r.weights.array() * r.nodes.array().pow(2 * n - 2)).sum();
        CHECK(m == doctest::Approx(2.0 / (2 * n - 1)).epsilon(1e-12));
    }
    auto h = half_range_gauss_legendre(16);
    CHECK(h.size() == 8);
    CHECK(h.weights.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(h.nodes.minCoeff() > 0.0);
}

TEST_CASE("weighted L1_2 norm")
{
    Field f;
    f.x = Grid1D(0, 1, 4);
    f.v = Grid1D(-1, 1, 2000);
    f.values = Eigen::MatrixXd::Zero(4, 2000);
    CHECK(weighted_norm_l1_2(f) == 0.0);
    f.values.setOnes();
    CHECK(weighted_norm_l1_2(f) == doctest::Approx(14.0 / 3.0).epsilon(1e-3));
    const double n1 = weighted_norm_l1_2(f);
    f.values *= -2.5;
    CHECK(weighted_norm_l1_2(f) == doctest::Approx(2.5 * n1).epsilon(1e-14));
    Field g;
    g.values = Eigen::MatrixXd::Ones(2, 2);
    CHECK_THROWS_AS(weighted_norm_l1_2(g), std::invalid_argument);
}

TEST_CASE("sample variance and covariance")
{
    Eigen::VectorXd c = Eigen::VectorXd::Constant(5, 3.0);
    auto [v0, c0] = sample_var_cov(c, c);
    CHECK(v0 == 0.0);
    CHECK(c0 == 0.0);
    Eigen::Vector3d a(1, 2, 3), b(3, 2, 1);
    auto [v1, c1] = sample_var_cov(a, a);
    CHECK(v1 == doctest::Approx(1.0));
    CHECK(c1 == doctest::Approx(1.0));
    CHECK(sample_var_cov(a, b).second == doctest::Approx(-1.0));
    Eigen::VectorXd one(1);
    one << 1.0;
    CHECK_THROWS_AS(sample_var_cov(one, one), InsufficientSamples);

    Eigen::MatrixXd A(2, 3), B(2, 3);
    A << 1, 2, 3, 4, 4, 4;
    B << 3, 2, 1, 1, 2, 3;
    auto [pv, pc] = pointwise_var_cov(A, B);
    CHECK(pv(0) == doctest::Approx(1.0));
    CHECK(pc(0) == doctest::Approx(-1.0));
    CHECK(pc(1) == doctest::Approx(0.0));
    CHECK(pointwise_mean(A)(0) == doctest::Approx(2.0));
    CHECK(pointwise_std(A)(1) == doctest::Approx(0.0));
}

TEST_CASE("gram matrix")
{
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(5, 3);
    CHECK((gram_matrix(Q) - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-15);
    Eigen::MatrixXd U = Eigen::MatrixXd::Random(4, 3);
    U.col(2) = U.col(0);
    Eigen::MatrixXd G = gram_matrix(U);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    CHECK(std::abs(es.eigenvalues()(0)) < 1e-12 * es.eigenvalues().maxCoeff());
    Eigen::MatrixXd V = Eigen::MatrixXd::Random(6, 3);
    Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(6, 0.5, 2.0);
    Eigen::MatrixXd Gw = gram_matrix(V, w);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int r = 0; r < 6; ++r) s += V(r, i) * w(r) * V(r, j);
            CHECK(Gw(i, j) == doctest::Approx(s).epsilon(1e-14));
            CHECK(Gw(i, j) == Gw(j, i));
        }
}

namespace {

// Greedy max-distance selection by explicit projection onto the span of the chosen snapshots.
std::vector<int> brute_force_greedy(const Eigen::MatrixXd& U, int m)
{
    std::vector<int> chosen;
    const double dmax = U.colwise().squaredNorm().maxCoeff();
    for (int k = 0; k < m; ++k) {
        Eigen::MatrixXd B(U.rows(), chosen.size());
        for (size_t j = 0; j < chosen.size(); ++j) B.col(j) = U.col(chosen[j]);
        int best = -1;
        double bd = -1;
        for (int i = 0; i < U.cols(); ++i) {
            if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
            Eigen::VectorXd r = U.col(i);
            if (!chosen.empty()) r -= B * B.colPivHouseholderQr().solve(r);
            const double d = r.squaredNorm();
            if (d > bd) {
                bd = d;
                best = i;
            }
        }
        if (bd <= 1e-12 * dmax) break;
        chosen.push_back(best);
    }
    return chosen;
}

}  // namespace

TEST_CASE("pivoted cholesky")
{
    auto P = pivoted_cholesky(Eigen::MatrixXd::Identity(4, 4), 2);
    CHECK(P.perm[0] == 0);
    CHECK(P.perm[1] == 1);
    CHECK(P.rank == 2);

    Eigen::MatrixXd U(3, 3);
    U << 1, 0, 1, 0, 2, 0, 0, 0, 0;   // third column equals the first
    auto Q = pivoted_cholesky(gram_matrix(U), 3);
    CHECK(Q.rank == 2);
    CHECK(Q.perm[0] == 1);
    CHECK(Q.perm[1] == 0);
    CHECK(Q.perm[2] == 2);

    Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
    bad(1, 1) = -1.0;
    CHECK_THROWS_AS(pivoted_cholesky(bad, 2), NotPositiveSemidefinite);

    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd V(12, 20);
        for (int i = 0; i < V.rows(); ++i)
            for (int j = 0; j < V.cols(); ++j) V(i, j) = rng.normal();
        auto R = pivoted_cholesky(gram_matrix(V), 10);
        auto bf = brute_force_greedy(V, 10);
        REQUIRE(R.rank == static_cast<int>(bf.size()));
        for (int k = 0; k < R.rank; ++k) CHECK(R.perm[k] == bf[k]);
        // factor reproduces the pivoted block
        Eigen::MatrixXd G = gram_matrix(V);
        Eigen::MatrixXd Lk = R.L.topRows(R.rank);
        for (int i = 0; i < R.rank; ++i)
            for (int j = 0; j < R.rank; ++j)
                CHECK(Lk.row(i).dot(Lk.row(j)) == doctest::Approx(G(R.perm[i], R.perm[j])).epsilon(1e-10));
    }
}

TEST_CASE("histogram reconstruction")
{
    Grid1D g(0, 1, 10);
    Eigen::VectorXd p = Eigen::VectorXd::Constant(50, 0.35);
    Field f = histogram_reconstruct(p, g);
    CHECK(f.values(0, 3) == doctest::Approx(10.0));
    CHECK(f.values.sum() * g.spacing() == doctest::Approx(1.0));
    CHECK_THROWS_AS(histogram_reconstruct(Eigen::VectorXd(0), g), std::invalid_argument);

    Rng rng(3);
    Eigen::VectorXd u(100000);
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform();
    Field h = histogram_reconstruct(u, g);
    CHECK(h.values.sum() * g.spacing() == doctest::Approx(1.0).epsilon(1e-14));
    // 5 sigma band with sigma = sqrt(p(1-p)/N)/dw
    CHECK((h.values.array() - 1.0).abs().maxCoeff() < 5.0 * std::sqrt(0.09 / 1e5) * 10.0);

    Eigen::VectorXd out(3);
    out << 0.5, 2.0, -1.0;
    CHECK(histogram_reconstruct(out, g, OutOfRange::reject).values(0, 5) == doctest::Approx(10.0));
    Field cl = histogram_reconstruct(out, g, OutOfRange::clamp);
    CHECK(cl.values(0, 0) == doctest::Approx(10.0 / 3));
    CHECK(cl.values(0, 9) == doctest::Approx(10.0 / 3));
}

TEST_CASE("parallel_for visits each index once")
{
    std::vector<std::atomic<int>> hits(257);
    parallel_for(257, [&](int i) { hits[i]++; }, 4);
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, [](int i) { if (i >= 3) throw std::runtime_error(std::to_string(i)); }, 3),
                    std::runtime_error);
    try {
        parallel_for(10, [](int i) { if (i >= 3) throw std::runtime_error(std::to_string(i)); }, 3);
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()) == "3");
    }
}
