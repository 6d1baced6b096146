#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kmf/estimators.hpp"

#include <cmath>

using namespace kmf;

namespace {

// Rows: a few grid points whose values depend smoothly on one scalar draw per column.
Eigen::MatrixXd toy(const Eigen::VectorXd& z, double a, double b)
{
    Eigen::MatrixXd Q(3, z.size());
    for (Eigen::Index k = 0; k < z.size(); ++k) {
        Q(0, k) = a * z(k) + b;
        Q(1, k) = std::sin(a * z(k)) + b;
        Q(2, k) = a * z(k) * z(k);
    }
    return Q;
}

Eigen::VectorXd draws(int K, std::uint64_t seed) { return sample_uniform(ParamSpace::cube(1, 0, 1), K, seed).col(0); }

}  // namespace

TEST_CASE("optimal lambda")
{
    Eigen::MatrixXd lo = toy(draws(50, 1), 1.0, 0.0);
    Eigen::VectorXd one = optimal_lambda(lo, lo);
    CHECK((one.array() - 1.0).abs().maxCoeff() < 1e-14);
    Eigen::MatrixXd hi2 = 2.0 * lo;
    CHECK((optimal_lambda(hi2, lo).array() - 2.0).abs().maxCoeff() < 1e-13);
    const int K = 20000;
    Eigen::MatrixXd a = toy(draws(K, 2), 1.0, 0.0), b = toy(draws(K, 3), 1.0, 0.0);
    CHECK(optimal_lambda(a, b).cwiseAbs().maxCoeff() < 4.0 / std::sqrt(K));
    Eigen::MatrixXd flat = Eigen::MatrixXd::Constant(3, 10, 2.0);
    int off = 0;
    CHECK(optimal_lambda(toy(draws(10, 4), 1, 0), flat, &off).isZero());
    CHECK(off == 3);

    // a row whose variance is tiny against the field but matches its high-fidelity partner stays active
    Eigen::MatrixXd small = toy(draws(10, 5), 1.0, 0.0);
    small.row(1) *= 1e-9;
    CHECK((optimal_lambda(small, small, &off).array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(off == 0);
}

TEST_CASE("plain Monte Carlo")
{
    SampleModel lin = [](const Eigen::VectorXd& z, std::uint64_t) { return Eigen::VectorXd::Constant(1, z(0)); };
    EstimatorReport r = mc_estimate(lin, ParamSpace::cube(1, 0, 1), 100000, 11);
    CHECK(std::abs(r.mean(0) - 0.5) < 0.005);
    SampleModel cst = [](const Eigen::VectorXd&, std::uint64_t) { return Eigen::VectorXd::Constant(4, 3.0); };
    EstimatorReport c = mc_estimate(cst, ParamSpace::cube(2, 0, 1), 20, 1);
    CHECK(c.std.isZero());
    CHECK_THROWS_AS(mc_estimate(lin, ParamSpace::cube(1, 0, 1), 1, 1), InsufficientSamples);
}

TEST_CASE("bi-fidelity estimator")
{
    const Eigen::VectorXd z = draws(400, 5);
    Eigen::MatrixXd hi = toy(z.head(40), 1.3, 0.2);
    Eigen::MatrixXd lo = toy(z, 1.0, 0.0);
    EstimatorReport r = mscv_bifidelity(hi, lo);
    Eigen::MatrixXd lo40 = lo.leftCols(40);
    const Eigen::VectorXd lam = optimal_lambda(hi, lo40) * (400.0 / 440.0);
    CHECK((r.lambda.col(0) - lam).cwiseAbs().maxCoeff() < 1e-14);
    CHECK_THROWS_AS(mscv_bifidelity(hi, lo.leftCols(20)), ConfigError);

    // identical models with exact expectation: output equals the expectation
    Eigen::VectorXd exact(3);
    exact << 0.5, 1.0 - std::cos(1.0), 1.0 / 3.0;
    Eigen::MatrixXd same = toy(z.head(30), 1.0, 0.0);
    EstimatorReport e = mscv_bifidelity(same, same, exact);
    CHECK((e.mean - exact).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(e.residual_std.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("multi-fidelity estimator in the span of its controls")
{
    const Eigen::VectorXd z = draws(25, 6);
    Eigen::MatrixXd f1 = toy(z, 1.0, 0.0), f2 = toy(z, 2.0, 0.5);
    Eigen::MatrixXd hi = 2.0 * f1 - 3.0 * f2;
    hi.array() += 1.0;
    Eigen::VectorXd e1(3), e2(3);
    e1 << 0.5, 1.0 - std::cos(1.0), 1.0 / 3.0;
    e2 << 1.5, (1.0 - std::cos(2.0)) / 2.0 + 0.5, 2.0 / 3.0;
    for (bool orth : {false, true}) {
        EstimatorReport r = mscv_multifidelity(hi, {f1, f2}, {e1, e2}, orth);
        const Eigen::VectorXd expect = (2.0 * e1 - 3.0 * e2).array() + 1.0;
        CHECK((r.mean - expect).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(r.residual_std.maxCoeff() < 1e-10 * r.std.maxCoeff());
        if (!orth) {
            // rows 0 and 2 have collinear controls; row 1 identifies the weights
            CHECK(std::abs(r.lambda(1, 0) - 2.0) < 1e-6);
            CHECK(std::abs(r.lambda(1, 1) + 3.0) < 1e-6);
        }
    }
    CHECK_THROWS_AS(mscv_multifidelity(hi.leftCols(2), {f1.leftCols(2), f2.leftCols(2)}, {e1, e2}), InsufficientSamples);
}

TEST_CASE("orthogonalized and direct multi-fidelity agree; rescaling a control")
{
    const Eigen::VectorXd z = draws(60, 7);
    Eigen::MatrixXd hi = toy(z, 1.7, 0.1), f1 = toy(z, 1.0, 0.0), f2 = toy(z, 1.4, 0.0);
    hi.row(2) += 0.1 * toy(draws(60, 8), 1.0, 0.0).row(0);
    std::vector<std::optional<Eigen::VectorXd>> ex = {std::nullopt, std::nullopt};
    EstimatorReport a = mscv_multifidelity(hi, {f1, f2}, ex, false);
    EstimatorReport b = mscv_multifidelity(hi, {f1, f2}, ex, true);
    CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-9);
    EstimatorReport c = mscv_multifidelity(hi, {f1, -4.0 * f2}, ex, false);
    CHECK((c.mean - a.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(c.lambda(1, 1) + a.lambda(1, 1) / 4.0) < 1e-9);

    Eigen::MatrixXd lo = toy(z, 1.0, 0.0);
    EstimatorReport s1 = mscv_bifidelity(hi, lo);
    EstimatorReport s2 = mscv_bifidelity(hi, Eigen::MatrixXd(2.5 * lo));
    CHECK((s1.mean - s2.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((s2.lambda - s1.lambda / 2.5).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hierarchical estimator")
{
    const Eigen::VectorXd z = draws(2000, 9);
    Eigen::MatrixXd f1 = toy(z, 1.0, 0.0);
    Eigen::MatrixXd f2 = toy(z.head(200), 1.2, 0.0);
    Eigen::MatrixXd f = toy(z.head(10), 1.3, 0.1);
    EstimatorReport h1 = mscv_hierarchical(f, {f1}, false);
    EstimatorReport b1 = mscv_bifidelity(f, f1);
    CHECK(h1.mean == b1.mean);
    CHECK(h1.lambda == b1.lambda);
    EstimatorReport h1t = mscv_hierarchical(f, {f1}, true);
    CHECK(h1t.mean == b1.mean);

    EstimatorReport q = mscv_hierarchical(f, {f1, f2}, false);
    EstimatorReport t = mscv_hierarchical(f, {f1, f2}, true);
    CHECK(q.lambda.cols() == 2);
    CHECK(t.mean.allFinite());
    CHECK_THROWS_AS(mscv_hierarchical(f, {f2, f1}, false), ConfigError);
    CHECK_THROWS_AS(mscv_hierarchical(f2, {f1, f2}, false), ConfigError);

    // budgets 1e5, 1e3, 10: products of quasi-optimal weights match the optimum to O(max mu)
    const Eigen::VectorXd zz = draws(100000, 10);
    Eigen::MatrixXd g1 = toy(zz, 1.0, 0.0), g2 = toy(zz.head(1000), 1.1, 0.0), g = toy(zz.head(10), 1.2, 0.0);
    HierarchicalWeights w = hierarchical_weights(g, {g1, g2});
    const double rel = ((w.quasi_optimal - w.tridiagonal).cwiseAbs().array() / w.tridiagonal.cwiseAbs().array()).maxCoeff();
    CHECK(rel < 0.02);
}

TEST_CASE("unbiasedness for a fixed weight and variance reduction factor")
{
    // control with known mean; the estimator with frozen lambda is unbiased
    const int R = 200, M = 10;
    Eigen::VectorXd est(R);
    for (int r = 0; r < R; ++r) {
        const Eigen::VectorXd z = draws(M, 1000u * (r + 1));
        const Eigen::VectorXd hi = z.array().exp();
        const Eigen::VectorXd lo = z;
        est(r) = hi.mean() - 0.9 * (lo.mean() - 0.5);
    }
    const double se = std::sqrt((est.array() - est.mean()).square().sum() / (R - 1) / R);
    CHECK(std::abs(est.mean() - (std::exp(1.0) - 1.0)) < 4 * se);

    // Var(f - lambda* g) / Var(f) = 1 - rho^2
    const int K = 10000;
    Rng rng(12);
    for (double rho : {0.3, 0.8, 0.95}) {
        Eigen::MatrixXd f(1, K), g(1, K);
        for (int k = 0; k < K; ++k) {
            const double a = rng.normal(), b = rng.normal();
            g(0, k) = a;
            f(0, k) = rho * a + std::sqrt(1 - rho * rho) * b;
        }
        EstimatorReport r = mscv_bifidelity(f, g, Eigen::VectorXd::Zero(1));
        const double ratio = std::pow(r.residual_std(0) / r.std(0), 2);
        const double tol = 3.0 * std::sqrt(2.0 / K) * (1 - rho * rho) + 3.0 * 2 * rho * rho * std::sqrt(1.0 / K);
        CHECK(std::abs(ratio - (1 - rho * rho)) < tol);
    }
}

TEST_CASE("sample evaluation is deterministic and reports failing samples")
{
    SampleModel noisy = [](const Eigen::VectorXd& z, std::uint64_t s) {
        Rng r(s);
        Eigen::VectorXd q(2);
        q << z(0) + r.uniform(), r.normal();
        return q;
    };
    const Eigen::MatrixXd Z = sample_uniform(ParamSpace::cube(1, 0, 1), 64, 3);
    CHECK(evaluate_samples(noisy, Z, 3, 0, -1, 1) == evaluate_samples(noisy, Z, 3, 0, -1, 4));
    CHECK(evaluate_samples(noisy, Z, 3, 0, 10, 2) == evaluate_samples(noisy, Z, 3, 0, -1, 3).leftCols(10));
    SampleModel bad = [](const Eigen::VectorXd& z, std::uint64_t) -> Eigen::VectorXd {
        if (z(0) > 0.5) throw std::runtime_error("boom");
        return Eigen::VectorXd::Zero(1);
    };
    int first_bad = -1;
    for (int k = 0; k < 64; ++k)
        if (Z(k, 0) > 0.5) {
            first_bad = k;
            break;
        }
    try {
        evaluate_samples(bad, Z, 3, 0, -1, 4);
        FAIL("expected failure");
    } catch (const SolverFailure& e) {
        CHECK(std::string(e.what()).rfind("sample " + std::to_string(first_bad) + ":", 0) == 0);
    }
    SampleModel sq = [](const Eigen::VectorXd& z, std::uint64_t) { return Eigen::VectorXd::Constant(1, z(0) * z(1)); };
    CHECK(collocation_expectation(sq, ParamSpace::cube(2, 0, 2), 4)(0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("mean-field control variate for agent ensembles")
{
    const AgentPreset A = agent_preset("opinion-A");
    const Grid1D g = A.domain;
    const SampleModel mf = mean_field_model(A, MeanFieldControl::time_dependent, 0.5, g, 5, 5e-3);
    const Eigen::VectorXd E = collocation_expectation(mf, A.space, 20);
    CHECK(E.sum() * g.spacing() == doctest::Approx(1.0).epsilon(1e-10));

    // control reused as the high-fidelity output: the estimate is the exact expectation
    const Eigen::MatrixXd Z = sample_uniform(A.space, 8, 5);
    const Eigen::MatrixXd lo = evaluate_samples(mf, Z, 5);
    const EstimatorReport same = mscv_bifidelity(lo, lo, E);
    int active = 0;
    for (Eigen::Index i = 0; i < E.size(); ++i) {
        if (same.lambda(i, 0) == 0.0) continue;
        ++active;
        CHECK(std::abs(same.mean(i) - E(i)) <= 1e-12);
        CHECK(same.residual_std(i) <= 1e-12);
    }
    CHECK(active + same.inactive_points == E.size());
    CHECK(active >= 10);

    MfcvConfig cfg;
    cfg.control = MeanFieldControl::steady_state;
    cfg.t_end = 0.5;
    cfg.M = 6;
    cfg.N = 2000;
    const MfcvReport a = mfcv_dsmc(A, cfg, 11);
    const MfcvReport b = mfcv_dsmc(A, cfg, 11);
    CHECK(a.mean == b.mean);
    CHECK(a.mean.size() == g.n_cells);
    CHECK(a.mc_mean.sum() * g.spacing() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.control_expectation.sum() * g.spacing() == doctest::Approx(1.0).epsilon(1e-8));
    cfg.N = 10;
    CHECK_THROWS_AS(mfcv_dsmc(A, cfg, 11), ConfigError);
}
