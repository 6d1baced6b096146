#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kmf/gas.hpp"

#include <cmath>
#include <numbers>

using namespace kmf;

namespace {

const double kPi = std::numbers::pi;

Eigen::VectorXd two_bumps_on(const VelocityGrid& g, double z)
{
    Eigen::VectorXd f(g.size());
    Eigen::VectorXd zz(1);
    zz << z;
    for (int k = 0; k < g.size(); ++k) f(k) = eval_kinetic_ic("two-bumps", 0.0, g.node(k), zz);
    return f;
}

double rel_l1(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).lpNorm<1>() / b.lpNorm<1>(); }

}  // namespace

TEST_CASE("maxwellian closed form")
{
    MomentSet m;
    m.rho = 1;
    m.T = 1;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(1);
    CHECK(maxwellian(m, v, 1) == doctest::Approx(1.0 / std::sqrt(2 * kPi)));
    m.rho = 0;
    CHECK(maxwellian(m, v, 1) == 0.0);
    m.rho = 1;
    m.T = 0;
    CHECK_THROWS_AS(maxwellian(m, v, 1), DegenerateState);
}

TEST_CASE("moments of a discretized Maxwellian")
{
    VelocityGrid g(Grid1D(-8, 8, 200), 1);
    MomentSet m;
    m.rho = 1;
    m.T = 1;
    m.E = 0.5;
    Eigen::VectorXd f = discrete_maxwellian(m, g, false);
    MomentSet r = moments(f, g);
    CHECK(r.rho == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(r.u(0)) < 1e-12);
    CHECK(r.T == doctest::Approx(1.0).epsilon(1e-3));
    MomentSet s = moments(3.0 * f, g);
    CHECK(s.rho == doctest::Approx(3 * r.rho));
    CHECK(s.E == doctest::Approx(3 * r.E));
    CHECK(s.u(0) == doctest::Approx(r.u(0)));
    CHECK(s.T == doctest::Approx(r.T));
}

TEST_CASE("moment matched Maxwellian reproduces target moments exactly")
{
    VelocityGrid g(Grid1D(-6, 6, 16), 1);
    MomentSet m;
    m.rho = 0.7;
    m.u(0) = 0.3;
    m.T = 1.4;
    m.E = 0.5 * m.rho * (m.u(0) * m.u(0) + m.T);
    MomentSet r = moments(discrete_maxwellian(m, g, true), g);
    CHECK(r.rho == doctest::Approx(m.rho).epsilon(1e-13));
    CHECK(r.u(0) == doctest::Approx(m.u(0)).epsilon(1e-12));
    CHECK(r.E == doctest::Approx(m.E).epsilon(1e-13));
    VelocityGrid g2(Grid1D(-8, 8, 48), 2);
    MomentSet t = two_bumps_moments(0.4);
    MomentSet r2 = moments(discrete_maxwellian(t, g2, true), g2);
    CHECK(r2.rho == doctest::Approx(t.rho).epsilon(1e-13));
    CHECK(r2.u(0) == doctest::Approx(t.u(0)).epsilon(1e-12));
    CHECK(std::abs(r2.u(1)) < 1e-13);
    CHECK(r2.E == doctest::Approx(t.E).epsilon(1e-13));
}

TEST_CASE("two-bumps density and moments")
{
    VelocityGrid g(Grid1D(-8, 8, 128), 2);
    MomentSet m = moments(two_bumps_on(g, 0.0), g);
    // rho0 * sigma for two unit-variance-scaled bumps in two velocity dimensions
    CHECK(std::abs(m.rho - 0.0625) < 1e-6);
    MomentSet a = two_bumps_moments(0.0);
    CHECK(a.rho == doctest::Approx(0.0625).epsilon(1e-14));
    CHECK(m.u(0) == doctest::Approx(a.u(0)).epsilon(1e-8));
    CHECK(m.E == doctest::Approx(a.E).epsilon(1e-8));
    CHECK(m.T == doctest::Approx(a.T).epsilon(1e-8));
}

TEST_CASE("exact homogeneous BGK propagator")
{
    VelocityGrid g(Grid1D(-8, 8, 48), 2);
    Eigen::VectorXd f0 = two_bumps_on(g, 0.3);
    CHECK((bgk_homogeneous_exact(f0, g, 1.0, 0.0) - f0).norm() == 0.0);
    Eigen::VectorXd finf = discrete_maxwellian(moments(f0, g), g, true);
    CHECK((bgk_homogeneous_exact(f0, g, 2.0, 50.0) - finf).lpNorm<Eigen::Infinity>() < 1e-10);
    MomentSet m0 = moments(f0, g);
    double prevH = entropy(f0, g.cell_volume());
    for (double t : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        Eigen::VectorXd f = bgk_homogeneous_exact(f0, g, 1.0, t);
        MomentSet m = moments(f, g);
        CHECK(m.rho == doctest::Approx(m0.rho).epsilon(1e-13));
        CHECK(m.u(0) == doctest::Approx(m0.u(0)).epsilon(1e-12));
        CHECK(m.E == doctest::Approx(m0.E).epsilon(1e-13));
        const double H = entropy(f, g.cell_volume());
        CHECK(H <= prevH + 1e-14);
        prevH = H;
    }
    CHECK_THROWS_AS(bgk_homogeneous_exact(f0, g, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("marginal cell averages agree with the gridded datum")
{
    Grid1D w(-8, 8, 64);
    VelocityGrid g(Grid1D(-8, 8, 512), 2);
    Eigen::VectorXd f = two_bumps_on(g, -0.5);
    const int n = g.axis.n_cells;
    Eigen::VectorXd marg = Eigen::VectorXd::Zero(64);
    for (int i = 0; i < n; ++i) {
        double s = 0;
        for (int j = 0; j < n; ++j) s += f(i * n + j);
        marg(i / (n / 64)) += s * g.cell_volume() / w.spacing();
    }
    CHECK((marg - two_bumps_marginal_cells(w, -0.5)).lpNorm<Eigen::Infinity>() < 1e-5);
    CHECK(bgk_exact_marginal_cells(w, 0.1, 1.0, 0.0).isApprox(two_bumps_marginal_cells(w, 0.1)));
    CHECK(maxwellian_marginal_cells(two_bumps_moments(0.1), w).sum() * w.spacing() ==
          doctest::Approx(0.0625).epsilon(1e-10));
}

TEST_CASE("entropy")
{
    VelocityGrid g(Grid1D(-8, 8, 400), 1);
    MomentSet m;
    m.rho = 2.0;
    m.T = 0.8;
    Eigen::VectorXd f = discrete_maxwellian(m, g, false);
    const double H = m.rho * std::log(m.rho / std::sqrt(2 * kPi * m.T)) - 0.5 * m.rho;
    CHECK(entropy(f, g.axis.spacing()) == doctest::Approx(H).epsilon(1e-6));
    VelocityGrid big(Grid1D(-12, 12, 600), 1);
    Eigen::VectorXd fb = discrete_maxwellian(m, big, false);
    CHECK(std::abs(entropy(fb, big.axis.spacing()) - entropy(f, g.axis.spacing())) < 1e-10);
}

TEST_CASE("dsmc step basics")
{
    Rng rng(11);
    Eigen::MatrixXd P = sample_two_bumps(1000, 0.2, rng);
    Eigen::MatrixXd Q = P;
    CHECK(dsmc_maxwell_step(Q, 0.0, rng) == 0);
    CHECK(Q == P);
    CHECK_THROWS_AS(dsmc_maxwell_step(Q, 2.5, rng), std::invalid_argument);
    const Eigen::RowVectorXd mom0 = P.colwise().sum();
    const double en0 = P.squaredNorm();
    const long nc = dsmc_maxwell_step(Q, 1.0, rng);
    CHECK(nc == 500);
    CHECK(Q.rows() == 1000);
    CHECK((Q.colwise().sum() - mom0).norm() < 1e-12 * P.cwiseAbs().sum());
    CHECK(std::abs(Q.squaredNorm() - en0) < 1e-12 * en0);
    long total = 0;
    for (int i = 0; i < 2000; ++i) total += sround(2.3, rng);
    CHECK(std::abs(total / 2000.0 - 2.3) < 0.05);
    Eigen::MatrixXd R = P;
    CHECK(dsmc_maxwell_step(R, 1.8, rng) == 500);
}

TEST_CASE("dsmc relaxes to the Maxwellian with the initial moments")
{
    const int N = 100000;
    Rng rng(2024);
    Eigen::MatrixXd P = sample_two_bumps(N, 0.0, rng);
    const Eigen::RowVector2d u = P.colwise().mean();
    const double T = ((P.rowwise() - u).squaredNorm() / N) / 2.0;
    for (int s = 0; s < 40; ++s) dsmc_maxwell_step(P, 0.5, rng);
    const Eigen::MatrixXd c = P.rowwise() - u;
    const double var1 = c.col(0).squaredNorm() / N, var2 = c.col(1).squaredNorm() / N;
    const double tol = 4.0 * std::sqrt(2.0 / N) * T;
    CHECK(std::abs(var1 - T) < tol);
    CHECK(std::abs(var2 - T) < tol);
    const double k4 = c.col(0).array().pow(4).mean();
    CHECK(std::abs(k4 - 3 * T * T) < 4.0 * std::sqrt(96.0 / N) * T * T);
    CHECK((P.colwise().mean() - u).norm() < 1e-12);
}

TEST_CASE("euler solver")
{
    Grid1D x(0, 1, 100);
    MomentField c;
    c.rho = Eigen::VectorXd::Constant(100, 0.7);
    c.m = Eigen::VectorXd::Constant(100, 0.21);
    c.E = Eigen::VectorXd::Constant(100, 1.3);
    c.T = Eigen::VectorXd::Zero(100);
    EulerConfig per{0.9, Boundary::periodic};
    auto rc = euler_solver_1d(c, x, 0.2, {}, per);
    CHECK((rc.final_state.rho - c.rho).lpNorm<Eigen::Infinity>() < 1e-13);
    CHECK((rc.final_state.E - c.E).lpNorm<Eigen::Infinity>() < 1e-13);

    MomentField s = sod_moments(x, 0.0);
    auto rs = euler_solver_1d(s, x, 0.15, {0.05, 0.1});
    CHECK(rs.saved.size() == 2);
    CHECK(rs.final_state.rho.sum() == doctest::Approx(s.rho.sum()).epsilon(1e-12));
    const Eigen::VectorXd& r = rs.final_state.rho;
    CHECK(r.maxCoeff() <= 1.0 + 1e-12);
    CHECK(r.minCoeff() >= 0.125 - 1e-12);
    CHECK(r(10) == doctest::Approx(1.0));
    CHECK(r(95) == doctest::Approx(0.125));
    CHECK(r(50) < 0.9);
    CHECK(r(50) > 0.2);

    MomentField p;
    p.rho.resize(100);
    p.m.resize(100);
    p.E.resize(100);
    p.T.resize(100);
    for (int i = 0; i < 100; ++i) {
        const double xc = x.center(i);
        p.rho(i) = 1.0 + 0.3 * std::cos(2 * kPi * xc);
        p.m(i) = 0.2 * std::sin(2 * kPi * xc) * p.rho(i);
        p.E(i) = 0.5 * p.m(i) * p.m(i) / p.rho(i) + 0.5 * p.rho(i) * (1.0 + 0.1 * std::cos(4 * kPi * xc));
    }
    auto rp = euler_solver_1d(p, x, 0.3, {}, per);
    CHECK(rp.final_state.rho.sum() == doctest::Approx(p.rho.sum()).epsilon(1e-12));
    CHECK(rp.final_state.m.sum() == doctest::Approx(p.m.sum()).epsilon(1e-12).scale(1.0));
    CHECK(rp.final_state.E.sum() == doctest::Approx(p.E.sum()).epsilon(1e-12));
    for (int i = 0; i < 100; ++i) {
        CHECK(std::abs(rp.final_state.rho(i) - rp.final_state.rho(99 - i)) < 1e-10);
        CHECK(std::abs(rp.final_state.m(i) + rp.final_state.m(99 - i)) < 1e-10);
    }

    MomentField v = c;
    v.E.setConstant(0.0);
    CHECK_THROWS_AS(euler_solver_1d(v, x, 0.1), SolverFailure);
}

TEST_CASE("bgk solver: uniform state follows the homogeneous propagator")
{
    Grid1D x(0, 1, 8);
    VelocityGrid v(Grid1D(-8, 8, 64), 1);
    GasKineticState s;
    s.x = x;
    s.v = v;
    s.f.resize(8, 64);
    Eigen::VectorXd f0(64);
    for (int k = 0; k < 64; ++k) {
        const double w = v.axis.center(k);
        f0(k) = std::exp(-2 * (w - 1.5) * (w - 1.5)) + 0.5 * std::exp(-4 * (w + 1) * (w + 1));
    }
    for (int i = 0; i < 8; ++i) s.f.row(i) = f0.transpose();
    for (double dt : {0.01, 0.005}) {
        BgkConfig cfg;
        cfg.dt = dt;
        cfg.bc = Boundary::periodic;
        auto r = bgk_solver_1d(s, cfg, 0.5);
        Eigen::VectorXd ex = bgk_homogeneous_exact(f0, v, 1.0, 0.5);
        const double err = (r.final_state.f.row(3).transpose() - ex).lpNorm<Eigen::Infinity>();
        CHECK(err < 0.5 * dt);
    }
}

TEST_CASE("bgk solver: free transport and conservation")
{
    auto run = [](int nx, bool muscl) {
        Grid1D x(0, 1, nx);
        VelocityGrid v(Grid1D(-2, 2, 8), 1);
        GasKineticState s;
        s.x = x;
        s.v = v;
        s.f.resize(nx, 8);
        for (int i = 0; i < nx; ++i)
            for (int k = 0; k < 8; ++k)
                s.f(i, k) = (1.0 + 0.5 * std::sin(2 * kPi * x.center(i))) * std::exp(-v.axis.center(k) * v.axis.center(k));
        BgkConfig cfg;
        cfg.epsilon = 1e30;
        cfg.muscl = muscl;
        cfg.bc = Boundary::periodic;
        auto r = bgk_solver_1d(s, cfg, 0.25);
        double err = 0;
        for (int i = 0; i < nx; ++i)
            for (int k = 0; k < 8; ++k) {
                const double vv = v.axis.center(k);
                const double ex = (1.0 + 0.5 * std::sin(2 * kPi * (x.center(i) - vv * 0.25))) * std::exp(-vv * vv);
                err = std::max(err, std::abs(r.final_state.f(i, k) - ex));
            }
        CHECK(r.final_state.f.sum() == doctest::Approx(s.f.sum()).epsilon(1e-12));
        return err;
    };
    const double e1 = run(100, true), e2 = run(200, true);
    CHECK(e2 < 0.5 * e1);
    CHECK(e2 < 5e-3);
    CHECK(run(200, false) > e2);
}

TEST_CASE("bgk solver: config errors and positivity")
{
    Grid1D x(0, 1, 20);
    VelocityGrid v(Grid1D(-4, 4, 16), 1);
    GasKineticState s = equilibrium_state(x, v, sod_moments(x, 0.5));
    BgkConfig cfg;
    cfg.dt = 0.1;
    CHECK_THROWS_AS(bgk_solver_1d(s, cfg, 0.1), ConfigError);
    cfg.dt = 0;
    cfg.epsilon = -1;
    CHECK_THROWS_AS(bgk_solver_1d(s, cfg, 0.1), ConfigError);
    cfg.epsilon = 0.01;
    cfg.muscl = true;
    auto r = bgk_solver_1d(s, cfg, 0.1);
    CHECK(r.final_state.f.minCoeff() >= 0.0);
}

TEST_CASE("bgk solver approaches Euler as epsilon decreases on Sod data")
{
    Grid1D x(0, 1, 100);
    VelocityGrid v(Grid1D(-8, 8, 32), 1);
    const MomentField m0 = sod_moments(x, 0.0);
    // resolved Euler reference averaged onto the kinetic grid
    Grid1D xf(0, 1, 3200);
    const auto eu = euler_solver_1d(sod_moments(xf, 0.0), xf, 0.15);
    auto coarse = [](const Eigen::VectorXd& a) {
        Eigen::VectorXd r(100);
        for (int i = 0; i < 100; ++i) r(i) = a.segment(32 * i, 32).mean();
        return r;
    };
    const Eigen::VectorXd rho_ref = coarse(eu.final_state.rho), E_ref = coarse(eu.final_state.E);
    const GasKineticState s0 = equilibrium_state(x, v, m0);
    double prev = 1e9;
    for (double eps : {1.0, 1e-1, 1e-2, 1e-3, 1e-6}) {
        BgkConfig cfg;
        cfg.epsilon = eps;
        cfg.muscl = true;
        auto r = bgk_solver_1d(s0, cfg, 0.15);
        const MomentField m = moments_field(r.final_state);
        const double d = rel_l1(m.rho, rho_ref);
        CHECK(d < prev);
        prev = d;
        if (eps == 1e-6) {
            CHECK(d < 0.02);
            CHECK(rel_l1(m.E, E_ref) < 0.02);
        }
    }
}
