#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kmf/agents.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>

using namespace kmf;

TEST_CASE("binary interaction rules")
{
    InteractionRule op = opinion_rule(1.0, DiffusionKind::sqrt_one_minus_sq, 0.1, 0.02);
    auto r = binary_interact(op, 0.3, 0.3, 1.0, -1.0);
    CHECK(r.accepted);
    CHECK(r.v == doctest::Approx(0.3 + std::sqrt(1 - 0.09) * std::sqrt(0.02 * 0.1)));
    CHECK(r.w == doctest::Approx(0.3 - std::sqrt(1 - 0.09) * std::sqrt(0.02 * 0.1)));

    InteractionRule wr = wealth_rule(0.4, 0.5, 1.0);
    auto q = binary_interact(wr, 2.0, 5.0, 0.0, 0.0);
    CHECK(q.v == doctest::Approx(0.6 * 2.0 + 0.4 * 5.0));
    CHECK(q.w == doctest::Approx(0.6 * 5.0 + 0.4 * 2.0));

    InteractionRule w2 = wealth_rule(0.3, 0.5, 0.05);
    double s = 0;
    for (double e1 : {-1.0, 1.0})
        for (double e2 : {-1.0, 1.0}) {
            auto o = binary_interact(w2, 1.5, 0.7, e1, e2);
            s += o.v + o.w - 2.2;
        }
    CHECK(std::abs(s) < 1e-14);

    InteractionRule big = opinion_rule(0.5, DiffusionKind::constant, 4.0, 0.5);
    auto rej = binary_interact(big, 0.95, 0.9, 1.0, 1.0);
    CHECK_FALSE(rej.accepted);
    CHECK(rej.v == 0.95);
    CHECK(rej.w == 0.9);
    CHECK_THROWS_AS(opinion_rule(1.5, DiffusionKind::constant, 0.1, 0.1), DomainError);
}

TEST_CASE("dsmc_run basics")
{
    AgentPreset A = agent_preset("opinion-A");
    Rng rng(1);
    AgentEnsemble e = A.initial_ensemble(1000, 0.5, rng);
    AgentEnsemble same = dsmc_run(A.rule(0.5), e, A.epsilon, 0.0, rng);
    CHECK(same.states == e.states);
    CHECK_THROWS_AS(dsmc_run(A.rule(0.5), e, 3 * A.epsilon, 1.0, rng), ConfigError);
    AgentEnsemble odd;
    odd.states = Eigen::VectorXd::Zero(7);
    CHECK_THROWS_AS(dsmc_run(A.rule(0.5), odd, A.epsilon, 1.0, rng), ConfigError);
    std::vector<AgentEnsemble> snaps;
    AgentEnsemble out = dsmc_run(A.rule(0.5), e, A.epsilon, 1.0, rng, {0.5}, &snaps);
    CHECK(out.states.size() == 1000);
    CHECK(snaps.size() == 1);
    CHECK(snaps[0].time == doctest::Approx(0.5));
    CHECK(out.time == doctest::Approx(1.0));
    CHECK(out.states.minCoeff() >= -1.0);
    CHECK(out.states.maxCoeff() <= 1.0);
    CHECK(out.interactions == doctest::Approx(1000.0 / (2 * A.epsilon)).epsilon(0.01));
}

TEST_CASE("opinion A mean is conserved in expectation")
{
    AgentPreset A = agent_preset("opinion-A");
    const int N = 20000;
    const double t = 5.0;
    for (double z : {0.1, 0.8}) {
        Rng rng(substream_seed(77, static_cast<std::uint64_t>(z * 10)));
        AgentEnsemble e = A.initial_ensemble(N, z, rng);
        const double m0 = e.states.mean();
        AgentEnsemble o = dsmc_run(A.rule(z), e, A.epsilon, t, rng);
        CHECK(std::abs(o.states.mean() - m0) <= 3.0 * std::sqrt(t * A.sigma2 / N));
    }
}

TEST_CASE("wealth mean behaves as a martingale")
{
    AgentPreset D = agent_preset("wealth-D");
    const int R = 50, N = 2000;
    Eigen::VectorXd drift(R);
    for (int r = 0; r < R; ++r) {
        Rng rng(substream_seed(5, r));
        AgentEnsemble e = D.initial_ensemble(N, 0.3, rng);
        const double m0 = e.states.mean();
        drift(r) = dsmc_run(D.rule(0.3), e, D.epsilon, 1.0, rng).states.mean() - m0;
    }
    const double se = std::sqrt((drift.array() - drift.mean()).square().sum() / (R - 1) / R);
    CHECK(std::abs(drift.mean()) <= 3.0 * se);
}

TEST_CASE("steady states")
{
    SteadyStateSpec b;
    b.kind = SteadyKind::beta;
    b.m = 0.0;
    b.sigma2 = 1.0;
    for (double w : {0.1, 0.5, 0.9}) CHECK(steady_state_eval(b, w) == doctest::Approx(steady_state_eval(b, -w)));
    b.m = 0.2;
    b.sigma2 = 0.1;
    auto fb = [&](double w) { return steady_state_eval(b, w); };
    CHECK(boost::math::quadrature::gauss_kronrod<double, 61>::integrate(fb, -1, 1, 15, 1e-12) ==
          doctest::Approx(1.0).epsilon(1e-8));

    SteadyStateSpec g;
    g.kind = SteadyKind::inverse_gamma;
    g.m = 1.2;
    g.lambda = 0.6;
    g.sigma2 = 0.5;
    CHECK(g.mu() == doctest::Approx(1.0 + 2 * 0.6 / 0.5));
    auto fg = [&](double w) { return steady_state_eval(g, w); };
    const double I = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(fg, 0.0, std::numeric_limits<double>::infinity(), 20, 1e-13);
    CHECK(std::abs(I - 1.0) < 1e-8);
    const double mean = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double w) { return w * fg(w); }, 0.0, std::numeric_limits<double>::infinity(), 20, 1e-13);
    CHECK(mean == doctest::Approx(1.2).epsilon(1e-6));

    SteadyStateSpec x;
    x.kind = SteadyKind::maxwellian_like;
    x.m = 0.1;
    x.p = 0.8;
    x.sigma2 = 0.1;
    Grid1D gr(-1, 1, 200);
    Eigen::VectorXd cells = steady_state_cells(x, gr);
    CHECK(cells.sum() * gr.spacing() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cells(57) == doctest::Approx(steady_state_eval(x, gr.center(57))).epsilon(1e-3));
    Eigen::VectorXd bc = steady_state_cells(b, gr);
    CHECK(bc.sum() * gr.spacing() == doctest::Approx(1.0).epsilon(1e-12));

    SteadyStateSpec bad = g;
    bad.lambda = -0.1;
    CHECK_THROWS_AS(steady_state_eval(bad, 1.0), DomainError);
    bad = b;
    bad.m = 1.0;
    CHECK_THROWS_AS(steady_state_cells(bad, gr), DomainError);
}

TEST_CASE("fokker-planck solver conserves mass and positivity")
{
    for (const auto& name : agent_preset_names()) {
        AgentPreset P = agent_preset(name);
        Grid1D g = P.domain;
        Eigen::VectorXd f0 = P.initial_cells(g, P.space.lo(0) * 0.5 + P.space.hi(0) * 0.5);
        CHECK(f0.sum() * g.spacing() == doctest::Approx(1.0).epsilon(1e-12));
        FpResult r = fokker_planck_solve(P.rule(0.3), f0, g, 2.0, 0.01, {1.0});
        CHECK(r.f.sum() == doctest::Approx(f0.sum()).epsilon(1e-12));
        CHECK(r.saved[0].sum() == doctest::Approx(f0.sum()).epsilon(1e-12));
        CHECK(r.f.minCoeff() >= 0.0);
    }
}

TEST_CASE("fokker-planck steady residual is second order")
{
    AgentPreset A = agent_preset("opinion-A");
    double prev = 0;
    for (int n : {40, 80, 160}) {
        Grid1D g(-1, 1, n);
        const SteadyStateSpec s = A.steady(0.4);
        Eigen::VectorXd f = steady_state_cells(s, g);
        f /= f.sum() * g.spacing();
        InteractionRule r = A.rule(0.4);
        const double res = fokker_planck_rhs(r, f, g).lpNorm<1>() * g.spacing();
        if (prev > 0) CHECK(res < 0.3 * prev);
        prev = res;
    }
}

TEST_CASE("opinion B relaxes to the maxwellian-like state")
{
    AgentPreset B = agent_preset("opinion-B");
    Grid1D g(-1, 1, 200);
    for (double z : {-0.6, 0.5}) {
        FpResult r = fokker_planck_solve(B.rule(z), B.initial_cells(g, 0.0), g, 20.0, 0.01);
        Eigen::VectorXd ss = steady_state_cells(B.steady(z), g);
        CHECK((r.f - ss).lpNorm<1>() * g.spacing() < 1e-2);
    }
}

TEST_CASE("wealth C long time histogram matches the inverse-gamma state")
{
    AgentPreset C = agent_preset("wealth-C");
    const int N = 50000;
    Rng rng(99);
    AgentEnsemble e = C.initial_ensemble(N, 0.5, rng);
    InteractionRule rule = C.rule(0.5);
    rule.epsilon = 0.005;
    AgentEnsemble o = dsmc_run(rule, e, rule.epsilon, 20.0, rng);
    Grid1D g(0, 10, 50);
    Field h = histogram_reconstruct(o.states, g, OutOfRange::reject);
    const double kept = h.values.sum() * g.spacing();
    // the ensemble mean is conserved only in expectation; compare with the state at the realized mean
    SteadyStateSpec spec = C.steady(0.5);
    spec.m = o.states.mean();
    Eigen::VectorXd ss = steady_state_cells(spec, g);
    // relative deviation per bin in units of its binomial standard error
    double chi2 = 0;
    int bins = 0;
    for (int i = 0; i < g.n_cells; ++i) {
        const double p = ss(i) * g.spacing();
        if (p * N < 20) continue;
        const double se = std::sqrt(p * (1 - p) / N) / g.spacing();
        chi2 += std::pow((h.values(0, i) * kept - ss(i)) / se, 2);
        ++bins;
    }
    MESSAGE("chi2/bins = " << chi2 / bins);
    CHECK(chi2 / bins < 2.0);
}

TEST_CASE("dsmc approaches the mean-field solution as epsilon decreases")
{
    AgentPreset A = agent_preset("opinion-A");
    const double z = 0.5, t = 1.0;
    Grid1D g(-1, 1, 20), gf(-1, 1, 400);
    const Eigen::VectorXd fp = fokker_planck_solve(A.rule(z), A.initial_cells(gf, z), gf, t, 0.001).f;
    Eigen::VectorXd ref(20);
    for (int i = 0; i < 20; ++i) ref(i) = fp.segment(20 * i, 20).mean();
    double prev = 1e9;
    for (double eps : {0.5, 0.1, 0.02}) {
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(20);
        for (int r = 0; r < 4; ++r) {
            Rng rng(substream_seed(3, r));
            InteractionRule rule = A.rule(z);
            rule.epsilon = eps;
            AgentEnsemble o = dsmc_run(rule, A.initial_ensemble(100000, z, rng), eps, t, rng);
            acc += histogram_reconstruct(o.states, g).values.transpose();
        }
        const double d = (acc / 4 - ref).lpNorm<1>() * g.spacing();
        CHECK(d < prev);
        prev = d;
    }
}
