#include "kmf/agents.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kmf {

double InteractionRule::D(double w) const
{
    switch (diffusion) {
    case DiffusionKind::sqrt_one_minus_sq: return std::sqrt(std::max(0.0, 1.0 - w * w));
    case DiffusionKind::one_minus_sq: return 1.0 - w * w;
    case DiffusionKind::linear: return w;
    case DiffusionKind::constant: return 1.0;
    }
    return 1.0;
}

double InteractionRule::D2_prime(double w) const
{
    switch (diffusion) {
    case DiffusionKind::sqrt_one_minus_sq: return -2.0 * w;
    case DiffusionKind::one_minus_sq: return -4.0 * w * (1.0 - w * w);
    case DiffusionKind::linear: return 2.0 * w;
    case DiffusionKind::constant: return 0.0;
    }
    return 0.0;
}

InteractionRule opinion_rule(double p, DiffusionKind d, double sigma2, double epsilon)
{
    if (p < 0.0 || p > 1.0) throw DomainError("opinion_rule: compromise weight must lie in [0,1]");
    if (sigma2 < 0.0 || !(epsilon > 0.0)) throw DomainError("opinion_rule: invalid noise or scaling");
    InteractionRule r;
    r.kind = RuleKind::opinion;
    r.p1 = 1.0 - p;
    r.q1 = p;
    r.p2 = p;
    r.q2 = 1.0 - p;
    r.diffusion = d;
    r.sigma2 = sigma2;
    r.epsilon = epsilon;
    r.lo = -1.0;
    r.hi = 1.0;
    return r;
}

InteractionRule wealth_rule(double lambda, double sigma2, double epsilon)
{
    if (!(lambda > 0.0) || lambda > 1.0) throw DomainError("wealth_rule: lambda must lie in (0,1]");
    if (sigma2 < 0.0 || !(epsilon > 0.0)) throw DomainError("wealth_rule: invalid noise or scaling");
    InteractionRule r;
    r.kind = RuleKind::wealth;
    r.p1 = r.q2 = 1.0 - lambda;
    r.p2 = r.q1 = lambda;
    r.diffusion = DiffusionKind::linear;
    r.sigma2 = sigma2;
    r.epsilon = epsilon;
    r.lo = 0.0;
    return r;
}

Interaction binary_interact(const InteractionRule& r, double v, double w, double eta, double eta_star)
{
    const double e = r.epsilon, s = std::sqrt(e * r.sigma2);
    const double vp = v + e * ((r.p1 - 1.0) * v + r.q1 * w) + r.D(v) * s * eta;
    const double wp = w + e * (r.p2 * v + (r.q2 - 1.0) * w) + r.D(w) * s * eta_star;
    if (!r.contains(vp) || !r.contains(wp)) return {v, w, false};
    return {vp, wp, true};
}

double draw_noise(NoiseLaw law, Rng& rng)
{
    if (law == NoiseLaw::two_point) return rng.uniform() < 0.5 ? -1.0 : 1.0;
    // standard normal truncated to |x| <= 3, rescaled to unit variance
    static const double scale = 1.0 / std::sqrt(0.9733369246625415);
    for (;;) {
        const double x = rng.normal();
        if (std::abs(x) <= 3.0) return x * scale;
    }
}

AgentEnsemble dsmc_run(const InteractionRule& rule, AgentEnsemble ens, double dt, double t_end, Rng& rng,
                       const std::vector<double>& save_times, std::vector<AgentEnsemble>* saved)
{
    const long N = static_cast<long>(ens.states.size());
    if (N < 2 || N % 2) throw ConfigError("dsmc_run: the ensemble size must be even and positive");
    if (!(dt > 0.0) || dt > 2.0 * rule.epsilon * (1.0 + 1e-12))
        throw ConfigError("dsmc_run: time step must lie in (0, 2 epsilon]");
    for (Eigen::Index i = 0; i < ens.states.size(); ++i)
        if (!rule.contains(ens.states(i))) throw ConfigError("dsmc_run: initial state outside the domain");
    double prev = ens.time;
    for (double t : save_times) {
        if (t < prev || t > t_end + 1e-12) throw ConfigError("dsmc_run: save times must be ascending");
        prev = t;
    }

    std::vector<long> idx(static_cast<size_t>(N));
    auto step = [&](double h) {
        long nc = std::min(sround(0.5 * N * h / rule.epsilon, rng), N / 2);
        std::iota(idx.begin(), idx.end(), 0L);
        for (long i = 0; i < 2 * nc; ++i) {
            const long j = i + static_cast<long>(rng.below(static_cast<std::uint64_t>(N - i)));
            std::swap(idx[i], idx[j]);
        }
        for (long p = 0; p < nc; ++p) {
            double& v = ens.states(idx[2 * p]);
            double& w = ens.states(idx[2 * p + 1]);
            const double e1 = draw_noise(rule.noise, rng), e2 = draw_noise(rule.noise, rng);
            const Interaction out = binary_interact(rule, v, w, e1, e2);
            ++ens.interactions;
            if (!out.accepted) {
                ++ens.rejected;
                continue;
            }
            v = out.v;
            w = out.w;
        }
        ens.time += h;
    };
    auto advance_to = [&](double target) {
        const long nsteps = std::lround(std::ceil((target - ens.time) / dt - 1e-9));
        const double t0 = ens.time;
        for (long k = 0; k < nsteps; ++k) step(std::min(dt, target - ens.time));
        if (nsteps > 0) ens.time = std::max(t0, target);
    };
    for (double t : save_times) {
        advance_to(t);
        if (saved) saved->push_back(ens);
    }
    advance_to(t_end);
    return ens;
}

namespace {

struct FpCoefficients {
    Eigen::VectorXd alpha, beta;   // F_k = alpha_k f_k + beta_k f_{k-1} at face k
};

double chang_cooper_delta(double lam)
{
    if (std::abs(lam) < 1e-5) return 0.5 - lam / 12.0;
    const double em = std::expm1(lam);
    if (!std::isfinite(em)) return 1.0 / lam;
    return 1.0 / lam - 1.0 / em;
}

FpCoefficients fp_coefficients(const InteractionRule& r, const Eigen::Ref<const Eigen::VectorXd>& f, const Grid1D& g)
{
    const int n = g.n_cells;
    const double h = g.spacing();
    const double mass = f.sum();
    double m = 0.0;
    if (mass > 0.0)
        for (int i = 0; i < n; ++i) m += g.center(i) * f(i);
    m = mass > 0.0 ? m / mass : 0.0;
    FpCoefficients c{Eigen::VectorXd::Zero(n + 1), Eigen::VectorXd::Zero(n + 1)};
    for (int k = 1; k < n; ++k) {
        const double w = g.face(k);
        const double d = 0.5 * r.sigma2 * r.D(w) * r.D(w);
        const double C = 0.5 * r.sigma2 * r.D2_prime(w) - r.drift(w, m);
        if (d <= 1e-300) {
            c.alpha(k) = C > 0 ? C : 0.0;
            c.beta(k) = C > 0 ? 0.0 : C;
            continue;
        }
        const double lam = h * C / d;
        const double del = chang_cooper_delta(lam);
        c.alpha(k) = C * (1.0 - del) + d / h;
        c.beta(k) = C * del - d / h;
    }
    return c;
}

}  // namespace

Eigen::VectorXd fokker_planck_rhs(const InteractionRule& rule, const Eigen::Ref<const Eigen::VectorXd>& f,
                                  const Grid1D& grid)
{
    const int n = grid.n_cells;
    if (f.size() != n) throw std::invalid_argument("fokker_planck_rhs: size mismatch");
    const FpCoefficients c = fp_coefficients(rule, f, grid);
    Eigen::VectorXd F = Eigen::VectorXd::Zero(n + 1);
    for (int k = 1; k < n; ++k) F(k) = c.alpha(k) * f(k) + c.beta(k) * f(k - 1);
    return (F.tail(n) - F.head(n)) / grid.spacing();
}

FpResult fokker_planck_solve(const InteractionRule& rule, const Eigen::Ref<const Eigen::VectorXd>& f0,
                             const Grid1D& grid, double t_end, double dt, const std::vector<double>& save_times)
{
    const int n = grid.n_cells;
    if (f0.size() != n) throw ConfigError("fokker_planck_solve: initial data does not match the grid");
    if (!(dt > 0.0)) throw ConfigError("fokker_planck_solve: time step must be positive");
    if (f0.minCoeff() < 0.0) throw ConfigError("fokker_planck_solve: negative initial data");
    double prev = 0.0;
    for (double t : save_times) {
        if (t < prev || t > t_end + 1e-12) throw ConfigError("fokker_planck_solve: save times must be ascending");
        prev = t;
    }
    const double h = grid.spacing();
    FpResult res;
    Eigen::VectorXd f = f0;
    double time = 0.0;
    auto step = [&](double k) {
        const FpCoefficients c = fp_coefficients(rule, f, grid);
        Eigen::VectorXd a(n), b(n), s(n);
        const double r = k / h;
        for (int i = 0; i < n; ++i) {
            a(i) = r * c.beta(i);
            b(i) = 1.0 - r * (c.beta(i + 1) - c.alpha(i));
            s(i) = -r * c.alpha(i + 1);
        }
        f = thomas_solve(a, b, s, f);
        if (!f.allFinite()) throw SolverFailure("fokker_planck_solve: non-finite solution");
        if (f.minCoeff() < -1e-12 * f.cwiseAbs().maxCoeff())
            throw SolverFailure("fokker_planck_solve: positivity lost");
        f = f.cwiseMax(0.0);
        time += k;
    };
    auto advance_to = [&](double target) {
        const long nsteps = std::lround(std::ceil((target - time) / dt - 1e-9));
        for (long j = 0; j < nsteps; ++j) step(std::min(dt, target - time));
        time = std::max(time, target);
    };
    for (double t : save_times) {
        advance_to(t);
        res.saved.push_back(f);
    }
    advance_to(t_end);
    res.f = f;
    return res;
}

namespace {

void check_spec(const SteadyStateSpec& s)
{
    if (!(s.sigma2 > 0.0)) throw DomainError("steady state: sigma2 must be positive");
    switch (s.kind) {
    case SteadyKind::beta:
        if (!(std::abs(s.m) < 1.0)) throw DomainError("steady state: beta mean must lie in (-1,1)");
        break;
    case SteadyKind::maxwellian_like:
        if (!(std::abs(s.m) < 1.0) || !(s.p > 0.0)) throw DomainError("steady state: invalid maxwellian-like data");
        break;
    case SteadyKind::inverse_gamma:
        if (!(s.m > 0.0) || !(s.lambda > 0.0)) throw DomainError("steady state: inverse-gamma needs m > 0, mu > 1");
        break;
    }
}

// log of the unnormalized maxwellian-like profile
double log_mlike(const SteadyStateSpec& s, double w)
{
    const double k = s.p * s.m / (2.0 * s.sigma2);
    return (-2.0 + k) * std::log1p(w) + (-2.0 - k) * std::log1p(-w) - s.p * (1.0 - s.m * w) / (s.sigma2 * (1.0 - w * w));
}

double mlike_log_norm(const SteadyStateSpec& s)
{
    // shift by the value at the mode-ish point to avoid under/overflow
    const double ref = log_mlike(s, s.m * 0.5);
    auto g = [&](double w) { return std::exp(log_mlike(s, w) - ref); };
    const double I = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, -1.0, 1.0, 20, 1e-12);
    return ref + std::log(I);
}

double mlike_value(const SteadyStateSpec& s, double w, double log_norm)
{
    if (w <= -1.0 || w >= 1.0) return 0.0;
    return std::exp(log_mlike(s, w) - log_norm);
}

}  // namespace

double steady_state_eval(const SteadyStateSpec& s, double w)
{
    check_spec(s);
    switch (s.kind) {
    case SteadyKind::beta: {
        if (w <= -1.0 || w >= 1.0) return 0.0;
        const double a = (1.0 + s.m) / s.sigma2, b = (1.0 - s.m) / s.sigma2;
        const double lb = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
        return std::exp((1.0 - a - b) * std::log(2.0) - lb + (a - 1.0) * std::log1p(w) + (b - 1.0) * std::log1p(-w));
    }
    case SteadyKind::maxwellian_like: return mlike_value(s, w, mlike_log_norm(s));
    case SteadyKind::inverse_gamma: {
        if (w <= 0.0) return 0.0;
        const double mu = s.mu(), beta = (mu - 1.0) * s.m;
        return std::exp(mu * std::log(beta) - std::lgamma(mu) - (1.0 + mu) * std::log(w) - beta / w);
    }
    }
    return 0.0;
}

Eigen::VectorXd steady_state_cells(const SteadyStateSpec& s, const Grid1D& g)
{
    check_spec(s);
    const int n = g.n_cells;
    const double h = g.spacing();
    Eigen::VectorXd out(n);
    switch (s.kind) {
    case SteadyKind::beta: {
        const double a = (1.0 + s.m) / s.sigma2, b = (1.0 - s.m) / s.sigma2;
        auto cdf = [&](double w) {
            const double x = std::clamp(0.5 * (1.0 + w), 0.0, 1.0);
            return boost::math::ibeta(a, b, x);
        };
        for (int i = 0; i < n; ++i) out(i) = (cdf(g.face(i + 1)) - cdf(g.face(i))) / h;
        break;
    }
    case SteadyKind::inverse_gamma: {
        const double mu = s.mu(), beta = (mu - 1.0) * s.m;
        auto cdf = [&](double w) { return w <= 0.0 ? 0.0 : boost::math::gamma_q(mu, beta / w); };
        for (int i = 0; i < n; ++i) out(i) = (cdf(g.face(i + 1)) - cdf(g.face(i))) / h;
        break;
    }
    case SteadyKind::maxwellian_like: {
        const double ln = mlike_log_norm(s);
        auto f = [&](double w) { return mlike_value(s, w, ln); };
        for (int i = 0; i < n; ++i) {
            const double lo = std::max(g.face(i), -1.0), hi = std::min(g.face(i + 1), 1.0);
            out(i) = hi > lo ? boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 15, 1e-12) / h
                             : 0.0;
        }
        break;
    }
    }
    return out;
}

// ---------- named cases ----------

namespace {

struct UniformIC {
    double a, b;   // support
};

UniformIC preset_ic(const std::string& name, double z)
{
    if (name == "opinion-A") return {0.25 * (z - 2.0), 0.25 * (z + 2.0)};
    if (name == "opinion-B") return {-0.5, 0.5};
    if (name == "wealth-C") return {0.2 * z, 2.0 + 0.2 * z};
    return {0.0, 2.0};
}

}  // namespace

InteractionRule AgentPreset::rule(double z) const
{
    if (name == "opinion-A") return opinion_rule(1.0, DiffusionKind::sqrt_one_minus_sq, sigma2, epsilon);
    if (name == "opinion-B") return opinion_rule(0.75 + 0.25 * z, DiffusionKind::one_minus_sq, sigma2, epsilon);
    if (name == "wealth-C") return wealth_rule(1.0, sigma2, epsilon);
    if (name == "wealth-D") return wealth_rule(0.5 + 0.25 * z, sigma2, epsilon);
    throw std::invalid_argument("agent preset: unknown name '" + name + "'");
}

SteadyStateSpec AgentPreset::steady(double z) const
{
    SteadyStateSpec s;
    s.sigma2 = sigma2;
    const UniformIC ic = preset_ic(name, z);
    s.m = 0.5 * (ic.a + ic.b);
    if (name == "opinion-A") {
        s.kind = SteadyKind::beta;
    } else if (name == "opinion-B") {
        s.kind = SteadyKind::maxwellian_like;
        s.p = 0.75 + 0.25 * z;
    } else if (name == "wealth-C") {
        s.kind = SteadyKind::inverse_gamma;
        s.lambda = 1.0;
    } else if (name == "wealth-D") {
        s.kind = SteadyKind::inverse_gamma;
        s.lambda = 0.5 + 0.25 * z;
    } else {
        throw std::invalid_argument("agent preset: unknown name '" + name + "'");
    }
    return s;
}

Eigen::VectorXd AgentPreset::initial_cells(const Grid1D& g, double z) const
{
    const UniformIC ic = preset_ic(name, z);
    const double height = 1.0 / (ic.b - ic.a);
    Eigen::VectorXd f(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) {
        const double lo = std::max(g.face(i), ic.a), hi = std::min(g.face(i + 1), ic.b);
        f(i) = hi > lo ? height * (hi - lo) / g.spacing() : 0.0;
    }
    return f;
}

AgentEnsemble AgentPreset::initial_ensemble(int N, double z, Rng& rng) const
{
    const UniformIC ic = preset_ic(name, z);
    AgentEnsemble e;
    e.states.resize(N);
    for (int i = 0; i < N; ++i) e.states(i) = rng.uniform(ic.a, ic.b);
    return e;
}

std::vector<std::string> agent_preset_names() { return {"opinion-A", "opinion-B", "wealth-C", "wealth-D"}; }

AgentPreset agent_preset(const std::string& name)
{
    AgentPreset p;
    p.name = name;
    if (name == "opinion-A") {
        p.space = ParamSpace::cube(1, 0.0, 1.0);
        p.domain = Grid1D(-1.0, 1.0, 20);
        p.sigma2 = 0.1;
    } else if (name == "opinion-B") {
        p.space = ParamSpace::cube(1, -1.0, 1.0);
        p.domain = Grid1D(-1.0, 1.0, 20);
        p.sigma2 = 0.1;
    } else if (name == "wealth-C") {
        p.space = ParamSpace::cube(1, 0.0, 1.0);
        p.domain = Grid1D(0.0, 10.0, 100);
        p.sigma2 = 0.5;
    } else if (name == "wealth-D") {
        p.space = ParamSpace::cube(1, -1.0, 1.0);
        p.domain = Grid1D(0.0, 10.0, 100);
        p.sigma2 = 0.5;
    } else {
        throw std::invalid_argument("agent preset: unknown name '" + name + "'");
    }
    return p;
}

}  // namespace kmf
