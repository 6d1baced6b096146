#include "kmf/gas.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace kmf {

namespace {

constexpr double kPi = std::numbers::pi;

double sq(double a) { return a * a; }

// Moment vector (rho, rho u_1..rho u_dv, E).
Eigen::VectorXd moment_vector(const Eigen::Ref<const Eigen::VectorXd>& f, const VelocityGrid& g)
{
    const int nm = g.dv + 2;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(nm);
    for (int k = 0; k < g.size(); ++k) {
        const double fk = f(k);
        if (fk == 0.0) continue;
        const Eigen::Vector2d v = g.node(k);
        m(0) += fk;
        for (int d = 0; d < g.dv; ++d) m(1 + d) += fk * v(d);
        m(nm - 1) += 0.5 * fk * v.head(g.dv).squaredNorm();
    }
    return m * g.cell_volume();
}

Eigen::VectorXd sample_maxwellian(double rho, const Eigen::Vector2d& u, double T, const VelocityGrid& g)
{
    Eigen::VectorXd f(g.size());
    const double c = rho / std::pow(2.0 * kPi * T, 0.5 * g.dv);
    for (int k = 0; k < g.size(); ++k) {
        const Eigen::Vector2d v = g.node(k);
        f(k) = c * std::exp(-(v - u).head(g.dv).squaredNorm() / (2.0 * T));
    }
    return f;
}

double marginal_cell_average(double lo, double hi, double mean, double var)
{
    const double s = std::sqrt(2.0 * var);
    return 0.5 * (std::erf((hi - mean) / s) - std::erf((lo - mean) / s)) / (hi - lo);
}

}  // namespace

void MomentSet::update_temperature()
{
    if (rho <= 0.0) {
        T = 0.0;
        return;
    }
    const double u2 = u.head(dv).squaredNorm();
    T = (2.0 * E - rho * u2) / (dv * rho);
}

VelocityGrid::VelocityGrid(Grid1D a, int d) : axis(a), dv(d)
{
    if (d != 1 && d != 2) throw std::invalid_argument("VelocityGrid: dimension must be 1 or 2");
}

Eigen::Vector2d VelocityGrid::node(int k) const
{
    if (dv == 1) return {axis.center(k), 0.0};
    return {axis.center(k / axis.n_cells), axis.center(k % axis.n_cells)};
}

double maxwellian(const MomentSet& m, const Eigen::Ref<const Eigen::VectorXd>& v, int dv)
{
    if (!(m.T > 0.0)) throw DegenerateState("maxwellian: temperature must be positive");
    if (m.rho < 0.0) throw DegenerateState("maxwellian: negative density");
    if (v.size() < dv) throw std::invalid_argument("maxwellian: velocity has too few components");
    if (m.rho == 0.0) return 0.0;
    double d2 = 0;
    for (int d = 0; d < dv; ++d) d2 += sq(v(d) - m.u(d));
    return m.rho / std::pow(2.0 * kPi * m.T, 0.5 * dv) * std::exp(-d2 / (2.0 * m.T));
}

MomentSet moments(const Eigen::Ref<const Eigen::VectorXd>& f, const VelocityGrid& grid)
{
    if (f.size() != grid.size()) throw std::invalid_argument("moments: distribution does not match the grid");
    const Eigen::VectorXd mv = moment_vector(f, grid);
    MomentSet m;
    m.dv = grid.dv;
    m.rho = mv(0);
    if (m.rho > 0)
        for (int d = 0; d < grid.dv; ++d) m.u(d) = mv(1 + d) / m.rho;
    m.E = mv(grid.dv + 1);
    m.update_temperature();
    return m;
}

Eigen::VectorXd discrete_maxwellian(const MomentSet& target, const VelocityGrid& grid, bool match)
{
    if (target.rho < 0.0) throw DegenerateState("discrete_maxwellian: negative density");
    if (target.rho == 0.0) return Eigen::VectorXd::Zero(grid.size());
    if (!(target.T > 0.0)) throw DegenerateState("discrete_maxwellian: temperature must be positive");
    const int dv = grid.dv;
    Eigen::VectorXd f = sample_maxwellian(target.rho, target.u, target.T, grid);
    if (!match) return f;

    const int nm = dv + 2;
    Eigen::VectorXd want(nm);
    want(0) = target.rho;
    for (int d = 0; d < dv; ++d) want(1 + d) = target.rho * target.u(d);
    want(nm - 1) = target.E;
    const double scale = std::abs(target.rho) + std::abs(target.E);

    double rho = target.rho, T = target.T;
    Eigen::Vector2d u = target.u;
    const Eigen::VectorXd f_guess = f;
    const double dV = grid.cell_volume();
    for (int it = 0; it < 30; ++it) {
        Eigen::VectorXd r = moment_vector(f, grid) - want;
        if (r.lpNorm<Eigen::Infinity>() <= 1e-15 * scale) return f;
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nm, nm);
        for (int k = 0; k < grid.size(); ++k) {
            const double fk = f(k);
            if (fk == 0.0) continue;
            const Eigen::Vector2d v = grid.node(k);
            const Eigen::Vector2d c = v - u;
            const double c2 = c.head(dv).squaredNorm();
            Eigen::VectorXd dp(nm);   // derivatives w.r.t. (rho, u, T)
            dp(0) = fk / rho;
            for (int d = 0; d < dv; ++d) dp(1 + d) = fk * c(d) / T;
            dp(nm - 1) = fk * (c2 / (2.0 * T * T) - dv / (2.0 * T));
            Eigen::VectorXd phi(nm);
            phi(0) = 1.0;
            for (int d = 0; d < dv; ++d) phi(1 + d) = v(d);
            phi(nm - 1) = 0.5 * v.head(dv).squaredNorm();
            J += phi * dp.transpose();
        }
        J *= dV;
        const Eigen::VectorXd step = J.fullPivLu().solve(-r);
        if (!step.allFinite()) break;
        rho += step(0);
        for (int d = 0; d < dv; ++d) u(d) += step(1 + d);
        T += step(nm - 1);
        if (!(rho > 0.0) || !(T > 0.0)) break;
        f = sample_maxwellian(rho, u, T, grid);
    }
    const Eigen::VectorXd r = moment_vector(f, grid) - want;
    if (rho > 0.0 && T > 0.0 && f.allFinite() && r.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) return f;
    return f_guess;
}

Eigen::VectorXd bgk_homogeneous_exact(const Eigen::Ref<const Eigen::VectorXd>& f0, const VelocityGrid& grid,
                                      double nu, double t)
{
    if (t < 0.0) throw std::invalid_argument("bgk_homogeneous_exact: negative time");
    if (!(nu > 0.0)) throw std::invalid_argument("bgk_homogeneous_exact: nu must be positive");
    const Eigen::VectorXd finf = discrete_maxwellian(moments(f0, grid), grid, true);
    const double a = std::exp(-nu * t);
    return a * f0 + (1.0 - a) * finf;
}

double entropy(const Eigen::Ref<const Eigen::MatrixXd>& f, double cell_volume)
{
    double h = 0.0;
    for (Eigen::Index j = 0; j < f.cols(); ++j)
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
            const double x = f(i, j);
            if (x > 1e-300) h += x * std::log(x);
        }
    return h * cell_volume;
}

long sround(double x, Rng& rng)
{
    const double fl = std::floor(x);
    return static_cast<long>(fl) + (rng.uniform() < x - fl ? 1 : 0);
}

long dsmc_maxwell_step(Eigen::MatrixXd& particles, double dt, Rng& rng)
{
    if (dt < 0.0 || dt > 2.0) throw std::invalid_argument("dsmc_maxwell_step: dt must lie in [0, 2]");
    const long N = static_cast<long>(particles.rows());
    const int d = static_cast<int>(particles.cols());
    if (d != 2 && d != 3) throw std::invalid_argument("dsmc_maxwell_step: velocities must have 2 or 3 components");
    if (dt == 0.0 || N < 2) return 0;
    long nc = std::min(sround(0.5 * N * dt, rng), N / 2);
    if (nc == 0) return 0;

    std::vector<long> idx(static_cast<size_t>(N));
    std::iota(idx.begin(), idx.end(), 0L);
    for (long i = 0; i < 2 * nc; ++i) {
        const long j = i + static_cast<long>(rng.below(static_cast<std::uint64_t>(N - i)));
        std::swap(idx[i], idx[j]);
    }
    for (long p = 0; p < nc; ++p) {
        const long a = idx[2 * p], b = idx[2 * p + 1];
        const Eigen::RowVectorXd vcm = 0.5 * (particles.row(a) + particles.row(b));
        const double g = (particles.row(a) - particles.row(b)).norm();
        Eigen::RowVectorXd w(d);
        if (d == 2) {
            const double th = 2.0 * kPi * rng.uniform();
            w << std::cos(th), std::sin(th);
        } else {
            const double ct = 2.0 * rng.uniform() - 1.0, ph = 2.0 * kPi * rng.uniform();
            const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
            w << st * std::cos(ph), st * std::sin(ph), ct;
        }
        particles.row(a) = vcm + 0.5 * g * w;
        particles.row(b) = vcm - 0.5 * g * w;
    }
    return nc;
}

Eigen::MatrixXd sample_two_bumps(int N, double z, Rng& rng)
{
    if (N < 1) throw std::invalid_argument("sample_two_bumps: N must be positive");
    const double a = 2.0 + ic::two_bumps_s * z, b = 1.0 + ic::two_bumps_s * z;
    const double sd = std::sqrt(0.5 * ic::two_bumps_sigma);
    Eigen::MatrixXd P(N, 2);
    for (int i = 0; i < N; ++i) {
        const double c = rng.uniform() < 0.5 ? a : -b;
        P(i, 0) = c + sd * rng.normal();
        P(i, 1) = sd * rng.normal();
    }
    return P;
}

MomentSet two_bumps_moments(double z)
{
    const double a = 2.0 + ic::two_bumps_s * z, b = 1.0 + ic::two_bumps_s * z;
    const double s = ic::two_bumps_sigma;
    const double mb = 0.5 * ic::two_bumps_rho0 * s;   // mass of one bump
    MomentSet m;
    m.dv = 2;
    m.rho = 2.0 * mb;
    m.u = {0.5 * (a - b), 0.0};
    m.E = 0.5 * mb * (a * a + s + b * b + s);
    m.update_temperature();
    return m;
}

Eigen::VectorXd two_bumps_marginal_cells(const Grid1D& w, double z)
{
    const double a = 2.0 + ic::two_bumps_s * z, b = 1.0 + ic::two_bumps_s * z;
    const double var = 0.5 * ic::two_bumps_sigma;
    const double mb = 0.5 * ic::two_bumps_rho0 * ic::two_bumps_sigma;
    Eigen::VectorXd out(w.n_cells);
    for (int j = 0; j < w.n_cells; ++j) {
        const double lo = w.face(j), hi = w.face(j + 1);
        out(j) = mb * (marginal_cell_average(lo, hi, a, var) + marginal_cell_average(lo, hi, -b, var));
    }
    return out;
}

Eigen::VectorXd maxwellian_marginal_cells(const MomentSet& m, const Grid1D& w)
{
    if (!(m.T > 0.0)) throw DegenerateState("maxwellian_marginal_cells: temperature must be positive");
    Eigen::VectorXd out(w.n_cells);
    for (int j = 0; j < w.n_cells; ++j) out(j) = m.rho * marginal_cell_average(w.face(j), w.face(j + 1), m.u(0), m.T);
    return out;
}

Eigen::VectorXd bgk_exact_marginal_cells(const Grid1D& w, double z, double nu, double t)
{
    const double a = std::exp(-nu * t);
    return a * two_bumps_marginal_cells(w, z) + (1.0 - a) * maxwellian_marginal_cells(two_bumps_moments(z), w);
}

// ---------- one-dimensional kinetic BGK and Euler ----------

double CollisionFrequency::operator()(double rho, double T) const
{
    if (!power_law) return C;
    return C * rho * std::pow(std::max(T, 0.0), 1.0 - eta);
}

MomentField moments_field(const GasKineticState& s)
{
    const int nx = static_cast<int>(s.f.rows());
    MomentField m;
    m.rho.resize(nx);
    m.m.resize(nx);
    m.E.resize(nx);
    m.T.resize(nx);
    m.time = s.time;
    const double dv = s.v.axis.spacing();
    const Eigen::VectorXd v = s.v.axis.cell_centers();
    const Eigen::VectorXd half_v2 = 0.5 * v.array().square();
    m.rho = s.f.rowwise().sum() * dv;
    m.m = s.f * v * dv;
    m.E = s.f * half_v2 * dv;
    for (int i = 0; i < nx; ++i) m.T(i) = m.rho(i) > 0 ? (2.0 * m.E(i) - sq(m.m(i)) / m.rho(i)) / m.rho(i) : 0.0;
    return m;
}

namespace {

MomentSet cell_moments(const MomentField& m, int i)
{
    MomentSet c;
    c.dv = 1;
    c.rho = m.rho(i);
    c.u(0) = c.rho > 0 ? m.m(i) / c.rho : 0.0;
    c.E = m.E(i);
    c.update_temperature();
    return c;
}

void check_save_times(const std::vector<double>& ts, double t0, double t_end)
{
    double prev = t0;
    for (double t : ts) {
        if (t < prev || t > t_end + 1e-12) throw ConfigError("save times must be ascending within the run interval");
        prev = t;
    }
}

double minmod(double a, double b)
{
    if (a * b <= 0.0) return 0.0;
    return std::abs(a) < std::abs(b) ? a : b;
}

// Ghost-padded copy with two cells on each side.
Eigen::VectorXd pad(const Eigen::Ref<const Eigen::VectorXd>& q, Boundary bc)
{
    const Eigen::Index n = q.size();
    Eigen::VectorXd e(n + 4);
    e.segment(2, n) = q;
    if (bc == Boundary::periodic) {
        e(0) = q(n - 2 >= 0 ? n - 2 : 0);
        e(1) = q(n - 1);
        e(n + 2) = q(0);
        e(n + 3) = q(n > 1 ? 1 : 0);
    } else {
        e(0) = e(1) = q(0);
        e(n + 2) = e(n + 3) = q(n - 1);
    }
    return e;
}

// One conservative transport step for a single velocity column.
void transport_column(Eigen::Ref<Eigen::VectorXd> q, double v, double dt, double dx, bool muscl, Boundary bc)
{
    const Eigen::Index n = q.size();
    const Eigen::VectorXd e = pad(q, bc);
    const double c = std::abs(v) * dt / dx;
    Eigen::VectorXd flux(n + 1);   // face k between cells k-1 and k
    for (Eigen::Index k = 0; k <= n; ++k) {
        const Eigen::Index l = k + 1, r = k + 2;   // padded indices of the adjacent cells
        double val;
        if (v >= 0) {
            val = e(l);
            if (muscl) val += 0.5 * (1.0 - c) * minmod(e(r) - e(l), e(l) - e(l - 1));
        } else {
            val = e(r);
            if (muscl) val -= 0.5 * (1.0 - c) * minmod(e(r) - e(l), e(r + 1) - e(r));
        }
        flux(k) = v * val;
    }
    for (Eigen::Index i = 0; i < n; ++i) q(i) -= dt / dx * (flux(i + 1) - flux(i));
}

void require_positive(const MomentField& m, const char* who)
{
    for (Eigen::Index i = 0; i < m.rho.size(); ++i) {
        if (!std::isfinite(m.rho(i)) || !std::isfinite(m.E(i)) || m.rho(i) <= 0.0 || m.T(i) <= 0.0)
            throw SolverFailure(std::string(who) + ": non-positive density or pressure in cell " + std::to_string(i) +
                                " at t=" + std::to_string(m.time));
    }
}

}  // namespace

GasKineticState equilibrium_state(const Grid1D& x, const VelocityGrid& v, const MomentField& m)
{
    if (v.dv != 1) throw std::invalid_argument("equilibrium_state: needs a one-dimensional velocity grid");
    GasKineticState s;
    s.x = x;
    s.v = v;
    s.time = m.time;
    s.f.resize(x.n_cells, v.size());
    for (int i = 0; i < x.n_cells; ++i) s.f.row(i) = discrete_maxwellian(cell_moments(m, i), v, true).transpose();
    return s;
}

BgkResult bgk_solver_1d(const GasKineticState& ic, const BgkConfig& cfg, double t_end,
                        const std::vector<double>& save_times)
{
    if (!(cfg.epsilon > 0.0)) throw ConfigError("bgk_solver_1d: epsilon must be positive");
    if (ic.v.dv != 1) throw ConfigError("bgk_solver_1d: needs a one-dimensional velocity grid");
    if (ic.f.rows() != ic.x.n_cells || ic.f.cols() != ic.v.size()) throw ConfigError("bgk_solver_1d: state shape");
    if (t_end < ic.time) throw ConfigError("bgk_solver_1d: t_end before the initial time");
    check_save_times(save_times, ic.time, t_end);
    const double dx = ic.x.spacing();
    const double vmax = ic.v.speed_max();
    const double dt_max = cfg.cfl * dx / vmax;
    if (cfg.cfl <= 0.0 || cfg.cfl > 1.0) throw ConfigError("bgk_solver_1d: CFL must lie in (0, 1]");
    if (cfg.dt > dt_max * (1.0 + 1e-12)) throw ConfigError("bgk_solver_1d: time step violates the CFL condition");
    const double dt_nom = cfg.dt > 0.0 ? cfg.dt : dt_max;

    BgkResult res;
    res.final_state = ic;
    GasKineticState& s = res.final_state;
    const Eigen::VectorXd vel = ic.v.axis.cell_centers();
    const int nx = ic.x.n_cells, nv = ic.v.size();

    auto step = [&](double dt) {
        for (int j = 0; j < nv; ++j) {
            Eigen::VectorXd col = s.f.col(j);
            transport_column(col, vel(j), dt, dx, cfg.muscl, cfg.bc);
            s.f.col(j) = col;
        }
        const MomentField m = moments_field(s);
        for (int i = 0; i < nx; ++i) {
            const MomentSet c = cell_moments(m, i);
            if (!(c.rho > 0.0) || !(c.T > 0.0)) {
                if (c.rho < 0.0 || (c.rho > 0.0 && c.T < 0.0))
                    throw SolverFailure("bgk_solver_1d: negative density or temperature in cell " + std::to_string(i));
                continue;
            }
            const double a = cfg.nu(c.rho, c.T) * dt / cfg.epsilon;
            const Eigen::VectorXd M = discrete_maxwellian(c, ic.v, true);
            s.f.row(i) = (s.f.row(i) + a * M.transpose()) / (1.0 + a);
        }
        if (!s.f.allFinite()) throw SolverFailure("bgk_solver_1d: non-finite distribution");
        s.time += dt;
    };

    auto advance_to = [&](double target) {
        while (s.time < target - 1e-14 * std::max(1.0, std::abs(target))) {
            double dt = std::min(dt_nom, target - s.time);
            // avoid a tiny trailing step
            if (target - s.time - dt < 1e-3 * dt_nom && target - s.time > dt) dt = target - s.time;
            step(dt);
        }
        s.time = target;
    };

    for (double t : save_times) {
        advance_to(t);
        res.saved.push_back(moments_field(s));
    }
    advance_to(t_end);
    return res;
}

namespace {

struct EulerFlux {
    double f0, f1, f2;
};

EulerFlux physical_flux(double rho, double m, double E)
{
    const double u = m / rho;
    const double p = 2.0 * (E - 0.5 * m * u);
    return {m, m * u + p, u * (E + p)};
}

double wave_speed(double rho, double m, double E)
{
    const double u = m / rho;
    const double p = 2.0 * (E - 0.5 * m * u);
    return std::abs(u) + std::sqrt(3.0 * std::max(p, 0.0) / rho);
}

}  // namespace

EulerResult euler_solver_1d(const MomentField& ic, const Grid1D& x, double t_end,
                            const std::vector<double>& save_times, const EulerConfig& cfg)
{
    const int n = x.n_cells;
    if (ic.rho.size() != n || ic.m.size() != n || ic.E.size() != n)
        throw ConfigError("euler_solver_1d: initial state does not match the grid");
    if (t_end < ic.time) throw ConfigError("euler_solver_1d: t_end before the initial time");
    if (cfg.cfl <= 0.0 || cfg.cfl > 1.0) throw ConfigError("euler_solver_1d: CFL must lie in (0, 1]");
    check_save_times(save_times, ic.time, t_end);

    EulerResult res;
    MomentField s = ic;
    auto refresh_T = [&] {
        for (int i = 0; i < n; ++i) s.T(i) = (2.0 * s.E(i) - sq(s.m(i)) / s.rho(i)) / s.rho(i);
    };
    s.T.resize(n);
    refresh_T();
    require_positive(s, "euler_solver_1d");
    const double dx = x.spacing();

    auto step = [&](double dt) {
        const Eigen::VectorXd r = pad(s.rho, cfg.bc), m = pad(s.m, cfg.bc), E = pad(s.E, cfg.bc);
        Eigen::MatrixXd F(n + 1, 3);
        for (int k = 0; k <= n; ++k) {
            const int l = k + 1, rr = k + 2;
            const EulerFlux fl = physical_flux(r(l), m(l), E(l));
            const EulerFlux fr = physical_flux(r(rr), m(rr), E(rr));
            const double a = std::max(wave_speed(r(l), m(l), E(l)), wave_speed(r(rr), m(rr), E(rr)));
            F(k, 0) = 0.5 * (fl.f0 + fr.f0) - 0.5 * a * (r(rr) - r(l));
            F(k, 1) = 0.5 * (fl.f1 + fr.f1) - 0.5 * a * (m(rr) - m(l));
            F(k, 2) = 0.5 * (fl.f2 + fr.f2) - 0.5 * a * (E(rr) - E(l));
        }
        const double c = dt / dx;
        for (int i = 0; i < n; ++i) {
            s.rho(i) -= c * (F(i + 1, 0) - F(i, 0));
            s.m(i) -= c * (F(i + 1, 1) - F(i, 1));
            s.E(i) -= c * (F(i + 1, 2) - F(i, 2));
        }
        s.time += dt;
        refresh_T();
        require_positive(s, "euler_solver_1d");
    };

    auto advance_to = [&](double target) {
        while (s.time < target - 1e-14 * std::max(1.0, std::abs(target))) {
            double amax = 0.0;
            for (int i = 0; i < n; ++i) amax = std::max(amax, wave_speed(s.rho(i), s.m(i), s.E(i)));
            if (!(amax > 0.0)) amax = 1.0;
            const double dt = std::min(cfg.cfl * dx / amax, target - s.time);
            step(dt);
        }
        s.time = target;
    };

    for (double t : save_times) {
        advance_to(t);
        res.saved.push_back(s);
    }
    advance_to(t_end);
    res.final_state = s;
    return res;
}

MomentField sod_moments(const Grid1D& x, double z)
{
    const int n = x.n_cells;
    MomentField m;
    m.rho.resize(n);
    m.m = Eigen::VectorXd::Zero(n);
    m.E.resize(n);
    m.T.resize(n);
    const double L = x.x_max - x.x_min;
    for (int i = 0; i < n; ++i) {
        const auto st = ic::sod_state(x.center(i) - x.x_min, z, L);
        m.rho(i) = st.rho;
        m.T(i) = st.T;
        m.E(i) = 0.5 * st.rho * st.T;
    }
    return m;
}

}  // namespace kmf
