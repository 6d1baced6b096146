#include "kmf/transport.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <limits>
#include <memory>
#include <cmath>
#include <numbers>
#include <string>

namespace kmf {

namespace {

int step_count(double t_end, double dt)
{
    if (!(t_end >= 0.0)) throw ConfigError("t_end must be non-negative");
    if (t_end == 0.0) return 0;
    return std::max(1, static_cast<int>(std::ceil(t_end / dt - 1e-9)));
}

// Staggered relaxation kernel
//   d_t r + v d_x j = kappa (rho - r),   d_t j + b v d_x r = -kappa j
// with the flux update implicit in its damping and the parity relaxation implicit and cell-wise.
struct Kernel {
    Grid1D grid;
    Eigen::VectorXd v, w;
    double b = 1.0;
    Eigen::VectorXd kc, kf;   // damping at centers and faces
    TransportBc bc = TransportBc::periodic;
    InflowData in;
    bool relax_r = true;

    double stable_dt() const
    {
        return parity_stable_dt(b, kf.minCoeff(), v.cwiseAbs().maxCoeff(), grid.spacing());
    }

    void step(Eigen::MatrixXd& r, Eigen::MatrixXd& j, double dt) const
    {
        const int nx = grid.n_cells, nv = static_cast<int>(v.size());
        const double dx = grid.spacing(), sb = std::sqrt(b);
        for (int k = 0; k < nv; ++k) {
            const double c = dt * b * v(k) / dx;
            for (int f = 1; f < nx; ++f) j(f, k) = (j(f, k) - c * (r(f, k) - r(f - 1, k))) / (1.0 + kf(f) * dt);
            if (bc == TransportBc::periodic) {
                j(0, k) = (j(0, k) - c * (r(0, k) - r(nx - 1, k))) / (1.0 + kf(0) * dt);
                j(nx, k) = j(0, k);
            } else {
                const double robin = 2.0 * dt * sb * v(k) / dx;
                j(0, k) = (j(0, k) - 2.0 * c * (r(0, k) - in.left)) / (1.0 + kf(0) * dt + robin);
                j(nx, k) = (j(nx, k) + 2.0 * c * (r(nx - 1, k) - in.right)) / (1.0 + kf(nx) * dt + robin);
            }
        }
        for (int k = 0; k < nv; ++k) {
            const double c = dt * v(k) / dx;
            for (int i = 0; i < nx; ++i) r(i, k) -= c * (j(i + 1, k) - j(i, k));
        }
        if (!relax_r) return;
        const Eigen::VectorXd rho = r * w;
        for (int i = 0; i < nx; ++i) {
            const double a = kc(i) * dt;
            r.row(i) = ((r.row(i).array() + a * rho(i)) / (1.0 + a)).matrix();
        }
    }
};

Eigen::VectorXd at_centers(const Grid1D& g, const ScalarField& s)
{
    Eigen::VectorXd out(g.n_cells);
    for (int i = 0; i < g.n_cells; ++i) out(i) = s(g.center(i));
    return out;
}

Eigen::VectorXd at_faces(const Grid1D& g, const ScalarField& s)
{
    Eigen::VectorXd out(g.n_cells + 1);
    for (int f = 0; f <= g.n_cells; ++f) out(f) = s(g.face(f));
    return out;
}

double resolve_dt(double requested, double bound, const char* who)
{
    if (requested > 0.0) {
        if (requested > bound * (1.0 + 1e-12))
            throw ConfigError(std::string(who) + ": time step " + std::to_string(requested) +
                              " exceeds the stability bound " + std::to_string(bound));
        return requested;
    }
    return 0.9 * bound;
}

// Theta-scheme for d_t u = d_x(kappa d_x u) with kappa sampled at faces, factored once.
class DiffusionStepper {
public:
    DiffusionStepper(const Grid1D& g, const Eigen::VectorXd& kf, double dt, double theta, TransportBc bc,
                     InflowData boundary)
        : nx_(g.n_cells), dt_(dt), theta_(theta), bnd_(boundary), src_(Eigen::VectorXd::Zero(g.n_cells))
    {
        const double h2 = g.spacing() * g.spacing();
        std::vector<Eigen::Triplet<double>> t;
        auto couple = [&](int a, int c, double k) {
            t.emplace_back(a, a, -k / h2);
            t.emplace_back(a, c, k / h2);
            t.emplace_back(c, c, -k / h2);
            t.emplace_back(c, a, k / h2);
        };
        for (int f = 1; f < nx_; ++f) couple(f - 1, f, kf(f));
        if (bc == TransportBc::periodic) {
            if (nx_ > 1) couple(nx_ - 1, 0, kf(0));
        } else {
            t.emplace_back(0, 0, -2.0 * kf(0) / h2);
            t.emplace_back(nx_ - 1, nx_ - 1, -2.0 * kf(nx_) / h2);
            src_(0) += 2.0 * kf(0) / h2 * bnd_.left;
            src_(nx_ - 1) += 2.0 * kf(nx_) / h2 * bnd_.right;
        }
        L_.resize(nx_, nx_);
        L_.setFromTriplets(t.begin(), t.end());
        Eigen::SparseMatrix<double> A(nx_, nx_);
        A.setIdentity();
        A -= theta_ * dt_ * L_;
        lu_.compute(A);
        if (lu_.info() != Eigen::Success) throw SolverFailure("diffusion_solve: singular implicit system");
    }

    void step(Eigen::VectorXd& u) const
    {
        Eigen::VectorXd rhs = u + (1.0 - theta_) * dt_ * (L_ * u) + dt_ * src_;
        u = lu_.solve(rhs);
        if (!u.allFinite()) throw SolverFailure("diffusion_solve: non-finite solution");
    }

private:
    int nx_;
    double dt_, theta_;
    InflowData bnd_;
    Eigen::VectorXd src_;
    Eigen::SparseMatrix<double> L_;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

}  // namespace

double parity_stable_dt(double b, double kappa_min, double v_max, double dx)
{
    // b v^2 dt^2 <= dx^2 (1 + kappa dt / 2)
    const double B = b * v_max * v_max, A = 0.5 * dx * dx * std::max(kappa_min, 0.0);
    if (B <= 0.0) return std::numeric_limits<double>::infinity();
    return (A + std::sqrt(A * A + 4.0 * B * dx * dx)) / (2.0 * B);
}

ParityState parity_from_distribution(const Grid1D& grid, int n_velocity, double epsilon,
                                     const std::function<double(double, double)>& f)
{
    if (!(epsilon > 0.0)) throw ConfigError("parity_from_distribution: epsilon must be positive");
    const auto q = half_range_gauss_legendre(n_velocity);
    ParityState s;
    s.grid = grid;
    s.v = q.nodes;
    s.w = q.weights;
    s.epsilon = epsilon;
    const int nx = grid.n_cells, nv = static_cast<int>(q.size());
    s.r.resize(nx, nv);
    s.j.resize(nx + 1, nv);
    for (int k = 0; k < nv; ++k) {
        const double vk = q.nodes(k);
        for (int i = 0; i < nx; ++i) s.r(i, k) = 0.5 * (f(grid.center(i), vk) + f(grid.center(i), -vk));
        for (int i = 0; i <= nx; ++i) s.j(i, k) = 0.5 * (f(grid.face(i), vk) - f(grid.face(i), -vk)) / epsilon;
    }
    return s;
}

ParityState transport_parity_solve(const ParityState& ic, const ScalarField& sigma, const TransportConfig& cfg,
                                   double t_end)
{
    if (!(cfg.epsilon > 0.0)) throw ConfigError("transport_parity_solve: epsilon must be positive");
    const int nx = ic.grid.n_cells;
    if (ic.r.rows() != nx || ic.j.rows() != nx + 1 || ic.r.cols() != ic.v.size() || ic.j.cols() != ic.v.size())
        throw ConfigError("transport_parity_solve: state does not match its grid");
    const double e2 = cfg.epsilon * cfg.epsilon;
    Kernel K;
    K.grid = ic.grid;
    K.v = ic.v;
    K.w = ic.w;
    K.b = 1.0 / e2;
    K.kc = at_centers(ic.grid, sigma) / e2;
    K.kf = at_faces(ic.grid, sigma) / e2;
    if (K.kc.minCoeff() <= 0.0 || K.kf.minCoeff() <= 0.0)
        throw ConfigError("transport_parity_solve: scattering coefficient must be positive");
    K.bc = cfg.bc;
    K.in = cfg.inflow;
    const double dt0 = resolve_dt(cfg.dt, K.stable_dt(), "transport_parity_solve");
    const int n = step_count(t_end, dt0);
    ParityState s = ic;
    s.epsilon = cfg.epsilon;
    if (n == 0) return s;
    const double dt = t_end / n;
    for (int it = 0; it < n; ++it) K.step(s.r, s.j, dt);
    s.time = ic.time + t_end;
    if (!s.r.allFinite()) throw SolverFailure("transport_parity_solve: non-finite state");
    return s;
}

GTState gt_solve(const GTState& ic, const ScalarField& sigma, const TransportConfig& cfg, double t_end)
{
    if (!(cfg.epsilon > 0.0)) throw ConfigError("gt_solve: epsilon must be positive");
    const int nx = ic.grid.n_cells;
    if (ic.rho.size() != nx || ic.s.size() != nx + 1) throw ConfigError("gt_solve: state does not match its grid");
    const double e2 = cfg.epsilon * cfg.epsilon;
    Kernel K;
    K.grid = ic.grid;
    K.v = Eigen::VectorXd::Ones(1);
    K.w = Eigen::VectorXd::Ones(1);
    K.b = 1.0 / e2;
    K.kc = at_centers(ic.grid, sigma) / e2;
    K.kf = at_faces(ic.grid, sigma) / e2;
    if (K.kf.minCoeff() < 0.0) throw ConfigError("gt_solve: scattering coefficient must be non-negative");
    K.bc = cfg.bc;
    K.in = cfg.inflow;
    K.relax_r = false;
    const double dt0 = resolve_dt(cfg.dt, K.stable_dt(), "gt_solve");
    const int n = step_count(t_end, dt0);
    GTState s = ic;
    s.epsilon = cfg.epsilon;
    if (n == 0) return s;
    const double dt = t_end / n;
    Eigen::MatrixXd r = ic.rho, j = ic.s;
    for (int it = 0; it < n; ++it) K.step(r, j, dt);
    s.rho = r.col(0);
    s.s = j.col(0);
    s.time = ic.time + t_end;
    if (!s.rho.allFinite()) throw SolverFailure("gt_solve: non-finite state");
    return s;
}

Eigen::VectorXd diffusion_solve(const Eigen::VectorXd& rho0, const Grid1D& grid, const ScalarField& kappa,
                                double t_end, double dt, TransportBc bc, InflowData boundary, double theta)
{
    if (rho0.size() != grid.n_cells) throw ConfigError("diffusion_solve: initial data does not match the grid");
    if (!(dt > 0.0)) throw ConfigError("diffusion_solve: dt must be positive");
    if (theta < 0.5 || theta > 1.0) throw ConfigError("diffusion_solve: theta must lie in [1/2, 1]");
    const Eigen::VectorXd kf = at_faces(grid, kappa);
    if (kf.minCoeff() <= 0.0) throw ConfigError("diffusion_solve: diffusion coefficient must be positive");
    const int n = step_count(t_end, dt);
    Eigen::VectorXd u = rho0;
    if (n == 0) return u;
    DiffusionStepper S(grid, kf, t_end / n, theta, bc, boundary);
    for (int it = 0; it < n; ++it) S.step(u);
    return u;
}

// ---------- epidemic transport ----------

double incidence(double g, double I, double beta, double kappa, double p)
{
    if (I <= 0.0) return 0.0;
    return beta * g * std::pow(I, p) / (1.0 + kappa * I);
}

double SirState::total() const
{
    return grid.spacing() * (density(0).sum() + density(1).sum() + density(2).sum());
}

namespace {

double max_rate(const Grid1D& g, const SirParams& p)
{
    double m = std::abs(p.gamma);
    for (int f = 0; f <= g.n_cells; ++f) m = std::max(m, std::abs(p.beta(g.face(f))));
    for (int i = 0; i < g.n_cells; ++i) m = std::max(m, std::abs(p.beta(g.center(i))));
    return m;
}

double reaction_dt(const Grid1D& g, const SirParams& p)
{
    const double m = max_rate(g, p);
    return m > 0.0 ? 0.1 / m : std::numeric_limits<double>::infinity();
}

void check_params(const SirParams& p)
{
    if (!p.beta) throw ConfigError("SIR: contact rate is not set");
    if (p.gamma < 0.0 || p.kappa < 0.0 || p.p < 1.0) throw ConfigError("SIR: need gamma >= 0, kappa >= 0, p >= 1");
    for (int c = 0; c < 3; ++c) {
        if (!(p.lambda[c] >= 0.0)) throw ConfigError("SIR: speeds must be non-negative");
        if (!(p.tau[c] > 0.0)) throw ConfigError("SIR: relaxation times must be positive");
    }
}

// Explicit Euler on every parity; fluxes carry the speed ratios of the compartments they feed.
void sir_react(SirState& s, const SirParams& p, const Eigen::VectorXd& bc, const Eigen::VectorXd& bf, double dt)
{
    const int nx = s.grid.n_cells, nv = static_cast<int>(s.v.size());
    const Eigen::VectorXd I = s.density(1);
    Eigen::VectorXd If(nx + 1);
    for (int f = 1; f < nx; ++f) If(f) = 0.5 * (I(f - 1) + I(f));
    If(0) = If(nx) = 0.5 * (I(nx - 1) + I(0));
    const double ris = p.lambda[0] > 0.0 ? p.lambda[1] / p.lambda[0] : 0.0;
    const double rri = p.lambda[1] > 0.0 ? p.lambda[2] / p.lambda[1] : 0.0;
    for (int k = 0; k < nv; ++k) {
        for (int i = 0; i < nx; ++i) {
            const double F = incidence(s.r[0](i, k), I(i), bc(i), p.kappa, p.p);
            const double G = p.gamma * s.r[1](i, k);
            s.r[0](i, k) -= dt * F;
            s.r[1](i, k) += dt * (F - G);
            s.r[2](i, k) += dt * G;
        }
        for (int f = 0; f <= nx; ++f) {
            const double F = If(f) > 0.0 ? bf(f) * s.j[0](f, k) * std::pow(If(f), p.p) / (1.0 + p.kappa * If(f)) : 0.0;
            const double G = p.gamma * s.j[1](f, k);
            s.j[0](f, k) -= dt * F;
            s.j[1](f, k) += dt * (ris * F - G);
            s.j[2](f, k) += dt * rri * G;
        }
    }
}

SirState sir_run(const SirState& ic, const SirParams& p, double t_end, const SirConfig& cfg, const char* who)
{
    check_params(p);
    const Grid1D& g = ic.grid;
    const int nx = g.n_cells;
    for (int c = 0; c < 3; ++c)
        if (ic.r[c].rows() != nx || ic.j[c].rows() != nx + 1 || ic.r[c].cols() != ic.v.size())
            throw ConfigError(std::string(who) + ": state does not match its grid");
    std::array<Kernel, 3> K;
    double bound = reaction_dt(g, p);
    for (int c = 0; c < 3; ++c) {
        K[c].grid = g;
        K[c].v = ic.v;
        K[c].w = ic.w;
        K[c].b = p.lambda[c] * p.lambda[c];
        K[c].kc = Eigen::VectorXd::Constant(nx, 1.0 / p.tau[c]);
        K[c].kf = Eigen::VectorXd::Constant(nx + 1, 1.0 / p.tau[c]);
        K[c].relax_r = ic.v.size() > 1;
        bound = std::min(bound, K[c].stable_dt() / 0.9);
    }
    double dt0;
    if (cfg.dt > 0.0) {
        if (cfg.dt > bound * (1.0 + 1e-12))
            throw ConfigError(std::string(who) + ": time step exceeds the reaction or transport bound " +
                              std::to_string(bound));
        dt0 = cfg.dt;
    } else {
        dt0 = 0.9 * bound;
    }
    SirState s = ic;
    const int n = step_count(t_end, dt0);
    if (n == 0) return s;
    const double dt = t_end / n;
    const Eigen::VectorXd bc = at_centers(g, p.beta), bf = at_faces(g, p.beta);
    for (int it = 0; it < n; ++it) {
        sir_react(s, p, bc, bf, dt);
        for (int c = 0; c < 3; ++c) K[c].step(s.r[c], s.j[c], dt);
        for (int c = 0; c < 3; ++c) {
            const double m = s.density(c).minCoeff();
            if (!(m >= -1e-12))
                throw SolverFailure(std::string(who) + ": negative density " + std::to_string(m) + " at t = " +
                                    std::to_string(ic.time + (it + 1) * dt));
        }
    }
    s.time = ic.time + t_end;
    return s;
}

}  // namespace

SirState sir_kinetic_initial(const Grid1D& grid, int n_velocity, const std::array<Eigen::VectorXd, 3>& densities)
{
    const auto q = half_range_gauss_legendre(n_velocity);
    SirState s;
    s.grid = grid;
    s.v = q.nodes;
    s.w = q.weights;
    const Eigen::ArrayXd shape = (-0.5 * q.nodes.array().square()).exp();
    const double c = 1.0 / (2.0 * (q.weights.array() * shape).sum());
    for (int k = 0; k < 3; ++k) {
        if (densities[k].size() != grid.n_cells) throw ConfigError("sir_kinetic_initial: density size mismatch");
        s.r[k] = c * densities[k] * shape.matrix().transpose();
        s.j[k] = Eigen::MatrixXd::Zero(grid.n_cells + 1, q.size());
    }
    return s;
}

SirState sir_two_velocity_initial(const Grid1D& grid, const std::array<Eigen::VectorXd, 3>& densities)
{
    SirState s;
    s.grid = grid;
    s.v = Eigen::VectorXd::Ones(1);
    s.w = Eigen::VectorXd::Ones(1);
    for (int k = 0; k < 3; ++k) {
        if (densities[k].size() != grid.n_cells) throw ConfigError("sir_two_velocity_initial: density size mismatch");
        s.r[k] = 0.5 * densities[k];
        s.j[k] = Eigen::MatrixXd::Zero(grid.n_cells + 1, 1);
    }
    return s;
}

SirState sir_kinetic_solve(const SirState& ic, const SirParams& params, double t_end, const SirConfig& cfg)
{
    if (ic.v.size() < 2) throw ConfigError("sir_kinetic_solve: needs a velocity rule with at least two nodes");
    return sir_run(ic, params, t_end, cfg, "sir_kinetic_solve");
}

SirState sir_two_velocity_solve(const SirState& ic, const SirParams& params, double t_end, const SirConfig& cfg)
{
    if (ic.v.size() != 1 || ic.v(0) != 1.0 || ic.w(0) != 1.0)
        throw ConfigError("sir_two_velocity_solve: expects the single node v = 1");
    return sir_run(ic, params, t_end, cfg, "sir_two_velocity_solve");
}

std::array<double, 3> sir_kinetic_diffusion(const SirParams& p)
{
    std::array<double, 3> D{};
    for (int c = 0; c < 3; ++c) D[c] = p.lambda[c] * p.lambda[c] * p.tau[c] / 3.0;
    return D;
}

std::array<double, 3> sir_two_velocity_diffusion(const SirParams& p)
{
    std::array<double, 3> D{};
    for (int c = 0; c < 3; ++c) D[c] = p.lambda[c] * p.lambda[c] * p.tau[c];
    return D;
}

std::array<Eigen::VectorXd, 3> sir_diffusion_solve(const Grid1D& grid, const std::array<Eigen::VectorXd, 3>& ic,
                                                   const std::array<double, 3>& D, const SirParams& params,
                                                   double t_end, double dt)
{
    if (!params.beta) throw ConfigError("sir_diffusion_solve: contact rate is not set");
    for (int c = 0; c < 3; ++c) {
        if (D[c] < 0.0) throw ConfigError("sir_diffusion_solve: diffusion coefficients must be non-negative");
        if (ic[c].size() != grid.n_cells) throw ConfigError("sir_diffusion_solve: density size mismatch");
    }
    const double bound = reaction_dt(grid, params);
    if (dt <= 0.0) dt = bound;
    else if (dt > bound * (1.0 + 1e-12)) throw ConfigError("sir_diffusion_solve: time step exceeds 0.1 / max rate");
    std::array<Eigen::VectorXd, 3> u = ic;
    const int n = step_count(t_end, dt);
    if (n == 0) return u;
    dt = t_end / n;
    std::vector<std::unique_ptr<DiffusionStepper>> S(3);
    for (int c = 0; c < 3; ++c)
        if (D[c] > 0.0)
            S[c] = std::make_unique<DiffusionStepper>(grid, Eigen::VectorXd::Constant(grid.n_cells + 1, D[c]), dt,
                                                      0.5, TransportBc::periodic, InflowData{});
    const Eigen::VectorXd beta = at_centers(grid, params.beta);
    for (int it = 0; it < n; ++it) {
        for (int i = 0; i < grid.n_cells; ++i) {
            const double F = incidence(u[0](i), u[1](i), beta(i), params.kappa, params.p);
            const double G = params.gamma * u[1](i);
            u[0](i) -= dt * F;
            u[1](i) += dt * (F - G);
            u[2](i) += dt * G;
        }
        for (int c = 0; c < 3; ++c)
            if (S[c]) S[c]->step(u[c]);
    }
    return u;
}

double reproduction_number(const Grid1D& grid, const Eigen::VectorXd& S, const Eigen::VectorXd& I,
                           const SirParams& params)
{
    double num = 0.0, den = 0.0;
    for (int i = 0; i < grid.n_cells; ++i) {
        const double x = grid.center(i);
        num += incidence(S(i), I(i), params.beta(x), params.kappa, params.p);
        den += params.gamma * I(i);
    }
    if (!(den > 0.0)) throw DegenerateState("reproduction_number: integrated recovery is zero");
    return num / den;
}

// ---------- named cases ----------

namespace {

double step_average(const Grid1D& g, int i, double left_value)
{
    const double a = g.face(i), b = g.face(i + 1);
    const double left_part = std::clamp((0.5 - a) / (b - a), 0.0, 1.0);
    return left_value * left_part;
}

}  // namespace

InflowData TransportPreset::inflow(const Eigen::VectorXd& z) const
{
    if (bc == TransportBc::periodic) return {};
    return {1.0 + 0.4 * z(0), 0.0};
}

ParityState TransportPreset::high_initial(const Eigen::VectorXd& z) const
{
    if (name == "transport-KL")
        return parity_from_distribution(hi_grid, n_velocity, epsilon, [&z](double x, double v) {
            const auto g = ic::transport_double_gaussian(x, z);
            return g.rho0 * std::exp(-std::pow((v - 0.5) / g.T0, 2)) +
                   g.rho1 * std::exp(-std::pow((v + 0.75) / g.T1, 2));
        });
    ParityState s = parity_from_distribution(hi_grid, n_velocity, epsilon, [](double, double) { return 0.0; });
    const double left = 1.0 + 0.4 * z(0);
    for (int i = 0; i < hi_grid.n_cells; ++i) s.r.row(i).setConstant(step_average(hi_grid, i, left));
    return s;
}

GTState TransportPreset::low_initial(const Eigen::VectorXd& z) const
{
    GTState s;
    s.grid = lo_grid;
    s.epsilon = epsilon;
    s.s = Eigen::VectorXd::Zero(lo_grid.n_cells + 1);
    if (name == "transport-KL") {
        TransportPreset p = *this;
        p.hi_grid = lo_grid;
        const ParityState k = p.high_initial(z);
        s.rho = k.density();
        // kinetic flux scaled by sigma_GT / sigma so both initial layers displace the same mass
        s.s = 3.0 * (k.j * k.v.cwiseProduct(k.w));
    } else {
        s.rho.resize(lo_grid.n_cells);
        const double left = 1.0 + 0.4 * z(0);
        for (int i = 0; i < lo_grid.n_cells; ++i) s.rho(i) = step_average(lo_grid, i, left);
    }
    return s;
}

Eigen::VectorXd TransportPreset::high(const Eigen::VectorXd& z) const
{
    TransportConfig cfg{epsilon, hi_dt, bc, inflow(z)};
    return transport_parity_solve(high_initial(z), [&](double x) { return sigma(x, z); }, cfg, t_end).density();
}

Eigen::VectorXd TransportPreset::low(const Eigen::VectorXd& z) const
{
    TransportConfig cfg{epsilon, lo_dt, bc, inflow(z)};
    return gt_solve(low_initial(z), [&](double x) { return gt_sigma_from_lte(sigma(x, z)); }, cfg, t_end).rho;
}

Eigen::VectorXd TransportPreset::limit(const Eigen::VectorXd& z, double dt) const
{
    return diffusion_solve(high_initial(z).density(), hi_grid, [&](double x) { return 1.0 / (3.0 * sigma(x, z)); },
                           t_end, dt, bc, inflow(z));
}

TransportPreset transport_preset(const std::string& name)
{
    TransportPreset p;
    p.name = name;
    p.space = ParamSpace::cube(5, -1.0, 1.0);
    if (name == "transport-KL") {
        p.epsilon = 1e-2;
        p.t_end = 0.02;
        p.hi_grid = Grid1D(0.0, 1.0, 40);
        p.lo_grid = Grid1D(0.0, 1.0, 25);
        p.hi_dt = 1e-4;
        p.lo_dt = 2e-4;
        p.bc = TransportBc::periodic;
    } else if (name == "transport-riemann") {
        p.epsilon = 1e-8;
        p.t_end = 0.01;
        p.hi_grid = Grid1D(0.0, 1.0, 80);
        p.lo_grid = Grid1D(0.0, 1.0, 25);
        p.hi_dt = 2.5e-5;
        p.lo_dt = 2e-4;
        p.bc = TransportBc::inflow;
    } else {
        throw ConfigError("unknown transport preset '" + name + "'");
    }
    return p;
}

SirParams SirPreset::params(const Eigen::VectorXd& z, double tau) const
{
    if (z.size() != 2) throw DomainError("SIR presets expect a 2-dimensional parameter");
    SirParams p;
    const double b0 = 11.0 * (1.0 + 0.6 * z(0));
    p.beta = [b0](double x) { return b0 * (1.0 + 0.05 * std::sin(13.0 * std::numbers::pi * x / 20.0)); };
    p.gamma = 10.0 * (1.0 + 0.4 * z(1));
    p.kappa = 0.0;
    p.p = 1.0;
    p.lambda = {lambda, lambda, lambda};
    p.tau = {tau, tau, tau};
    return p;
}

std::array<Eigen::VectorXd, 3> SirPreset::initial_densities() const
{
    std::array<Eigen::VectorXd, 3> d;
    d[1].resize(grid.n_cells);
    for (int i = 0; i < grid.n_cells; ++i) d[1](i) = ic::sir_infected0(grid.center(i));
    d[0] = (1.0 - d[1].array()).matrix();
    d[2] = Eigen::VectorXd::Zero(grid.n_cells);
    return d;
}

Eigen::VectorXd SirPreset::high(const Eigen::VectorXd& z) const
{
    return sir_kinetic_solve(sir_kinetic_initial(grid, n_velocity, initial_densities()), params(z, tau_hi), t_end,
                             SirConfig{dt})
        .density(1);
}

Eigen::VectorXd SirPreset::low(const Eigen::VectorXd& z) const
{
    return sir_two_velocity_solve(sir_two_velocity_initial(grid, initial_densities()), params(z, tau_lo), t_end,
                                  SirConfig{dt})
        .density(1);
}

SirPreset sir_preset(const std::string& name)
{
    SirPreset p;
    p.name = name;
    p.space = ParamSpace::cube(2, -1.0, 1.0);
    p.grid = Grid1D(0.0, 20.0, 150);
    p.t_end = 5.0;
    p.n_velocity = 8;
    if (name == "sir-diffusive") {
        p.lambda = std::sqrt(1e5);
        p.tau_hi = 3e-5;
        p.tau_lo = 1e-5;
    } else if (name == "sir-hyperbolic") {
        p.lambda = 1.0;
        p.tau_hi = 3.0;
        p.tau_lo = 1.0;
    } else {
        throw ConfigError("unknown SIR preset '" + name + "'");
    }
    const SirParams worst = p.params(Eigen::Vector2d(1.0, 1.0), p.tau_hi);
    const double v_max = half_range_gauss_legendre(p.n_velocity).nodes.maxCoeff();
    const double b = p.lambda * p.lambda, dx = p.grid.spacing();
    double bound = reaction_dt(p.grid, worst);
    bound = std::min(bound, parity_stable_dt(b, 1.0 / p.tau_hi, v_max, dx));
    bound = std::min(bound, parity_stable_dt(b, 1.0 / p.tau_lo, 1.0, dx));
    p.dt = 0.9 * bound;
    return p;
}

std::vector<std::string> transport_preset_names()
{
    return {"transport-KL", "transport-riemann", "sir-diffusive", "sir-hyperbolic"};
}

}  // namespace kmf
