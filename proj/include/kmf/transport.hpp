#pragma once

#include "kmf/numerics.hpp"
#include "kmf/random_space.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <string>
#include <vector>

namespace kmf {

using ScalarField = std::function<double(double x)>;

enum class TransportBc { periodic, inflow };

// Isotropic incoming density at x_min (for v > 0) and x_max (for v < 0).
struct InflowData {
    double left = 0.0;
    double right = 0.0;
};

// Even/odd parities on a staggered grid: r at cell centers (nx x nv), j at faces ((nx+1) x nv),
// nodes and weights of the positive half of a symmetric velocity rule (weights sum to one).
struct ParityState {
    Grid1D grid;
    Eigen::VectorXd v, w;
    Eigen::MatrixXd r, j;
    double epsilon = 1.0;
    double time = 0.0;

    Eigen::VectorXd density() const { return r * w; }
};

struct TransportConfig {
    double epsilon = 1.0;
    double dt = 0.0;   // 0 selects 0.9 of the stability bound
    TransportBc bc = TransportBc::periodic;
    InflowData inflow;
};

// Largest stable step of the staggered relaxation kernel with parameters b (flux coupling),
// kappa_min (smallest flux damping), v_max and dx.
double parity_stable_dt(double b, double kappa_min, double v_max, double dx);

// Parity state of an initial distribution f(x, v) for v in [-1, 1].
ParityState parity_from_distribution(const Grid1D& grid, int n_velocity, double epsilon,
                                     const std::function<double(double x, double v)>& f);

ParityState transport_parity_solve(const ParityState& ic, const ScalarField& sigma, const TransportConfig& cfg,
                                   double t_end);

// Goldstein-Taylor system in (rho, s): rho at centers, s at faces.
struct GTState {
    Grid1D grid;
    Eigen::VectorXd rho, s;
    double epsilon = 1.0;
    double time = 0.0;
};

GTState gt_solve(const GTState& ic, const ScalarField& sigma, const TransportConfig& cfg, double t_end);

// Scattering coefficient that gives the two-velocity model the diffusion limit of the transport equation.
inline double gt_sigma_from_lte(double sigma_lte) { return 3.0 * sigma_lte; }

// d_t rho = d_x(kappa d_x rho) by the theta-scheme (theta = 1/2: Crank-Nicolson) on cell averages.
// With inflow boundaries the boundary values are Dirichlet data at the boundary faces.
Eigen::VectorXd diffusion_solve(const Eigen::VectorXd& rho0, const Grid1D& grid, const ScalarField& kappa,
                                double t_end, double dt, TransportBc bc = TransportBc::periodic,
                                InflowData boundary = {}, double theta = 0.5);

// ---------- epidemic transport ----------

double incidence(double g, double I, double beta, double kappa, double p);

struct SirParams {
    ScalarField beta;
    double gamma = 0.0;
    double kappa = 0.0;   // incidence saturation
    double p = 1.0;
    std::array<double, 3> lambda{1.0, 1.0, 1.0};
    std::array<double, 3> tau{1.0, 1.0, 1.0};
};

// Compartments S, I, R as parities with the full-range densities 2 r w and fluxes 2 lambda (v w) j.
// A single node v = 1, w = 1 holds the two-velocity model (r = (X+ + X-)/2, j = lambda (X+ - X-)/2).
struct SirState {
    Grid1D grid;
    Eigen::VectorXd v, w;
    std::array<Eigen::MatrixXd, 3> r, j;
    double time = 0.0;

    Eigen::VectorXd density(int c) const { return 2.0 * (r[c] * w); }
    Eigen::VectorXd flux(int c) const { return 2.0 * (j[c] * v.cwiseProduct(w)); }
    double total() const;
};

struct SirConfig {
    double dt = 0.0;   // 0 selects the largest step allowed by reaction and transport bounds
};

// Kinetic initial state f_c(x, v) = c_norm X(x) e^{-v^2/2} with zero fluxes.
SirState sir_kinetic_initial(const Grid1D& grid, int n_velocity, const std::array<Eigen::VectorXd, 3>& densities);
SirState sir_two_velocity_initial(const Grid1D& grid, const std::array<Eigen::VectorXd, 3>& densities);

SirState sir_kinetic_solve(const SirState& ic, const SirParams& params, double t_end, const SirConfig& cfg = {});
SirState sir_two_velocity_solve(const SirState& ic, const SirParams& params, double t_end,
                                const SirConfig& cfg = {});

// Reaction-diffusion limit with diffusion coefficients D (implicit diffusion, explicit reaction).
std::array<Eigen::VectorXd, 3> sir_diffusion_solve(const Grid1D& grid, const std::array<Eigen::VectorXd, 3>& ic,
                                                   const std::array<double, 3>& D, const SirParams& params,
                                                   double t_end, double dt = 0.0);

// Diffusion coefficients of the kinetic (lambda^2 tau / 3) and two-velocity (lambda^2 tau) models.
std::array<double, 3> sir_kinetic_diffusion(const SirParams& params);
std::array<double, 3> sir_two_velocity_diffusion(const SirParams& params);

// Ratio of integrated incidence to integrated recovery on the cell grid.
double reproduction_number(const Grid1D& grid, const Eigen::VectorXd& S, const Eigen::VectorXd& I,
                           const SirParams& params);

// ---------- named cases ----------

struct TransportPreset {
    std::string name;
    ParamSpace space;
    double epsilon = 1e-2;
    double t_end = 0.02;
    Grid1D hi_grid, lo_grid;
    double hi_dt = 0.0, lo_dt = 0.0;
    TransportBc bc = TransportBc::periodic;
    int n_velocity = 16;

    double sigma(double x, const Eigen::VectorXd& z) const { return eval_sigma_field(x, z); }
    InflowData inflow(const Eigen::VectorXd& z) const;
    ParityState high_initial(const Eigen::VectorXd& z) const;
    GTState low_initial(const Eigen::VectorXd& z) const;
    // Density at t_end on the respective grids.
    Eigen::VectorXd high(const Eigen::VectorXd& z) const;
    Eigen::VectorXd low(const Eigen::VectorXd& z) const;
    // Diffusion limit on the high-fidelity grid.
    Eigen::VectorXd limit(const Eigen::VectorXd& z, double dt) const;
};

TransportPreset transport_preset(const std::string& name);

struct SirPreset {
    std::string name;
    ParamSpace space;
    Grid1D grid;
    double t_end = 5.0;
    double lambda = 1.0;
    double tau_hi = 3.0, tau_lo = 1.0;
    int n_velocity = 8;
    double dt = 0.0;   // shared by both fidelities for every z; 0 leaves the choice to the solvers

    SirParams params(const Eigen::VectorXd& z, double tau) const;
    std::array<Eigen::VectorXd, 3> initial_densities() const;
    // Infected density at t_end.
    Eigen::VectorXd high(const Eigen::VectorXd& z) const;
    Eigen::VectorXd low(const Eigen::VectorXd& z) const;
};

SirPreset sir_preset(const std::string& name);

std::vector<std::string> transport_preset_names();

}  // namespace kmf
