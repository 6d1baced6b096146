#pragma once

#include "kmf/numerics.hpp"
#include "kmf/random_space.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace kmf {

struct MomentSet {
    double rho = 0.0;
    Eigen::Vector2d u = Eigen::Vector2d::Zero();
    double E = 0.0;
    double T = 0.0;
    int dv = 1;

    // T from (rho, u, E) so that a Maxwellian with these moments has temperature T.
    void update_temperature();
};

// Tensor velocity grid with dv identical axes; nodes stored row-wise (first axis slowest).
struct VelocityGrid {
    Grid1D axis;
    int dv = 1;

    VelocityGrid() = default;
    VelocityGrid(Grid1D a, int d);

    int size() const { return dv == 1 ? axis.n_cells : axis.n_cells * axis.n_cells; }
    double cell_volume() const { return dv == 1 ? axis.spacing() : axis.spacing() * axis.spacing(); }
    Eigen::Vector2d node(int k) const;
    double speed_max() const { return std::max(std::abs(axis.x_min), std::abs(axis.x_max)); }
};

double maxwellian(const MomentSet& m, const Eigen::Ref<const Eigen::VectorXd>& v, int dv);

// Discrete (rho, rho u, E) of a distribution sampled on the grid.
MomentSet moments(const Eigen::Ref<const Eigen::VectorXd>& f, const VelocityGrid& grid);

// Maxwellian sampled on the grid; with match=true its discrete moments equal the target ones.
Eigen::VectorXd discrete_maxwellian(const MomentSet& target, const VelocityGrid& grid, bool match = true);

// e^{-nu t} f0 + (1 - e^{-nu t}) f_inf for the space homogeneous BGK equation.
Eigen::VectorXd bgk_homogeneous_exact(const Eigen::Ref<const Eigen::VectorXd>& f0, const VelocityGrid& grid,
                                      double nu, double t);

// Discrete H = sum f log f; values at or below 1e-300 are skipped.
double entropy(const Eigen::Ref<const Eigen::MatrixXd>& f, double cell_volume);

// Stochastic rounding: floor(x) + 1 with probability frac(x).
long sround(double x, Rng& rng);

// One Nanbu step for Maxwell molecules. Rows of `particles` are velocities (2 or 3 components).
// Returns the number of collided pairs.
long dsmc_maxwell_step(Eigen::MatrixXd& particles, double dt, Rng& rng);

// Draws N velocities from the two-bumps datum at parameter z (2D velocity).
Eigen::MatrixXd sample_two_bumps(int N, double z, Rng& rng);

// Continuous moments of the two-bumps datum at z (2D velocity).
MomentSet two_bumps_moments(double z);

// Cell averages over `w` of the v1-marginal of the two-bumps datum.
Eigen::VectorXd two_bumps_marginal_cells(const Grid1D& w, double z);

// Cell averages over `w` of the v1-marginal of a Maxwellian.
Eigen::VectorXd maxwellian_marginal_cells(const MomentSet& m, const Grid1D& w);

// v1-marginal cell averages of the exact homogeneous BGK solution from two-bumps data.
Eigen::VectorXd bgk_exact_marginal_cells(const Grid1D& w, double z, double nu, double t);

// ---------- one-dimensional (x, v) kinetic BGK and Euler ----------

enum class Boundary { periodic, transmissive };

struct CollisionFrequency {
    bool power_law = false;   // nu = C rho T^(1-eta) when true, else nu = C
    double C = 1.0;
    double eta = 1.0;

    double operator()(double rho, double T) const;
};

struct BgkConfig {
    double epsilon = 1.0;
    CollisionFrequency nu;
    bool muscl = false;
    double cfl = 0.9;
    double dt = 0.0;          // 0 selects cfl * dx / v_max
    Boundary bc = Boundary::transmissive;
};

struct MomentField {
    Eigen::VectorXd rho, m, E, T;   // density, momentum, energy, temperature per cell
    double time = 0.0;

    Eigen::VectorXd velocity() const { return m.cwiseQuotient(rho); }
};

struct GasKineticState {
    Grid1D x;
    VelocityGrid v;           // dv = 1
    Eigen::MatrixXd f;        // nx x nv
    double time = 0.0;
};

MomentField moments_field(const GasKineticState& s);

// Kinetic state in local equilibrium with the given moments.
GasKineticState equilibrium_state(const Grid1D& x, const VelocityGrid& v, const MomentField& m);

struct BgkResult {
    GasKineticState final_state;
    std::vector<MomentField> saved;   // one per requested save time
};

BgkResult bgk_solver_1d(const GasKineticState& ic, const BgkConfig& cfg, double t_end,
                        const std::vector<double>& save_times = {});

struct EulerConfig {
    double cfl = 0.9;
    Boundary bc = Boundary::transmissive;
};

struct EulerResult {
    MomentField final_state;
    std::vector<MomentField> saved;
};

// Rusanov finite volumes for the 1D gas with gamma = 3 (p = rho T).
EulerResult euler_solver_1d(const MomentField& ic, const Grid1D& x, double t_end,
                            const std::vector<double>& save_times = {}, const EulerConfig& cfg = {});

// Sod initial data (rho, T) with uncertain temperature at parameter z.
MomentField sod_moments(const Grid1D& x, double z);

}  // namespace kmf
