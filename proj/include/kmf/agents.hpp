#pragma once

#include "kmf/gas.hpp"
#include "kmf/numerics.hpp"
#include "kmf/random_space.hpp"

#include <Eigen/Dense>

#include <limits>
#include <string>
#include <vector>

namespace kmf {

enum class RuleKind { opinion, wealth, generic_linear };
enum class DiffusionKind { sqrt_one_minus_sq, one_minus_sq, linear, constant };
enum class NoiseLaw { two_point, truncated_gaussian };

// Linear binary rule
//   v' = v + eps [(p1 - 1) v + q1 w] + D(v) sqrt(eps) sigma eta
//   w' = w + eps [p2 v + (q2 - 1) w] + D(w) sqrt(eps) sigma eta*
// with unit-variance noise; parameters are already evaluated at a fixed z.
struct InteractionRule {
    RuleKind kind = RuleKind::generic_linear;
    double p1 = 1, q1 = 0, p2 = 0, q2 = 1;
    DiffusionKind diffusion = DiffusionKind::constant;
    double sigma2 = 0.0;
    double epsilon = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    NoiseLaw noise = NoiseLaw::two_point;

    double D(double w) const;
    double D2_prime(double w) const;   // derivative of D(w)^2
    // Mean-field drift int P(v, w) f(v) dv for an ensemble with mean m.
    double drift(double w, double m) const { return 0.5 * ((p1 + q2 - 2.0) * w + (p2 + q1) * m); }
    bool contains(double w) const { return w >= lo && w <= hi; }
};

// Compromise p in [0,1] on V = [-1, 1].
InteractionRule opinion_rule(double p, DiffusionKind d, double sigma2, double epsilon);
// Investment fraction lambda in (0,1) on V = [0, inf), D(w) = w.
InteractionRule wealth_rule(double lambda, double sigma2, double epsilon);

struct Interaction {
    double v, w;
    bool accepted;
};

// Applies the rule; outcomes leaving V are rejected and the states returned unchanged.
Interaction binary_interact(const InteractionRule& rule, double v, double w, double eta, double eta_star);

double draw_noise(NoiseLaw law, Rng& rng);

struct AgentEnsemble {
    Eigen::VectorXd states;
    double time = 0.0;
    long interactions = 0;
    long rejected = 0;
};

// Nanbu loop with interaction frequency 1/epsilon; saved snapshots are taken at `save_times`.
AgentEnsemble dsmc_run(const InteractionRule& rule, AgentEnsemble ens, double dt, double t_end, Rng& rng,
                       const std::vector<double>& save_times = {}, std::vector<AgentEnsemble>* saved = nullptr);

struct FpResult {
    Eigen::VectorXd f;                   // cell averages at t_end
    std::vector<Eigen::VectorXd> saved;  // at requested save times
};

// Implicit Chang-Cooper finite volumes with no-flux boundaries; drift from the current mean.
FpResult fokker_planck_solve(const InteractionRule& rule, const Eigen::Ref<const Eigen::VectorXd>& f0,
                             const Grid1D& grid, double t_end, double dt, const std::vector<double>& save_times = {});

// Right-hand side of the semi-discrete equation, for residual checks.
Eigen::VectorXd fokker_planck_rhs(const InteractionRule& rule, const Eigen::Ref<const Eigen::VectorXd>& f,
                                  const Grid1D& grid);

enum class SteadyKind { beta, maxwellian_like, inverse_gamma };

struct SteadyStateSpec {
    SteadyKind kind = SteadyKind::beta;
    double m = 0.0;        // mean
    double p = 1.0;        // compromise strength (maxwellian-like)
    double sigma2 = 1.0;
    double lambda = 1.0;   // inverse-gamma: mu = 1 + 2 lambda / sigma2

    double mu() const { return 1.0 + 2.0 * lambda / sigma2; }
};

double steady_state_eval(const SteadyStateSpec& spec, double w);

// Cell averages of the steady state over the grid.
Eigen::VectorXd steady_state_cells(const SteadyStateSpec& spec, const Grid1D& grid);

// ---------- named cases ----------

struct AgentPreset {
    std::string name;
    ParamSpace space;
    Grid1D domain;          // V truncated for reconstruction
    double sigma2 = 0.1;
    double epsilon = 0.02;

    InteractionRule rule(double z) const;
    SteadyStateSpec steady(double z) const;
    // Initial density (cell averages) and sampled agents.
    Eigen::VectorXd initial_cells(const Grid1D& grid, double z) const;
    AgentEnsemble initial_ensemble(int N, double z, Rng& rng) const;
};

AgentPreset agent_preset(const std::string& name);
std::vector<std::string> agent_preset_names();

}  // namespace kmf
