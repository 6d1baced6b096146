#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace kmf {

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct ParamSpace {
    Eigen::VectorXd lo;
    Eigen::VectorXd hi;
    std::string law = "uniform";

    ParamSpace() = default;
    ParamSpace(Eigen::VectorXd lo_, Eigen::VectorXd hi_);
    static ParamSpace cube(int d, double lo, double hi);

    int dim() const { return static_cast<int>(lo.size()); }
    bool contains(const Eigen::Ref<const Eigen::VectorXd>& z, double tol = 1e-12) const;
};

// Seed of the substream owned by sample `index` under `master`.
std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index);

// Per-sample generator; two instances built from the same seed produce identical streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    double uniform();                 // [0, 1)
    double uniform(double a, double b);
    double normal();
    std::uint64_t below(std::uint64_t n);   // uniform integer in [0, n)
    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    std::normal_distribution<double> gauss_;
};

// K x d_z i.i.d. uniform draws; row k depends only on (seed, k).
Eigen::MatrixXd sample_uniform(const ParamSpace& space, int K, std::uint64_t seed);

// Random cross section 1 + 4 sum_i cos(2 pi i x) z_i / (i pi)^2, z in [-1,1]^5.
double eval_sigma_field(double x, const Eigen::Ref<const Eigen::VectorXd>& z);

// Named closed-form initial data; v holds one or two velocity components.
double eval_kinetic_ic(const std::string& preset, double x, const Eigen::Ref<const Eigen::VectorXd>& v,
                       const Eigen::Ref<const Eigen::VectorXd>& z);

std::vector<std::string> kinetic_ic_presets();

namespace ic {

inline constexpr double two_bumps_s = 0.2;
inline constexpr double two_bumps_rho0 = 0.125;
inline constexpr double two_bumps_sigma = 0.5;
inline constexpr double sod_s = 0.25;

// Sod states (rho, T) for a cell left or right of the membrane.
struct SodState {
    double rho;
    double T;
};
SodState sod_state(double x, double z, double length = 1.0);

// Density and temperatures of the double-Gaussian transport datum at x.
struct DoubleGaussian {
    double rho0, T0, rho1, T1;
};
DoubleGaussian transport_double_gaussian(double x, const Eigen::Ref<const Eigen::VectorXd>& z);

// Infected fraction of the epidemic datum on [0, 20].
double sir_infected0(double x);

}  // namespace ic

}  // namespace kmf
