#include "kmf/random_space.hpp"

#include <cmath>
#include <numbers>

namespace kmf {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double sq(double a) { return a * a; }

double gaussian_nd(double rho, double T, double dist2, int d)
{
    return rho / std::pow(2.0 * std::numbers::pi * T, 0.5 * d) * std::exp(-dist2 / (2.0 * T));
}

void require_dim(const Eigen::Ref<const Eigen::VectorXd>& z, int d, const char* what)
{
    if (z.size() < d) throw std::invalid_argument(std::string(what) + ": parameter vector too short");
}

}  // namespace

ParamSpace::ParamSpace(Eigen::VectorXd lo_, Eigen::VectorXd hi_) : lo(std::move(lo_)), hi(std::move(hi_))
{
    if (lo.size() < 1 || lo.size() != hi.size()) throw std::invalid_argument("ParamSpace: bad dimensions");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
        if (!(lo(i) < hi(i))) throw std::invalid_argument("ParamSpace: lo must be below hi");
}

ParamSpace ParamSpace::cube(int d, double a, double b)
{
    return ParamSpace(Eigen::VectorXd::Constant(d, a), Eigen::VectorXd::Constant(d, b));
}

bool ParamSpace::contains(const Eigen::Ref<const Eigen::VectorXd>& z, double tol) const
{
    if (z.size() != lo.size()) return false;
    for (Eigen::Index i = 0; i < z.size(); ++i)
        if (z(i) < lo(i) - tol || z(i) > hi(i) + tol) return false;
    return true;
}

std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) { return splitmix64(splitmix64(master) + index); }

Rng::Rng(std::uint64_t seed) : eng_(seed) {}

double Rng::uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double a, double b) { return a + (b - a) * uniform(); }

double Rng::normal() { return gauss_(eng_); }

std::uint64_t Rng::below(std::uint64_t n)
{
    // Lemire's multiply-shift with rejection keeps the draw unbiased.
    unsigned __int128 m = static_cast<unsigned __int128>(eng_()) * n;
    std::uint64_t l = static_cast<std::uint64_t>(m);
    if (l < n) {
        const std::uint64_t t = -n % n;
        while (l < t) {
            m = static_cast<unsigned __int128>(eng_()) * n;
            l = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

Eigen::MatrixXd sample_uniform(const ParamSpace& space, int K, std::uint64_t seed)
{
    if (K < 1) throw std::invalid_argument("sample_uniform: K must be positive");
    const int d = space.dim();
    Eigen::MatrixXd Z(K, d);
    for (int k = 0; k < K; ++k) {
        Rng rng(substream_seed(seed, static_cast<std::uint64_t>(k)));
        for (int j = 0; j < d; ++j) Z(k, j) = rng.uniform(space.lo(j), space.hi(j));
    }
    return Z;
}

double eval_sigma_field(double x, const Eigen::Ref<const Eigen::VectorXd>& z)
{
    if (z.size() != 5) throw DomainError("eval_sigma_field: expects a 5-dimensional parameter");
    for (Eigen::Index i = 0; i < 5; ++i)
        if (!(std::abs(z(i)) <= 1.0)) throw DomainError("eval_sigma_field: parameter outside [-1,1]^5");
    double s = 1.0;
    for (int i = 1; i <= 5; ++i) s += 4.0 * std::cos(2.0 * std::numbers::pi * i * x) * z(i - 1) / sq(i * std::numbers::pi);
    return s;
}

namespace ic {

SodState sod_state(double x, double z, double length)
{
    if (x < 0.5 * length) return {1.0, 1.0 + sod_s * z};
    return {0.125, 0.8 + sod_s * z};
}

DoubleGaussian transport_double_gaussian(double x, const Eigen::Ref<const Eigen::VectorXd>& z)
{
    require_dim(z, 2, "transport_double_gaussian");
    const double tp = 2.0 * std::numbers::pi;
    DoubleGaussian g{};
    g.rho0 = 1.0;
    g.rho1 = 1.0;
    for (Eigen::Index k = 1; k <= z.size(); ++k) {
        const double kp2 = sq(k * std::numbers::pi);
        g.rho0 += 3.0 * std::sin(tp * k * x) * z(k - 1) / kp2;
        g.rho1 += 2.0 * std::cos(tp * k * x) * z(k - 1) / kp2;
    }
    g.T0 = (5.0 + 2.0 * std::cos(tp * x)) / 20.0 * (1.0 + 0.6 * z(0));
    g.T1 = 0.5 + 0.2 * std::cos(tp * x) * z(1);
    return g;
}

double sir_infected0(double x) { return 0.01 * std::exp(-sq(x - 10.0)); }

}  // namespace ic

std::vector<std::string> kinetic_ic_presets()
{
    return {"two-bumps", "sod", "transport-double-gaussian", "mixed-regime-kl", "sir-gaussian"};
}

double eval_kinetic_ic(const std::string& preset, double x, const Eigen::Ref<const Eigen::VectorXd>& v,
                       const Eigen::Ref<const Eigen::VectorXd>& z)
{
    const int dv = static_cast<int>(v.size());
    if (dv < 1 || dv > 2) throw std::invalid_argument("eval_kinetic_ic: velocity must have 1 or 2 components");
    const double v2 = v.squaredNorm();
    if (preset == "two-bumps") {
        require_dim(z, 1, "two-bumps");
        const double a = 2.0 + ic::two_bumps_s * z(0);
        const double b = 1.0 + ic::two_bumps_s * z(0);
        const double rest = v2 - v(0) * v(0);
        const double e1 = std::exp(-(sq(v(0) - a) + rest) / ic::two_bumps_sigma);
        const double e2 = std::exp(-(sq(v(0) + b) + rest) / ic::two_bumps_sigma);
        return ic::two_bumps_rho0 / (2.0 * std::numbers::pi) * (e1 + e2);
    }
    if (preset == "sod") {
        require_dim(z, 1, "sod");
        const auto s = ic::sod_state(x, z(0));
        return gaussian_nd(s.rho, s.T, v2, dv);
    }
    if (preset == "transport-double-gaussian") {
        const auto g = ic::transport_double_gaussian(x, z);
        return g.rho0 * std::exp(-sq((v(0) - 0.5) / g.T0)) + g.rho1 * std::exp(-sq((v(0) + 0.75) / g.T1));
    }
    if (preset == "mixed-regime-kl") {
        require_dim(z, 14, "mixed-regime-kl");
        const double tp = 2.0 * std::numbers::pi;
        double r = 2.0 + std::sin(tp * x), t = 3.0 + std::cos(tp * x);
        for (int k = 1; k <= 7; ++k) {
            r += 0.2 * std::sin(tp * (k + 1) * x) * z(k - 1) / (2.0 * k);
            t += 0.2 * std::cos(tp * (k + 1) * x) * z(k + 6) / (2.0 * k);
        }
        const double rho = r / 3.0, T = t / 4.0, u = 0.2;
        const double rest = v2 - v(0) * v(0);
        return 0.5 * (gaussian_nd(rho, T, sq(v(0) - u) + rest, dv) + gaussian_nd(rho, T, sq(v(0) + u) + rest, dv));
    }
    if (preset == "sir-gaussian") {
        // unit-mass velocity profile on [-1,1]
        static const double norm = std::sqrt(2.0 * std::numbers::pi) * std::erf(1.0 / std::sqrt(2.0));
        return ic::sir_infected0(x) * std::exp(-0.5 * v(0) * v(0)) / norm;
    }
    throw std::invalid_argument("eval_kinetic_ic: unknown preset '" + preset + "'");
}

}  // namespace kmf
