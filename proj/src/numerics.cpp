#include "kmf/numerics.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>

namespace kmf {

Grid1D::Grid1D(double lo, double hi, int n) : x_min(lo), x_max(hi), n_cells(n)
{
    if (n < 1) throw std::invalid_argument("Grid1D: n_cells must be positive");
    if (!(hi > lo)) throw std::invalid_argument("Grid1D: x_max must exceed x_min");
}

Eigen::VectorXd Grid1D::cell_centers() const
{
    Eigen::VectorXd c(n_cells);
    for (int i = 0; i < n_cells; ++i) c(i) = center(i);
    return c;
}

int Grid1D::locate(double x) const
{
    if (x < x_min || x > x_max) return -1;
    int i = static_cast<int>(std::floor((x - x_min) / spacing()));
    return std::clamp(i, 0, n_cells - 1);
}

VelocityQuadrature<double> gauss_legendre(int n)
{
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be at least 1");
    VelocityQuadrature<double> q;
    q.nodes.resize(n);
    q.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1;
            dp = n * (x * p1 - p0) / (x * x - 1);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // final derivative at the converged node
        double p0 = 1, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (x * p1 - p0) / (x * x - 1);
        const double w = 2.0 / ((1 - x * x) * dp * dp);
        q.nodes(i) = -x;
        q.nodes(n - 1 - i) = x;
        q.weights(i) = w;
        q.weights(n - 1 - i) = w;
    }
    if (n % 2 == 1) q.nodes(n / 2) = 0.0;
    return q;
}

VelocityQuadrature<double> half_range_gauss_legendre(int n_full)
{
    if (n_full < 2 || n_full % 2) throw std::invalid_argument("half_range_gauss_legendre: need an even rule");
    auto full = gauss_legendre(n_full);
    VelocityQuadrature<double> h;
    h.nodes = full.nodes.tail(n_full / 2);
    h.weights = full.weights.tail(n_full / 2);
    return h;
}

bool Field::same_layout(const Field& o) const
{
    auto same = [](const std::optional<Grid1D>& a, const std::optional<Grid1D>& b) {
        if (a.has_value() != b.has_value()) return false;
        if (!a) return true;
        return a->n_cells == b->n_cells && a->x_min == b->x_min && a->x_max == b->x_max;
    };
    return same(x, o.x) && same(v, o.v) && values.rows() == o.values.rows() && values.cols() == o.values.cols();
}

double weighted_norm_l1_2(const Field& f)
{
    if (!f.v) throw std::invalid_argument("weighted_norm_l1_2: field has no velocity axis");
    const Grid1D& vg = *f.v;
    if (f.values.cols() != vg.n_cells) throw std::invalid_argument("weighted_norm_l1_2: velocity axis mismatch");
    const double dx = f.x ? f.x->spacing() : 1.0;
    Eigen::ArrayXd wv(vg.n_cells);
    for (int j = 0; j < vg.n_cells; ++j) {
        const double a = 1.0 + std::abs(vg.center(j));
        wv(j) = a * a;
    }
    double s = 0;
    for (Eigen::Index i = 0; i < f.values.rows(); ++i) s += (f.values.row(i).array().abs() * wv.transpose()).sum();
    return s * dx * vg.spacing();
}

Field histogram_reconstruct(const Eigen::Ref<const Eigen::VectorXd>& particles, const Grid1D& grid, OutOfRange policy)
{
    if (particles.size() == 0) throw std::invalid_argument("histogram_reconstruct: empty particle set");
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(grid.n_cells);
    Eigen::Index kept = 0;
    const double h = grid.spacing();
    for (Eigen::Index p = 0; p < particles.size(); ++p) {
        const double w = particles(p);
        long i = static_cast<long>(std::floor((w - grid.x_min) / h));
        if (i < 0 || i >= grid.n_cells) {
            if (policy == OutOfRange::reject && (w < grid.x_min || w > grid.x_max)) continue;
            i = std::clamp<long>(i, 0, grid.n_cells - 1);
        }
        counts(i) += 1.0;
        ++kept;
    }
    if (kept == 0) throw std::invalid_argument("histogram_reconstruct: no particle inside the grid");
    Field f;
    f.v = grid;
    f.values = (counts / (static_cast<double>(kept) * h)).transpose();
    f.model = "histogram";
    return f;
}

namespace {
std::atomic<int> g_threads{0};
}

void set_default_threads(int n) { g_threads = std::max(0, n); }

int default_threads()
{
    const int n = g_threads.load();
    if (n > 0) return n;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

void parallel_for(int n, const std::function<void(int)>& body, int threads)
{
    if (n <= 0) return;
    int t = threads > 0 ? threads : default_threads();
    t = std::min(t, n);
    if (t <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    int failed_index = -1;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (failed_index < 0 || i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (int k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace kmf
