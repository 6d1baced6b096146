#include "kmf/estimators.hpp"

#include <chrono>

namespace kmf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Eigen::MatrixXd centered(const Eigen::MatrixXd& A)
{
    return A.colwise() - pointwise_mean(A);
}

// Row-wise 1/(K-1) sum of products of two centered matrices.
Eigen::VectorXd row_cov(const Eigen::MatrixXd& Ac, const Eigen::MatrixXd& Bc)
{
    return Ac.cwiseProduct(Bc).rowwise().sum() / static_cast<double>(Ac.cols() - 1);
}

}  // namespace

EstimatorReport mscv_multifidelity(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& controls,
                                   const std::vector<std::optional<Eigen::VectorXd>>& expectations, bool orthogonalize)
{
    const int L = static_cast<int>(controls.size());
    const Eigen::Index M = hi.cols(), n = hi.rows();
    if (L < 1) throw ConfigError("mscv_multifidelity: need at least one control");
    if (M < L + 1) throw InsufficientSamples("mscv_multifidelity: need M >= L + 1 samples");
    if (static_cast<int>(expectations.size()) != L) throw ConfigError("mscv_multifidelity: one expectation slot per control");

    std::vector<Eigen::MatrixXd> shared(L);
    std::vector<Eigen::VectorXd> expect(L);
    EstimatorReport r;
    r.budgets.push_back(static_cast<long>(M));
    for (int h = 0; h < L; ++h) {
        if (controls[h].rows() != n) throw ConfigError("mscv_multifidelity: control size mismatch");
        if (controls[h].cols() < M) throw ConfigError("mscv_multifidelity: control budget below M");
        shared[h] = controls[h].leftCols(M);
        if (expectations[h]) {
            if (expectations[h]->size() != n) throw ConfigError("mscv_multifidelity: expectation size mismatch");
            expect[h] = *expectations[h];
        } else {
            expect[h] = pointwise_mean(controls[h]);
        }
        r.budgets.push_back(static_cast<long>(controls[h].cols()));
    }

    const Eigen::MatrixXd hc = centered(hi);
    const Eigen::VectorXd var_hi = row_cov(hc, hc);
    Eigen::MatrixXd lam = Eigen::MatrixXd::Zero(n, L);
    Eigen::VectorXd correction = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd resid = hi;
    int fallbacks = 0, inactive = 0;

    if (orthogonalize) {
        std::vector<Eigen::MatrixXd> g(L), gc(L);
        std::vector<Eigen::VectorXd> eg(L), vg(L);
        for (int h = 0; h < L; ++h) {
            g[h] = shared[h];
            eg[h] = expect[h];
            const Eigen::MatrixXd fc = centered(shared[h]);
            for (int j = 0; j < h; ++j) {
                const Eigen::VectorXd c = row_cov(gc[j], fc);
                const Eigen::VectorXd vf = row_cov(fc, fc);
                Eigen::VectorXd coef(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    coef(i) = detail::control_active(vg[j](i), vf(i)) ? c(i) / vg[j](i) : 0.0;
                g[h] -= coef.asDiagonal() * g[j];
                eg[h] -= coef.cwiseProduct(eg[j]);
            }
            gc[h] = centered(g[h]);
            vg[h] = row_cov(gc[h], gc[h]);
        }
        for (int h = 0; h < L; ++h) {
            const Eigen::VectorXd c = row_cov(hc, gc[h]);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (detail::control_active(vg[h](i), var_hi(i))) {
                    lam(i, h) = c(i) / vg[h](i);
                } else {
                    ++inactive;
                }
            }
            correction += lam.col(h).cwiseProduct(pointwise_mean(g[h]) - eg[h]);
            resid -= lam.col(h).asDiagonal() * g[h];
        }
        r.diagnostics.push_back("lambda holds weights of the orthogonalized controls");
    } else {
        std::vector<Eigen::MatrixXd> fc(L);
        for (int h = 0; h < L; ++h) fc[h] = centered(shared[h]);
        std::vector<std::vector<Eigen::VectorXd>> C(L, std::vector<Eigen::VectorXd>(L));
        std::vector<Eigen::VectorXd> b(L);
        for (int h = 0; h < L; ++h) {
            b[h] = row_cov(hc, fc[h]);
            for (int k = h; k < L; ++k) C[h][k] = C[k][h] = row_cov(fc[h], fc[k]);
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<int> act;
            for (int h = 0; h < L; ++h) {
                if (detail::control_active(C[h][h](i), var_hi(i))) act.push_back(h);
                else ++inactive;
            }
            const int la = static_cast<int>(act.size());
            if (la == 0) continue;
            Eigen::MatrixXd Ci(la, la);
            Eigen::VectorXd bi(la);
            for (int a = 0; a < la; ++a) {
                bi(a) = b[act[a]](i);
                for (int c = 0; c < la; ++c) Ci(a, c) = C[act[a]][act[c]](i);
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(Ci);
            Eigen::VectorXd x;
            bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
            if (ok) {
                x = ldlt.solve(bi);
                ok = x.allFinite();
            }
            if (ok) {
                for (int a = 0; a < la; ++a) lam(i, act[a]) = x(a);
            } else {
                // best-correlated single control
                int best = act[0];
                double rho = -1;
                for (int a = 0; a < la; ++a) {
                    const double rr = std::abs(bi(a)) / std::sqrt(Ci(a, a));
                    if (rr > rho) {
                        rho = rr;
                        best = act[a];
                    }
                }
                lam(i, best) = b[best](i) / C[best][best](i);
                ++fallbacks;
            }
        }
        for (int h = 0; h < L; ++h) {
            correction += lam.col(h).cwiseProduct(pointwise_mean(shared[h]) - expect[h]);
            resid -= lam.col(h).asDiagonal() * shared[h];
        }
    }

    r.mean = pointwise_mean(hi) - correction;
    r.std = pointwise_std(hi);
    r.residual_std = pointwise_std(resid);
    r.lambda = lam;
    r.inactive_points = inactive;
    if (inactive) r.diagnostics.push_back("controls inactive at " + std::to_string(inactive) + " point-levels");
    if (fallbacks)
        r.diagnostics.push_back("singular covariance, single-control fallback at " + std::to_string(fallbacks) +
                                " points");
    return r;
}

namespace {

void check_hierarchy(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& levels)
{
    if (levels.empty()) throw ConfigError("mscv_hierarchical: need at least one control level");
    Eigen::Index prev = -1;
    for (const auto& l : levels) {
        if (l.rows() != hi.rows()) throw ConfigError("mscv_hierarchical: level size mismatch");
        if (prev >= 0 && l.cols() >= prev) throw ConfigError("mscv_hierarchical: budgets must be strictly decreasing");
        prev = l.cols();
    }
    if (hi.cols() >= prev) throw ConfigError("mscv_hierarchical: budgets must be strictly decreasing");
    if (hi.cols() < 2) throw InsufficientSamples("mscv_hierarchical: need at least 2 high-fidelity samples");
}

}  // namespace

HierarchicalWeights hierarchical_weights(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& levels)
{
    check_hierarchy(hi, levels);
    const int L = static_cast<int>(levels.size());
    const Eigen::Index n = hi.rows();
    // F[h] = f_h for h = 1..L, F[L+1] = f; M[h] = budget M_h for h = 0..L
    std::vector<const Eigen::MatrixXd*> F(L + 2, nullptr);
    std::vector<double> Mb(L + 1);
    for (int h = 1; h <= L; ++h) {
        F[h] = &levels[h - 1];
        Mb[h - 1] = static_cast<double>(levels[h - 1].cols());
    }
    F[L + 1] = &hi;
    Mb[L] = static_cast<double>(hi.cols());

    Eigen::MatrixXd varh(n, L + 1), var_up(n, L + 1), cov_up(n, L + 1), cov_down(n, L + 1);
    for (int h = 1; h <= L; ++h) {
        const Eigen::Index mh = F[h + 1]->cols();
        auto [v, c] = pointwise_var_cov(*F[h + 1], F[h]->leftCols(mh));
        varh.col(h) = v;
        cov_up.col(h) = c;
        var_up.col(h) = pointwise_var_cov(*F[h + 1], *F[h + 1]).first;
        if (h >= 2) {
            const Eigen::Index mprev = F[h]->cols();
            cov_down.col(h) = pointwise_var_cov(*F[h], F[h - 1]->leftCols(mprev)).second;
        }
    }

    HierarchicalWeights w{Eigen::MatrixXd::Zero(n, L), Eigen::MatrixXd::Zero(n, L)};
    for (Eigen::Index i = 0; i < n; ++i) {
        double prod = 1.0;
        for (int h = L; h >= 1; --h) {
            const double lh = detail::control_active(varh(i, h), var_up(i, h)) ? cov_up(i, h) / varh(i, h) : 0.0;
            prod *= lh;
            w.quasi_optimal(i, h - 1) = prod;
        }
        Eigen::VectorXd a = Eigen::VectorXd::Zero(L), b(L), c = Eigen::VectorXd::Zero(L), d = Eigen::VectorXd::Zero(L);
        for (int h = 1; h <= L; ++h) {
            const int r = h - 1;
            if (!(detail::control_active(varh(i, h), var_up(i, h)))) {
                b(r) = 1.0;
                continue;
            }
            const double mu = Mb[h] / (Mb[h - 1] + Mb[h]);
            b(r) = varh(i, h);
            if (h >= 2) a(r) = -mu * cov_down(i, h);
            if (h < L) c(r) = -(1.0 - mu) * cov_up(i, h);
            else d(r) = (1.0 - mu) * cov_up(i, h);
        }
        w.tridiagonal.row(i) = thomas_solve(a, b, c, d).transpose();
    }
    return w;
}

EstimatorReport mscv_hierarchical(const Eigen::MatrixXd& hi, const std::vector<Eigen::MatrixXd>& levels,
                                  bool solve_tridiagonal)
{
    check_hierarchy(hi, levels);
    const int L = static_cast<int>(levels.size());
    if (L == 1) {
        // single level: the exact optimum coincides with the corrected bi-fidelity weight
        EstimatorReport r = mscv_bifidelity(hi, levels[0]);
        r.budgets = {static_cast<long>(levels[0].cols()), static_cast<long>(hi.cols())};
        return r;
    }
    const HierarchicalWeights w = hierarchical_weights(hi, levels);
    const Eigen::MatrixXd& lam = solve_tridiagonal ? w.tridiagonal : w.quasi_optimal;
    EstimatorReport r;
    Eigen::VectorXd est = pointwise_mean(hi);
    for (int h = 1; h <= L; ++h) {
        const Eigen::MatrixXd& Fh = levels[h - 1];
        const Eigen::Index mh = h < L ? levels[h].cols() : hi.cols();
        est -= lam.col(h - 1).cwiseProduct(pointwise_mean(Fh.leftCols(mh)) - pointwise_mean(Fh));
        r.budgets.push_back(static_cast<long>(Fh.cols()));
    }
    r.budgets.push_back(static_cast<long>(hi.cols()));
    r.mean = est;
    r.std = pointwise_std(hi);
    const Eigen::MatrixXd resid = hi - lam.col(L - 1).asDiagonal() * levels[L - 1].leftCols(hi.cols());
    r.residual_std = pointwise_std(resid);
    r.lambda = lam;
    r.diagnostics.push_back(solve_tridiagonal ? "weights from the tridiagonal optimality system"
                                              : "quasi-optimal product weights");
    return r;
}

// ---------- model-level drivers ----------

std::uint64_t model_seed(std::uint64_t seed, long k)
{
    return substream_seed(substream_seed(seed, static_cast<std::uint64_t>(k)), 1);
}

Eigen::MatrixXd evaluate_samples(const SampleModel& model, const Eigen::MatrixXd& Z, std::uint64_t seed, long first,
                                 long count, int threads)
{
    if (count < 0) count = static_cast<long>(Z.rows()) - first;
    if (first < 0 || first + count > Z.rows()) throw std::invalid_argument("evaluate_samples: range outside the draws");
    std::vector<Eigen::VectorXd> out(static_cast<size_t>(count));
    parallel_for(
        static_cast<int>(count),
        [&](int j) {
            const long k = first + j;
            try {
                out[static_cast<size_t>(j)] = model(Z.row(k).transpose(), model_seed(seed, k));
            } catch (const std::exception& e) {
                throw SolverFailure("sample " + std::to_string(k) + ": " + e.what());
            }
        },
        threads);
    if (count == 0) return {};
    const Eigen::Index n = out[0].size();
    Eigen::MatrixXd Q(n, count);
    for (long j = 0; j < count; ++j) {
        if (out[static_cast<size_t>(j)].size() != n)
            throw SolverFailure("sample " + std::to_string(first + j) + ": quantity of interest changed size");
        Q.col(j) = out[static_cast<size_t>(j)];
    }
    return Q;
}

EstimatorReport mc_estimate(const SampleModel& model, const ParamSpace& space, int M, std::uint64_t seed)
{
    if (M < 2) throw InsufficientSamples("mc_estimate: need at least 2 samples");
    const auto t0 = Clock::now();
    const Eigen::MatrixXd Z = sample_uniform(space, M, seed);
    EstimatorReport r = mc_estimate(evaluate_samples(model, Z, seed));
    r.wall_times = {seconds_since(t0)};
    return r;
}

EstimatorReport mscv_bifidelity(const SampleModel& hi, const SampleModel& lo, const ParamSpace& space, int M, int M_ctrl,
                                std::uint64_t seed, const std::optional<Eigen::VectorXd>& offline)
{
    if (M < 2) throw InsufficientSamples("mscv_bifidelity: need at least 2 samples");
    if (M_ctrl < M) throw ConfigError("mscv_bifidelity: control budget M_ctrl must be at least M");
    const Eigen::MatrixXd Z = sample_uniform(space, M_ctrl, seed);
    auto t0 = Clock::now();
    const Eigen::MatrixXd qh = evaluate_samples(hi, Z, seed, 0, M);
    const double th = seconds_since(t0);
    t0 = Clock::now();
    const Eigen::MatrixXd ql = evaluate_samples(lo, Z, seed, 0, offline ? M : M_ctrl);
    const double tl = seconds_since(t0);
    EstimatorReport r = mscv_bifidelity(qh, ql, offline);
    r.budgets = {M, offline ? M : M_ctrl};
    r.wall_times = {th, tl};
    return r;
}

EstimatorReport mscv_multifidelity(const SampleModel& hi, const std::vector<ControlVariate>& controls,
                                   const ParamSpace& space, int M, std::uint64_t seed, bool orthogonalize)
{
    int K = M;
    for (const auto& c : controls) {
        if (c.budget < M) throw ConfigError("mscv_multifidelity: control budget below M");
        K = std::max(K, c.budget);
    }
    const Eigen::MatrixXd Z = sample_uniform(space, K, seed);
    std::vector<double> times;
    auto t0 = Clock::now();
    const Eigen::MatrixXd qh = evaluate_samples(hi, Z, seed, 0, M);
    times.push_back(seconds_since(t0));
    std::vector<Eigen::MatrixXd> qc;
    std::vector<std::optional<Eigen::VectorXd>> ex;
    for (const auto& c : controls) {
        t0 = Clock::now();
        qc.push_back(evaluate_samples(c.model, Z, seed, 0, c.budget));
        times.push_back(seconds_since(t0));
        ex.push_back(c.expectation);
    }
    EstimatorReport r = mscv_multifidelity(qh, qc, ex, orthogonalize);
    r.wall_times = times;
    return r;
}

EstimatorReport mscv_hierarchical(const SampleModel& hi, const std::vector<SampleModel>& controls,
                                  const std::vector<int>& budgets, const ParamSpace& space, std::uint64_t seed,
                                  bool solve_tridiagonal)
{
    const int L = static_cast<int>(controls.size());
    if (static_cast<int>(budgets.size()) != L + 1) throw ConfigError("mscv_hierarchical: need L + 1 budgets");
    for (int h = 1; h <= L; ++h)
        if (budgets[h] >= budgets[h - 1]) throw ConfigError("mscv_hierarchical: budgets must be strictly decreasing");
    const Eigen::MatrixXd Z = sample_uniform(space, budgets[0], seed);
    std::vector<Eigen::MatrixXd> levels;
    std::vector<double> times;
    for (int h = 0; h < L; ++h) {
        const auto t0 = Clock::now();
        levels.push_back(evaluate_samples(controls[h], Z, seed, 0, budgets[h]));
        times.push_back(seconds_since(t0));
    }
    const auto t0 = Clock::now();
    const Eigen::MatrixXd qh = evaluate_samples(hi, Z, seed, 0, budgets[L]);
    times.push_back(seconds_since(t0));
    EstimatorReport r = mscv_hierarchical(qh, levels, solve_tridiagonal);
    r.wall_times = times;
    return r;
}

Eigen::VectorXd collocation_expectation(const SampleModel& model, const ParamSpace& space, int n_nodes, int threads)
{
    const int d = space.dim();
    const auto q = gauss_legendre(n_nodes);
    long total = 1;
    for (int j = 0; j < d; ++j) total *= n_nodes;
    Eigen::MatrixXd Z(total, d);
    Eigen::VectorXd w(total);
    for (long k = 0; k < total; ++k) {
        long rem = k;
        double wk = 1.0;
        for (int j = 0; j < d; ++j) {
            const int idx = static_cast<int>(rem % n_nodes);
            rem /= n_nodes;
            const double a = space.lo(j), b = space.hi(j);
            Z(k, j) = 0.5 * (a + b) + 0.5 * (b - a) * q.nodes(idx);
            wk *= 0.5 * q.weights(idx);
        }
        w(k) = wk;
    }
    const Eigen::MatrixXd Q = evaluate_samples(model, Z, 0, 0, -1, threads);
    return Q * w;
}

SampleModel dsmc_histogram_model(const AgentPreset& preset, double t_end, int N, const Grid1D& grid)
{
    if (N < 2) throw ConfigError("dsmc_histogram_model: need at least 2 agents");
    return [preset, t_end, N, grid](const Eigen::VectorXd& z, std::uint64_t sample_seed) -> Eigen::VectorXd {
        Rng rng(sample_seed);
        const InteractionRule rule = preset.rule(z(0));
        AgentEnsemble e = preset.initial_ensemble(N, z(0), rng);
        e = dsmc_run(rule, std::move(e), rule.epsilon, t_end, rng);
        return histogram_reconstruct(e.states, grid, OutOfRange::reject).values.transpose();
    };
}

SampleModel mean_field_model(const AgentPreset& preset, MeanFieldControl kind, double t_end, const Grid1D& grid,
                             int fp_refine, double fp_dt)
{
    if (kind == MeanFieldControl::steady_state) {
        return [preset, grid](const Eigen::VectorXd& z, std::uint64_t) -> Eigen::VectorXd {
            return steady_state_cells(preset.steady(z(0)), grid);
        };
    }
    if (fp_refine < 1 || !(fp_dt > 0.0)) throw ConfigError("mean_field_model: invalid refinement or time step");
    return [preset, t_end, grid, fp_refine, fp_dt](const Eigen::VectorXd& z, std::uint64_t) -> Eigen::VectorXd {
        const Grid1D fine(grid.x_min, grid.x_max, grid.n_cells * fp_refine);
        const Eigen::VectorXd f =
            fokker_planck_solve(preset.rule(z(0)), preset.initial_cells(fine, z(0)), fine, t_end, fp_dt).f;
        Eigen::VectorXd c(grid.n_cells);
        for (int i = 0; i < grid.n_cells; ++i) c(i) = f.segment(i * fp_refine, fp_refine).mean();
        return c;
    };
}

MfcvReport mfcv_dsmc(const AgentPreset& preset, const MfcvConfig& cfg, std::uint64_t seed)
{
    if (cfg.M < 2) throw InsufficientSamples("mfcv_dsmc: need at least 2 samples");
    if (cfg.N < 1000) throw ConfigError("mfcv_dsmc: need at least 1000 agents");
    const Grid1D grid = cfg.grid.value_or(preset.domain);
    const SampleModel hi = dsmc_histogram_model(preset, cfg.t_end, cfg.N, grid);
    const SampleModel lo = mean_field_model(preset, cfg.control, cfg.t_end, grid, cfg.fp_refine, cfg.fp_dt);
    const Eigen::MatrixXd Z = sample_uniform(preset.space, cfg.M, seed);
    auto t0 = Clock::now();
    const Eigen::MatrixXd qh = evaluate_samples(hi, Z, seed, 0, cfg.M, cfg.threads);
    const double th = seconds_since(t0);
    t0 = Clock::now();
    const Eigen::MatrixXd ql = evaluate_samples(lo, Z, seed, 0, cfg.M, cfg.threads);
    const Eigen::VectorXd e_lo = collocation_expectation(lo, preset.space, cfg.collocation_nodes, cfg.threads);
    const double tl = seconds_since(t0);
    MfcvReport r;
    static_cast<EstimatorReport&>(r) = mscv_bifidelity(qh, ql, e_lo);
    r.mc_mean = pointwise_mean(qh);
    r.control_expectation = e_lo;
    r.wall_times = {th, tl};
    return r;
}

}  // namespace kmf
