#include "sublab/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <limits>
#include <numeric>
#include <thread>

namespace sublab::sim {

void ExperimentConfig::validate() const {
    if (N < 2 || p < 1) throw InvalidArgument("N must be >= 2 and p >= 1");
    if (replicates < 1) throw InvalidArgument("replicates must be >= 1");
    if (!(kernel.theta0_norm() > 0.0)) throw InvalidArgument("theta0_norm must be positive for simulations");
    if (lambdas.empty()) throw InvalidArgument("at least one ridge lambda is required");
    for (double l : lambdas)
        if (!(l > 0.0)) throw InvalidArgument("ridge lambda must be positive");
    if (gammas.empty() || alphas.empty()) throw InvalidArgument("gamma and alpha grids must be nonempty");
    for (double g : gammas)
        if (!(g > 0.0 && g <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (scheme != SchemeKind::AlphaFamily && scheme != SchemeKind::Random && scheme != SchemeKind::TopkHard &&
        scheme != SchemeKind::TopkEasy)
        throw InvalidArgument("sweeps support random, alpha-family and topk schemes");
    if (surrogate == SurrogateMode::Fitted && n_su < 1) throw InvalidArgument("fitted surrogate needs N_su >= 1");
    if (!(lambda_su > 0.0)) throw InvalidArgument("surrogate lambda must be positive");
    if (holdout < 0) throw InvalidArgument("holdout size must be >= 0");
}

Vector make_theta0(int p, double norm, std::uint64_t seed) {
    Rng rng(seed);
    Vector v(p);
    for (int j = 0; j < p; ++j) v(j) = rng.normal();
    return norm * v / v.norm();
}

Dataset generate_synthetic(int N, const LabelKernel& kernel, const Vector& theta0, Rng& rng) {
    const auto p = theta0.size();
    Matrix X(N, p);
    Vector y(N);
    for (int i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = rng.normal();
        y(i) = kernel.sample(X.row(i).dot(theta0), rng);
    }
    return Dataset(std::move(X), std::move(y));
}

ErmResult fit_erm(const Matrix& X, const Vector& y, const Vector& S, const LossFunction& loss, double lambda,
                  long n_total) {
    if (!(lambda > 0.0)) throw InvalidArgument("fit_erm needs lambda > 0");
    if (S.size() != X.rows() || y.size() != X.rows()) throw InvalidArgument("fit_erm size mismatch");
    const double N = n_total > 0 ? static_cast<double>(n_total) : static_cast<double>(X.rows());
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < S.size(); ++i)
        if (S(i) > 0.0) keep.push_back(i);
    if (keep.empty()) throw InvalidArgument("fit_erm needs at least one selected sample");
    const auto n = static_cast<Eigen::Index>(keep.size()), p = X.cols();
    Matrix Xs(n, p);
    Vector ys(n), ws(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        Xs.row(k) = X.row(keep[k]);
        ys(k) = y(keep[k]);
        ws(k) = S(keep[k]);
    }
    ErmResult r;
    if (loss.kind == LossKind::Square) {
        Matrix A = Xs.transpose() * (Xs.array().colwise() * ws.array()).matrix() / N;
        A.diagonal().array() += lambda;
        const Vector b = Xs.transpose() * ws.cwiseProduct(ys) / N;
        r.theta = A.llt().solve(b);
        r.gradient_norm = (A * r.theta - b).norm();
        r.converged = true;
        r.iterations = 1;
        return r;
    }
    auto objective = [&](const Vector& th) {
        const Vector u = Xs * th;
        double s = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) s += ws(k) * loss.value(u(k), ys(k));
        return s / N + 0.5 * lambda * th.squaredNorm();
    };
    auto gradient = [&](const Vector& th, Vector& c2) {
        const Vector u = Xs * th;
        Vector c1(n);
        c2.resize(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            c1(k) = ws(k) * loss.d1(u(k), ys(k)) / N;
            c2(k) = ws(k) * loss.d2(u(k), ys(k)) / N;
        }
        return Vector(Xs.transpose() * c1 + lambda * th);
    };
    Vector th = Vector::Zero(p), c2;
    Vector g = gradient(th, c2);
    const double tol = 1e-8 * std::max(1.0, g.norm());
    double f = objective(th);
    for (int it = 0; it < 100; ++it) {
        r.iterations = it;
        if (g.norm() <= tol) {
            r.converged = true;
            break;
        }
        Matrix H = Xs.transpose() * (Xs.array().colwise() * c2.array()).matrix();
        H.diagonal().array() += lambda;
        const Vector d = -H.llt().solve(g);
        if (-g.dot(d) <= 1e-10 * (1.0 + std::abs(f))) {
            // objective differences are below rounding here: take the pure Newton step
            th += d;
            f = objective(th);
            g = gradient(th, c2);
            continue;
        }
        double t = 1.0;
        Vector next = th + d;
        double fn = objective(next);
        for (int h = 0; h < 50 && !(fn <= f + 1e-4 * t * g.dot(d)); ++h) {
            t *= 0.5;
            next = th + t * d;
            fn = objective(next);
        }
        th = next;
        f = fn;
        g = gradient(th, c2);
    }
    if (!r.converged && g.norm() <= tol) r.converged = true;
    r.theta = th;
    r.gradient_norm = g.norm();
    return r;
}

SurrogateModel perfect_surrogate(const Vector& theta0) {
    SurrogateModel s;
    s.theta_su = theta0 / theta0.norm();
    s.beta0 = 1.0;
    s.beta_s = 0.0;
    return s;
}

SurrogateModel train_surrogate(const Dataset& fresh, double lambda_su, const Vector* theta0) {
    if (!fresh.labels) throw InvalidArgument("surrogate training needs labels");
    const LossFunction logistic{LossKind::Logistic, TestKind::SameAsTrain};
    const ErmResult fit = fit_erm(fresh.features, *fresh.labels, Vector::Ones(fresh.n()), logistic, lambda_su);
    if (!fit.converged) throw NumericalError("surrogate fit did not converge");
    SurrogateModel s;
    s.theta_su = fit.theta;
    if (theta0) {
        const Decomposition d = surrogate_decompose(fit.theta, *theta0);
        s.beta0 = d.beta0;
        s.beta_s = d.beta_s;
    }
    return s;
}

static void draw_inclusion(SelectionOutcome& out, bool reweight, Rng& rng) {
    const auto N = out.pi.size();
    out.weight.resize(N);
    out.included.assign(static_cast<std::size_t>(N), 0);
    out.realized_n = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
        const double p = out.pi(i);
        out.weight(i) = p > 0.0 ? (reweight ? 1.0 / p : 1.0) : 0.0;
        const bool in = p >= 1.0 || (p > 0.0 && rng.uniform() < p);
        out.included[static_cast<std::size_t>(i)] = in ? 1 : 0;
        out.realized_n += in ? 1 : 0;
    }
}

SelectionOutcome random_pi(long N, double gamma, bool reweight, Rng& rng) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    SelectionOutcome out;
    out.pi = Vector::Constant(N, gamma);
    out.c = gamma;
    out.target_n = std::lround(gamma * static_cast<double>(N));
    draw_inclusion(out, reweight, rng);
    return out;
}

SelectionOutcome alpha_family_pi(const Vector& theta_su, const Matrix& X, double gamma, double alpha,
                                 bool reweight, Rng& rng) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (std::isnan(alpha)) throw InvalidArgument("alpha must not be NaN");
    const auto N = X.rows();
    SelectionOutcome out;
    out.target_n = std::lround(gamma * static_cast<double>(N));
    if (out.target_n > N) throw InvalidArgument("target n exceeds N");
    Vector phi(N);
    const Vector t = X * theta_su;
    for (Eigen::Index i = 0; i < N; ++i) phi(i) = phi2(std::clamp(t(i), -10.0, 10.0));
    if (!(phi.maxCoeff() > 0.0)) throw InvalidArgument("all selection scores are zero");
    out.pi = Vector::Zero(N);
    if (std::isinf(alpha)) {
        // n largest (alpha = +inf) or smallest phi'', ties by index
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(N));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) {
            return alpha > 0 ? phi(a) > phi(b) : phi(a) < phi(b);
        });
        for (long k = 0; k < out.target_n; ++k) out.pi(idx[static_cast<std::size_t>(k)]) = 1.0;
        out.c = INFINITY;
        draw_inclusion(out, reweight, rng);
        return out;
    }
    Vector s(N);
    for (Eigen::Index i = 0; i < N; ++i) s(i) = std::pow(phi(i), alpha);
    const double n = static_cast<double>(out.target_n);
    if (gamma >= 1.0) {
        out.pi.setOnes();
        out.c = 1.0 / s.minCoeff();
    } else if (alpha == 0.0) {
        out.pi.setConstant(gamma);
        out.c = gamma;
    } else {
        auto mass = [&](double logc) { return (std::exp(logc) * s).cwiseMin(1.0).sum(); };
        const double guess = std::log(n / s.sum());
        const double lc = bisect_monotone(mass, n, guess - 5.0, guess + 5.0, 1e-9);
        out.c = std::exp(lc);
        out.pi = (out.c * s).cwiseMin(1.0);
    }
    draw_inclusion(out, reweight, rng);
    return out;
}

Projections project(const Vector& theta_hat, const Vector& theta0, const Vector& theta_su) {
    Projections pr;
    const Vector e0 = theta0 / theta0.norm();
    pr.alpha0 = theta_hat.dot(e0);
    Vector rest = theta_hat - pr.alpha0 * e0;
    const Vector su_perp = theta_su - theta_su.dot(e0) * e0;
    const double ns = su_perp.norm();
    if (ns > 1e-12 * std::max(1.0, theta_su.norm())) {
        const Vector es = su_perp / ns;
        pr.alphas = rest.dot(es);
        rest -= pr.alphas * es;
    }
    pr.alphaperp = rest.norm();
    return pr;
}

TestErrors measure_test_error(const Vector& theta_hat, const LabelKernel& kernel, const Vector& theta0,
                              const LossFunction& loss, long holdout, Rng* rng) {
    const Vector e0 = theta0 / theta0.norm();
    const double a0 = theta_hat.dot(e0);
    const double sigma = (theta_hat - a0 * e0).norm();
    highdim::SaddleSpec spec;
    spec.loss = loss;
    spec.kernel = kernel.with_norm(theta0.norm());
    spec.orders.gaussian = 60;
    const highdim::PredictedErrors pe = highdim::predicted_errors(spec, {a0, 0.0, sigma});
    TestErrors out;
    out.test_error = pe.test_error;
    out.excess = pe.excess_error;
    out.misclassification = pe.misclassification;
    out.holdout_test_error = NAN;
    if (holdout > 0 && rng) {
        // (<theta0,x>, <theta_hat,x>) is exactly bivariate Gaussian for isotropic x
        double s = 0.0;
        const double n0 = theta0.norm();
        for (long i = 0; i < holdout; ++i) {
            const double g0 = rng->normal(), g = rng->normal();
            const double y = kernel.sample(n0 * g0, *rng);
            s += loss.test_value(a0 * g0 + sigma * g, y);
        }
        out.holdout_test_error = s / static_cast<double>(holdout);
        out.holdout_n = holdout;
    }
    return out;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) return NAN;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

template <class F>
static void parallel_for(std::size_t n, int jobs, F&& f) {
    jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) f(i);
        });
    for (auto& t : pool) t.join();
}

namespace {
enum : std::uint64_t { kTheta0 = 1, kData = 11, kSurrogate = 12, kSelect = 13, kHoldout = 14 };
}

int training_rows(const ExperimentConfig& cfg) { return cfg.N - (cfg.lambda_grid ? cfg.N / 10 : 0); }

std::vector<SurrogateModel> replicate_surrogates(const ExperimentConfig& cfg, const Vector& theta0, int jobs,
                                                 std::vector<std::string>& errors) {
    std::vector<SurrogateModel> out(static_cast<std::size_t>(cfg.replicates));
    errors.assign(out.size(), "");
    parallel_for(out.size(), jobs, [&](std::size_t r) {
        if (cfg.surrogate == SurrogateMode::Perfect) {
            out[r] = perfect_surrogate(theta0);
            return;
        }
        Rng rng(Rng::derive(cfg.seed, {kSurrogate, r}));
        const Dataset fresh = generate_synthetic(cfg.n_su, cfg.kernel, theta0, rng);
        try {
            out[r] = train_surrogate(fresh, cfg.lambda_su, &theta0);
        } catch (const std::exception& e) {
            errors[r] = std::string("surrogate fit failed: ") + e.what();
            out[r] = perfect_surrogate(theta0);
        }
    });
    return out;
}

static double effective_alpha(SchemeKind scheme, double a) {
    if (scheme == SchemeKind::TopkHard) return std::numeric_limits<double>::infinity();
    if (scheme == SchemeKind::TopkEasy) return -std::numeric_limits<double>::infinity();
    return a;
}

highdim::SaddleSpec theory_spec(const ExperimentConfig& cfg, double beta0, double beta_s, double delta0,
                                double gamma, double alpha, double lambda) {
    highdim::SaddleSpec spec;
    spec.loss = cfg.loss;
    spec.kernel = cfg.kernel;
    spec.beta0 = beta0;
    spec.beta_s = beta_s;
    spec.delta0 = delta0;
    spec.lambda = lambda;
    spec.orders = cfg.orders;
    const SchemeKind kind = cfg.scheme == SchemeKind::Random ? SchemeKind::Random : SchemeKind::AlphaFamily;
    spec.selection = highdim::calibrate_rule(kind, gamma, effective_alpha(cfg.scheme, alpha), cfg.reweight,
                                             std::hypot(beta0, beta_s));
    return spec;
}

ExperimentResult run_sweep(const ExperimentConfig& cfg, int jobs) {
    cfg.validate();
    const Vector theta0 = make_theta0(cfg.p, cfg.kernel.theta0_norm(), cfg.theta0_seed);
    const int n_train = training_rows(cfg);
    const int n_val = cfg.N - n_train;
    const std::string scheme_name =
        cfg.scheme == SchemeKind::AlphaFamily ? "alpha-family" : to_string(cfg.scheme);

    std::vector<std::string> surrogate_error;
    const std::vector<SurrogateModel> surrogates = replicate_surrogates(cfg, theta0, jobs, surrogate_error);
    ExperimentResult result;
    {
        double b0 = 0.0, bs = 0.0;
        for (const auto& s : surrogates) {
            const Decomposition d = surrogate_decompose(s.theta_su, theta0);
            b0 += d.beta0;
            bs += d.beta_s;
        }
        result.beta0 = b0 / cfg.replicates;
        result.beta_s = bs / cfg.replicates;
    }

    const std::size_t G = cfg.gammas.size(), A = cfg.alphas.size(), R = cfg.replicates;
    const std::size_t nl = cfg.lambdas.size();
    const bool grid = cfg.lambda_grid && nl > 1;
    const std::size_t lam_cells = grid ? 1 : nl;

    auto eff_alpha = [&](double a) { return effective_alpha(cfg.scheme, a); };

    // theory per (gamma, alpha, lambda)
    std::vector<CellSummary> theory(G * A * nl);
    if (cfg.theory) {
        parallel_for(theory.size(), jobs, [&](std::size_t k) {
            const std::size_t li = k % nl, ai = (k / nl) % A, gi = k / (nl * A);
            CellSummary& c = theory[k];
            try {
                const highdim::SaddleSpec spec =
                    theory_spec(cfg, result.beta0, result.beta_s, static_cast<double>(n_train) / cfg.p,
                                cfg.gammas[gi], cfg.alphas[ai], cfg.lambdas[li]);
                const highdim::SaddleSolution sol = highdim::solve_saddle(spec);
                c.theory_test_error = sol.predicted.test_error;
                c.theory_misclass = sol.predicted.misclassification;
                c.theory_alpha = sol.alpha;
            } catch (const std::exception& e) {
                c.theory_status = "saddle-failed";
                c.theory_test_error = c.theory_misclass = NAN;
            }
        });
    } else {
        for (auto& c : theory) c.theory_test_error = c.theory_misclass = NAN;
    }

    // simulation tasks: (gamma, alpha, replicate) x lambda cells
    std::vector<ResultRow> rows(G * A * R * lam_cells);
    parallel_for(G * A * R, jobs, [&](std::size_t k) {
        const std::size_t r = k % R, ai = (k / R) % A, gi = k / (R * A);
        const double gamma = cfg.gammas[gi], alpha = cfg.alphas[ai];
        auto row_at = [&](std::size_t li) -> ResultRow& { return rows[(k * lam_cells) + li]; };
        for (std::size_t li = 0; li < lam_cells; ++li) {
            ResultRow& row = row_at(li);
            row.scheme = scheme_name;
            row.gamma = gamma;
            row.alpha = eff_alpha(alpha);
            row.replicate = static_cast<int>(r);
            row.lambda = cfg.lambdas[li];
        }
        try {
            if (!surrogate_error[r].empty()) throw NumericalError(surrogate_error[r]);
            Rng data_rng(Rng::derive(cfg.seed, {kData, r}));
            const Dataset data = generate_synthetic(cfg.N, cfg.kernel, theta0, data_rng);
            const Matrix Xtr = data.features.bottomRows(n_train);
            const Vector ytr = data.labels->tail(n_train);
            Rng sel_rng(Rng::derive(cfg.seed, {kSelect, gi, ai, r}));
            const SelectionOutcome sel =
                cfg.scheme == SchemeKind::Random
                    ? random_pi(n_train, gamma, cfg.reweight, sel_rng)
                    : alpha_family_pi(surrogates[r].theta_su, Xtr, gamma, eff_alpha(alpha), cfg.reweight,
                                      sel_rng);
            Vector S(n_train);
            for (int i = 0; i < n_train; ++i) S(i) = sel.included[static_cast<std::size_t>(i)] ? sel.weight(i) : 0.0;

            auto fit_and_measure = [&](double lambda, ResultRow& row) {
                const ErmResult fit = fit_erm(Xtr, ytr, S, cfg.loss, lambda, n_train);
                row.realized_n = sel.realized_n;
                if (!fit.converged) {
                    row.status = "erm-failed";
                    return fit;
                }
                Rng hold_rng(Rng::derive(cfg.seed, {kHoldout, gi, ai, r}));
                const TestErrors te = measure_test_error(fit.theta, cfg.kernel, theta0, cfg.loss, cfg.holdout, &hold_rng);
                const Projections pr = project(fit.theta, theta0, surrogates[r].theta_su);
                row.test_error = te.test_error;
                row.misclassification = te.misclassification;
                row.excess = te.excess;
                row.holdout_test_error = te.holdout_test_error;
                row.alpha0_fit = pr.alpha0;
                row.alphas_fit = pr.alphas;
                row.alphaperp_fit = pr.alphaperp;
                return fit;
            };
            if (!grid) {
                for (std::size_t li = 0; li < nl; ++li) fit_and_measure(cfg.lambdas[li], row_at(li));
            } else {
                // choose lambda on the validation rows
                const Matrix Xv = data.features.topRows(n_val);
                const Vector yv = data.labels->head(n_val);
                double best = INFINITY;
                std::size_t best_li = 0;
                for (std::size_t li = 0; li < nl; ++li) {
                    const ErmResult fit = fit_erm(Xtr, ytr, S, cfg.loss, cfg.lambdas[li], n_train);
                    if (!fit.converged) continue;
                    const Vector u = Xv * fit.theta;
                    double err = 0.0;
                    for (int i = 0; i < n_val; ++i) err += cfg.loss.test_value(u(i), yv(i));
                    if (err < best) {
                        best = err;
                        best_li = li;
                    }
                }
                ResultRow& row = row_at(0);
                row.lambda = cfg.lambdas[best_li];
                fit_and_measure(cfg.lambdas[best_li], row);
            }
        } catch (const std::exception&) {
            for (std::size_t li = 0; li < lam_cells; ++li) row_at(li).status = "erm-failed";
        }
    });

    // theory overlay and status
    for (std::size_t k = 0; k < rows.size(); ++k) {
        ResultRow& row = rows[k];
        const std::size_t li = k % lam_cells, task = k / lam_cells;
        const std::size_t ai = (task / R) % A, gi = task / (R * A);
        double th;
        if (grid) {
            th = INFINITY;
            for (std::size_t l = 0; l < nl; ++l) th = std::min(th, theory[(gi * A + ai) * nl + l].theory_test_error);
        } else {
            th = theory[(gi * A + ai) * nl + li].theory_test_error;
        }
        row.theory_test_error = th;
        if (row.status == "ok" && cfg.theory && !std::isfinite(th)) row.status = "saddle-failed";
    }

    // per-cell aggregates
    for (std::size_t gi = 0; gi < G; ++gi)
        for (std::size_t ai = 0; ai < A; ++ai)
            for (std::size_t li = 0; li < lam_cells; ++li) {
                CellSummary c = theory[(gi * A + ai) * nl + li];
                if (grid) {
                    std::size_t best = 0;
                    for (std::size_t l = 1; l < nl; ++l)
                        if (theory[(gi * A + ai) * nl + l].theory_test_error <
                            theory[(gi * A + ai) * nl + best].theory_test_error)
                            best = l;
                    c = theory[(gi * A + ai) * nl + best];
                }
                c.scheme = scheme_name;
                c.gamma = cfg.gammas[gi];
                c.alpha = eff_alpha(cfg.alphas[ai]);
                c.lambda = grid ? NAN : cfg.lambdas[li];
                std::vector<double> te, mc;
                for (std::size_t r = 0; r < R; ++r) {
                    const ResultRow& row = rows[(((gi * A + ai) * R) + r) * lam_cells + li];
                    if (row.status == "erm-failed") continue;
                    te.push_back(row.test_error);
                    mc.push_back(row.misclassification);
                }
                c.n_ok = static_cast<int>(te.size());
                c.median_test = median(te);
                c.q25_test = quantile(te, 0.25);
                c.q75_test = quantile(te, 0.75);
                c.median_misclass = median(mc);
                c.q25_misclass = quantile(mc, 0.25);
                c.q75_misclass = quantile(mc, 0.75);
                result.cells.push_back(c);
            }
    result.rows = std::move(rows);
    return result;
}

}  // namespace sublab::sim
