#include "sublab/lowdim.hpp"
#include "sublab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sublab::lowdim {

Population::Population(Matrix points, Vector weights)
    : points_(std::move(points)), weights_(std::move(weights)) {
    if (points_.rows() < 1 || points_.cols() < 1) throw InvalidArgument("empty population");
    if (weights_.size() != points_.rows()) throw InvalidArgument("population weight count mismatch");
    if ((weights_.array() < 0.0).any()) throw InvalidArgument("population weights must be >= 0");
    const double s = weights_.sum();
    if (!(s > 0.0)) throw InvalidArgument("population weights sum to zero");
    weights_ /= s;
}

Population Population::uniform_1d(double x_max, int m) {
    if (!(x_max > 0.0) || m < 1) throw InvalidArgument("uniform law needs x_max > 0 and m >= 1");
    Matrix pts(2 * m, 1);
    for (int k = 0; k < m; ++k) {
        const double x = x_max * (k + 0.5) / m;
        pts(2 * k, 0) = x;
        pts(2 * k + 1, 0) = -x;
    }
    return Population(pts, Vector::Constant(2 * m, 1.0));
}

Population Population::powerlaw_1d(double exponent, double x_max, int m) {
    if (!(exponent > 1.0) || !(x_max > 1.0) || m < 1)
        throw InvalidArgument("power law needs exponent > 1, x_max > 1, m >= 1");
    const double tail = std::pow(x_max, 1.0 - exponent);
    Matrix pts(2 * m, 1);
    for (int k = 0; k < m; ++k) {
        const double u = (k + 0.5) / m;
        const double x = std::pow(1.0 - u * (1.0 - tail), 1.0 / (1.0 - exponent));
        pts(2 * k, 0) = x;
        pts(2 * k + 1, 0) = -x;
    }
    return Population(pts, Vector::Constant(2 * m, 1.0));
}

static double radical_inverse(std::uint64_t i, int base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
        f /= base;
        r += f * static_cast<double>(i % base);
        i /= base;
    }
    return r;
}

static int nth_prime(int k) {
    static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                                 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97};
    if (k < 25) return primes[k];
    int c = 0, n = 1;
    while (c <= k) {
        ++n;
        bool prime = true;
        for (int d = 2; d * d <= n; ++d)
            if (n % d == 0) { prime = false; break; }
        if (prime) ++c;
    }
    return n;
}

Population Population::gaussian(int p, int n, std::uint64_t seed) {
    if (p < 1 || n < 2) throw InvalidArgument("gaussian population needs p >= 1 and n >= 2");
    const int half = n / 2;
    Rng rng(seed);
    std::vector<double> shift(p);
    for (auto& s : shift) s = rng.uniform();
    Matrix pts(2 * half, p);
    for (int i = 0; i < half; ++i) {
        for (int j = 0; j < p; ++j) {
            double u = radical_inverse(static_cast<std::uint64_t>(i) + 1, nth_prime(j)) + shift[j];
            u -= std::floor(u);
            u = std::clamp(u, 1e-15, 1.0 - 1e-15);
            const double z = normal_quantile(u);
            pts(2 * i, j) = z;
            pts(2 * i + 1, j) = -z;
        }
    }
    return Population(pts, Vector::Constant(2 * half, 1.0));
}

Population Population::empirical(const Matrix& x) {
    return Population(x, Vector::Constant(x.rows(), 1.0));
}

Matrix Population::gram(const Vector& coeff) const {
    const Vector c = weights_.cwiseProduct(coeff);
    const Matrix m = points_.transpose() * (points_.array().colwise() * c.array()).matrix();
    return 0.5 * (m + m.transpose());
}

ConditionalMoments ConditionalMoments::linear_regression(double tau) {
    if (!(tau > 0.0)) throw InvalidArgument("tau must be positive");
    ConditionalMoments m;
    m.family_ = Family::LinearRegression;
    m.tau_ = tau;
    return m;
}

ConditionalMoments ConditionalMoments::glm_logistic(Vector theta_star) {
    ConditionalMoments m;
    m.family_ = Family::GlmLogistic;
    m.theta_star_ = std::move(theta_star);
    return m;
}

ConditionalMoments ConditionalMoments::misspecified_square(const LabelKernel& kernel, Vector theta0) {
    const double n0 = theta0.norm();
    if (!(n0 > 0.0)) throw InvalidArgument("theta0 must be nonzero");
    ConditionalMoments m;
    m.family_ = Family::MisspecifiedSquare;
    m.theta0_ = std::move(theta0);
    m.m1_ = [kernel](double z) { return kernel.conditional_mean(z); };
    m.m2_ = [kernel](double z) { return kernel.conditional_second_moment(z); };
    std::vector<double> bps;
    for (double b : kernel.breakpoints()) bps.push_back(b / n0);
    const QuadratureGrid q = bps.empty() ? gauss_hermite(80) : gaussian_piecewise(bps, 24);
    const double a_star = q.expect([&](double g) { return kernel.conditional_mean(n0 * g) * g; });
    m.theta_star_ = (a_star / n0) * m.theta0_;
    return m;
}

double ConditionalMoments::g(const Eigen::Ref<const Vector>& x) const {
    switch (family_) {
        case Family::LinearRegression: return tau_ * tau_;
        case Family::GlmLogistic: return phi2(theta_star_.dot(x));
        case Family::MisspecifiedSquare: {
            const double z = theta0_.dot(x);
            const double c = theta_star_.dot(x);
            return std::max(0.0, m2_(z) - 2.0 * c * m1_(z) + c * c);
        }
    }
    return 0.0;
}

double ConditionalMoments::h(const Eigen::Ref<const Vector>& x) const {
    if (family_ == Family::GlmLogistic) return phi2(theta_star_.dot(x));
    return 1.0;
}

Vector ConditionalMoments::g_values(const Population& pop) const {
    Vector v(pop.size());
    for (Eigen::Index i = 0; i < pop.size(); ++i) v(i) = g(pop.points().row(i).transpose());
    return v;
}

Vector ConditionalMoments::h_values(const Population& pop) const {
    Vector v(pop.size());
    for (Eigen::Index i = 0; i < pop.size(); ++i) v(i) = h(pop.points().row(i).transpose());
    return v;
}

Matrix population_hessian(const ConditionalMoments& m, const Population& pop) {
    return pop.gram(m.h_values(pop));
}

Matrix population_gradient_cov(const ConditionalMoments& m, const Population& pop) {
    return pop.gram(m.g_values(pop));
}

PointScheme evaluate(const SelectionRule& rule, const Vector& scores) {
    PointScheme s{Vector(scores.size()), Vector(scores.size())};
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        s.pi(i) = rule.pi(scores(i));
        s.w(i) = rule.weight(scores(i));
    }
    return s;
}

double AsymptoticCoefficient::recompute() const {
    const Matrix Hi = inverse_spd(H_S, 1e-10);
    return (ES2 / (ES * ES)) * (G_S * Hi * Q * Hi).trace();
}

AsymptoticCoefficient rho_coefficient(const ConditionalMoments& m, const PointScheme& s,
                                      const EstimationMetric& metric, const Population& pop,
                                      SchemeKind kind) {
    if (s.pi.size() != pop.size() || s.w.size() != pop.size())
        throw InvalidArgument("scheme does not match the population");
    const Vector es_i = s.pi.cwiseProduct(s.w);
    const Vector es2_i = es_i.cwiseProduct(s.w);
    AsymptoticCoefficient r;
    r.kind = kind;
    r.ES = pop.mean(es_i);
    r.ES2 = pop.mean(es2_i);
    if (!(r.ES > 0.0)) throw InvalidArgument("scheme has E S = 0");
    r.gamma = pop.mean(s.pi);
    r.G_S = pop.gram(es2_i.cwiseProduct(m.g_values(pop))) / r.ES2;
    r.H_S = pop.gram(es_i.cwiseProduct(m.h_values(pop))) / r.ES;
    r.Q = metric.Q;
    r.rho = r.recompute();
    return r;
}

AsymptoticCoefficient rho_coefficient(const ConditionalMoments& m, const SelectionRule& rule,
                                      const Vector& scores, const EstimationMetric& metric,
                                      const Population& pop) {
    return rho_coefficient(m, evaluate(rule, scores), metric, pop, rule.kind());
}

Vector evaluate_score(const ScoreFn& f, const Population& pop) {
    Vector v(pop.size());
    for (Eigen::Index i = 0; i < pop.size(); ++i) v(i) = f(pop.points().row(i).transpose());
    return v;
}

ScoreFn unbiased_score(const ConditionalMoments& m, const EstimationMetric& metric, const Matrix& H) {
    const Matrix Hi = inverse_spd(H);
    const Matrix A = Hi * metric.Q * Hi;
    return [m, A](const Eigen::Ref<const Vector>& x) { return m.g(x) * x.dot(A * x); };
}

ScoreFn influence_score(const ConditionalMoments& m, const EstimationMetric& metric, const Matrix& H) {
    auto z = unbiased_score(m, metric, H);
    return [z](const Eigen::Ref<const Vector>& x) { return std::sqrt(std::max(0.0, z(x))); };
}

ScoreFn nonreweight_score(const ConditionalMoments& m, const EstimationMetric& metric,
                          const Matrix& H_pi, const Matrix& G_pi) {
    const Matrix Hi = inverse_spd(H_pi);
    const Matrix A = Hi * metric.Q * Hi;
    const Matrix B0 = A * G_pi * Hi;
    const Matrix B = 0.5 * (B0 + B0.transpose());
    return [m, A, B](const Eigen::Ref<const Vector>& x) {
        return -m.g(x) * x.dot(A * x) + 2.0 * m.h(x) * x.dot(B * x);
    };
}

UnbiasedOptimum optimal_unbiased_pi(const Vector& Z, double gamma, const Population& pop) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (Z.size() != pop.size()) throw InvalidArgument("score does not match the population");
    if ((Z.array() < 0.0).any()) throw InvalidArgument("unbiased score must be nonnegative");
    const Vector rz = Z.cwiseSqrt();
    UnbiasedOptimum out;
    out.rho_rand = pop.mean(Z) / gamma;
    if (gamma == 1.0) {
        out.rule = SelectionRule::random(1.0, true);
        out.scheme = {Vector::Ones(Z.size()), Vector::Ones(Z.size())};
        out.rho_unb = pop.mean(Z);
        return out;
    }
    const double mean_rz = pop.mean(rz);
    if (!(mean_rz > 0.0)) throw NumericalError("unbiased score vanishes on the population");
    auto mass = [&](double c) { return pop.mean((c * rz).cwiseMin(1.0)); };
    const double c = bisect_monotone(mass, gamma, 0.0, 2.0 * gamma / mean_rz, 1e-12);
    out.rule = SelectionRule::unbiased(gamma, c);
    out.scheme = evaluate(out.rule, Z);
    Vector contrib(Z.size());
    for (Eigen::Index i = 0; i < Z.size(); ++i) contrib(i) = std::max(rz(i) / c, Z(i));
    out.rho_unb = pop.mean(contrib);
    return out;
}

static bool tied(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

Threshold top_mass(const Vector& scores, const Vector& weights, double gamma) {
    const auto n = scores.size();
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores(a) > scores(b); });
    Threshold t{-INFINITY, 0.0, Vector::Zero(n)};
    double acc = 0.0;
    std::size_t k = 0;
    while (k < idx.size()) {
        // group of tied scores
        std::size_t e = k;
        double mass = 0.0;
        while (e < idx.size() && tied(scores(idx[e]), scores(idx[k]))) mass += weights(idx[e++]);
        const double need = gamma - acc;
        if (mass < need - 1e-15) {
            for (std::size_t j = k; j < e; ++j) t.pi(idx[j]) = 1.0;
            acc += mass;
            k = e;
            continue;
        }
        const double frac = mass > 0.0 ? std::clamp(need / mass, 0.0, 1.0) : 0.0;
        t.value = scores(idx[k]);
        t.tie_fraction = frac;
        for (std::size_t j = k; j < e; ++j) t.pi(idx[j]) = frac;
        return t;
    }
    return t;
}

NonReweightOptimum solve_nonreweight_fixed_point(const ConditionalMoments& m,
                                                 const EstimationMetric& metric, double gamma,
                                                 const Population& pop, double damping, int max_iter) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    const Vector gv = m.g_values(pop), hv = m.h_values(pop);
    auto moments = [&](const Vector& pi, Matrix& H, Matrix& G) {
        const double e = pop.mean(pi);
        H = pop.gram(pi.cwiseProduct(hv)) / e;
        G = pop.gram(pi.cwiseProduct(gv)) / e;
    };
    NonReweightOptimum out;
    const auto n = pop.size();
    if (gamma >= 1.0) {
        const Vector one = Vector::Ones(n);
        moments(one, out.fixed_point.H_pi, out.fixed_point.G_pi);
        out.rule = SelectionRule::random(1.0, false);
        out.scheme = {one, one};
        out.score = nonreweight_score(m, metric, out.fixed_point.H_pi, out.fixed_point.G_pi);
        out.scores = evaluate_score(out.score, pop);
        out.rho_nr = rho_coefficient(m, out.scheme, metric, pop, SchemeKind::NonreweightOptimal).rho;
        return out;
    }
    Vector pi = Vector::Constant(n, gamma);
    Matrix H, G;
    moments(pi, H, G);
    double residual = INFINITY;
    int it = 0, cycling = 0;
    Vector prev_hard = pi;
    while (it < max_iter) {
        ++it;
        const Vector z = evaluate_score(nonreweight_score(m, metric, H, G), pop);
        const Threshold t = top_mass(z, pop.weights(), gamma);
        pi = (1.0 - damping) * pi + damping * t.pi;
        Matrix Hn, Gn;
        moments(pi, Hn, Gn);
        residual = (Hn - H).norm();
        H = Hn;
        G = Gn;
        if (residual <= 1e-8) break;
        // On atomized laws a few atoms at the threshold can keep swapping in
        // and out.  Accept once only such near-ties move and the rest has settled.
        double band_mass = 0.0, settled = 0.0;
        bool near_ties = true;
        const double band = 1e-4 * std::max(1.0, std::abs(t.value));
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(z(i) - t.value) <= band) {
                band_mass += pop.weights()(i);
            } else {
                if (t.pi(i) != prev_hard(i)) near_ties = false;
                settled = std::max(settled, std::abs(pi(i) - t.pi(i)));
            }
        }
        prev_hard = t.pi;
        cycling = near_ties && band_mass <= 1e-3 * gamma && settled <= 1e-8 ? cycling + 1 : 0;
        if (cycling >= 3) break;
    }
    if (residual > 1e-8 && cycling < 3)
        throw NumericalError("non-reweighting fixed point did not converge (residual " +
                             std::to_string(residual) + ")");
    // harden
    out.score = nonreweight_score(m, metric, H, G);
    out.scores = evaluate_score(out.score, pop);
    const Threshold t = top_mass(out.scores, pop.weights(), gamma);
    out.rule = SelectionRule::nonreweight(gamma, t.value, t.tie_fraction);
    out.scheme = {t.pi, (t.pi.array() > 0.0).cast<double>().matrix()};
    moments(t.pi, out.fixed_point.H_pi, out.fixed_point.G_pi);
    out.fixed_point.threshold = t.value;
    out.fixed_point.tie_fraction = t.tie_fraction;
    out.fixed_point.iterations = it;
    out.fixed_point.residual = residual;
    out.rho_nr = rho_coefficient(m, out.scheme, metric, pop, SchemeKind::NonreweightOptimal).rho;
    return out;
}

ClosedForm1d closed_form_1d(Law1d law, double x_max, double exponent, double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    double e1, e2, r, tail2;
    if (law == Law1d::Uniform) {
        if (!(x_max > 0.0)) throw InvalidArgument("x_max must be positive");
        if (gamma > 0.5) throw InvalidArgument("uniform closed form needs gamma <= 1/2");
        e1 = x_max / 2.0;
        e2 = x_max * x_max / 3.0;
        r = x_max * (1.0 - gamma);
        tail2 = (x_max * x_max * x_max - r * r * r) / (3.0 * x_max);
    } else {
        if (!(exponent > 3.0) || !(x_max > 1.0))
            throw InvalidArgument("power law closed form needs exponent > 3 and x_max > 1");
        const double a = exponent;
        const double C = (a - 1.0) / (1.0 - std::pow(x_max, 1.0 - a));
        e1 = C * (1.0 - std::pow(x_max, 2.0 - a)) / (a - 2.0);
        e2 = C * (1.0 - std::pow(x_max, 3.0 - a)) / (a - 3.0);
        if (gamma > e1 / x_max) throw InvalidArgument("gamma outside the uncapped range of the power law");
        // P(|X| >= r) = gamma
        r = std::pow(gamma * (a - 1.0) / C + std::pow(x_max, 1.0 - a), 1.0 / (1.0 - a));
        tail2 = C * (std::pow(r, 3.0 - a) - std::pow(x_max, 3.0 - a)) / (a - 3.0);
    }
    ClosedForm1d out;
    out.rho_unb = e1 * e1 / (gamma * e2);
    out.rho_nr = e2 / tail2;
    out.ratio = out.rho_nr / out.rho_unb;
    out.limit_ratio = e2 * e2 / (e1 * e1 * x_max * x_max);
    return out;
}

ZQCertificate zq_at_full(const ConditionalMoments& m, const Population& pop, const Matrix& draws) {
    const Matrix H = population_hessian(m, pop);
    const Matrix G = population_gradient_cov(m, pop);
    const EstimationMetric metric(H, MetricKind::Hessian);
    ZQCertificate c;
    c.zq = nonreweight_score(m, metric, H, G);
    c.rho_full = (G * inverse_spd(H)).trace();
    c.n_draws = draws.rows();
    double neg_sum = 0.0;
    for (Eigen::Index i = 0; i < draws.rows(); ++i) {
        const double z = c.zq(draws.row(i).transpose());
        if (z < 0.0) {
            ++c.n_negative;
            neg_sum += z;
        }
    }
    if (c.n_draws > 0) {
        const double f = static_cast<double>(c.n_negative) / c.n_draws;
        c.negative_fraction = f;
        c.std_error = std::sqrt(f * (1.0 - f) / c.n_draws);
        c.certified = f - 3.0 * c.std_error > 0.0;
        c.mean_negative_part = neg_sum / c.n_draws;
    }
    return c;
}

AsymptoticCoefficient greedy_drop_negative(const ConditionalMoments& m, const Population& pop,
                                           double gamma) {
    const Matrix H = population_hessian(m, pop);
    const Matrix G = population_gradient_cov(m, pop);
    const EstimationMetric metric(H, MetricKind::Hessian);
    const Vector z = evaluate_score(nonreweight_score(m, metric, H, G), pop);
    const Threshold t = top_mass(z, pop.weights(), gamma);
    const PointScheme s{t.pi, (t.pi.array() > 0.0).cast<double>().matrix()};
    return rho_coefficient(m, s, metric, pop, SchemeKind::NonreweightOptimal);
}

}  // namespace sublab::lowdim
