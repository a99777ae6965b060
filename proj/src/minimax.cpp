#include "sublab/minimax.hpp"
#include "sublab/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace sublab::minimax {

void DiscreteMinimaxSpec::validate() const {
    if (k() < 1) throw InvalidArgument("minimax spec needs at least one level");
    if (q.size() != k() || theta_su.size() != k()) throw InvalidArgument("minimax spec vectors differ in length");
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-10)
        throw InvalidArgument("level probabilities must be nonnegative and sum to 1");
    if ((q.array() <= 0.0).any()) throw InvalidArgument("metric weights must be positive");
    if ((theta_su.array() < 0.0).any() || (theta_su.array() > 1.0).any())
        throw InvalidArgument("surrogate probabilities must lie in [0, 1]");
    if (!(eps >= 0.0)) throw InvalidArgument("box radius must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
}

double DiscreteMinimaxSpec::lower(Eigen::Index x) const { return std::max(0.0, theta_su(x) - eps); }
double DiscreteMinimaxSpec::upper(Eigen::Index x) const { return std::min(1.0, theta_su(x) + eps); }

static double solve_cap(const DiscreteMinimaxSpec& spec, const Vector& theta) {
    const Vector u = (spec.q.array() * theta.array() * (1.0 - theta.array())).sqrt().matrix();
    double reachable = 0.0;
    for (Eigen::Index x = 0; x < spec.k(); ++x)
        if (u(x) > 0.0) reachable += spec.p(x);
    if (reachable <= 0.0) throw InvalidArgument("all level uncertainties are zero");
    if (spec.gamma > reachable + 1e-12)
        throw InvalidArgument("gamma exceeds the mass of levels with positive uncertainty");
    auto mass = [&](double c) {
        double s = 0.0;
        for (Eigen::Index x = 0; x < spec.k(); ++x) s += std::min(c * u(x), spec.p(x));
        return s;
    };
    double hi = 1.0;
    for (Eigen::Index x = 0; x < spec.k(); ++x)
        if (u(x) > 0.0) hi = std::max(hi, spec.p(x) / u(x));
    return bisect_monotone(mass, std::min(spec.gamma, reachable), 0.0, hi, 1e-13);
}

ThetaMM solve_theta_mm(const DiscreteMinimaxSpec& spec) {
    spec.validate();
    ThetaMM out;
    out.c = spec.gamma / (spec.q.array() / 4.0).sqrt().sum();
    out.theta = spec.theta_su;
    for (int it = 1; it <= 50; ++it) {
        // per level: maximize max(sqrt(q v)/c, q v/p) with v = theta(1-theta)
        Vector next(spec.k());
        for (Eigen::Index x = 0; x < spec.k(); ++x) {
            const double lo = spec.lower(x), hi = spec.upper(x);
            auto obj = [&](double t) {
                const double v = t * (1.0 - t);
                const double a = std::sqrt(spec.q(x) * v) / out.c;
                const double b = spec.p(x) > 0.0 ? spec.q(x) * v / spec.p(x) : 0.0;
                return std::max(a, b);
            };
            // objective is increasing in v, so only 1/2 and the box ends compete
            double best = lo, fb = obj(lo);
            for (double t : {std::clamp(0.5, lo, hi), hi}) {
                const double f = obj(t);
                if (f > fb + 1e-15) { best = t; fb = f; }
            }
            next(x) = best;
        }
        const double c_next = solve_cap(spec, next);
        const double change = (next - out.theta).cwiseAbs().maxCoeff() + std::abs(c_next - out.c);
        out.theta = next;
        out.c = c_next;
        out.alternations = it;
        if (change < 1e-10) return out;
    }
    throw NumericalError("minimax alternation did not converge in 50 rounds");
}

MinimaxPi minimax_pi(const DiscreteMinimaxSpec& spec, const Vector& theta) {
    spec.validate();
    if (theta.size() != spec.k()) throw InvalidArgument("theta has the wrong length");
    MinimaxPi out;
    out.c = solve_cap(spec, theta);
    out.pi.resize(spec.k());
    for (Eigen::Index x = 0; x < spec.k(); ++x) {
        const double u = std::sqrt(spec.q(x) * theta(x) * (1.0 - theta(x)));
        out.pi(x) = spec.p(x) > 0.0 ? std::min(out.c * u / spec.p(x), 1.0) : 0.0;
    }
    out.rule = SelectionRule::minimax(spec.gamma, std::vector<double>(out.pi.data(), out.pi.data() + out.pi.size()));
    return out;
}

double rho(const DiscreteMinimaxSpec& spec, const Vector& pi, const Vector& theta) {
    double s = 0.0;
    for (Eigen::Index x = 0; x < spec.k(); ++x) {
        const double v = theta(x) * (1.0 - theta(x)) * spec.q(x);
        if (v <= 0.0 || spec.p(x) <= 0.0) continue;
        if (pi(x) <= 0.0) return INFINITY;
        s += v / (pi(x) * spec.p(x));
    }
    return s;
}

double worst_case_rho(const DiscreteMinimaxSpec& spec, const Vector& pi) {
    Vector t(spec.k());
    for (Eigen::Index x = 0; x < spec.k(); ++x) t(x) = std::clamp(0.5, spec.lower(x), spec.upper(x));
    return rho(spec, pi, t);
}

}  // namespace sublab::minimax
