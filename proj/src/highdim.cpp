#include "sublab/highdim.hpp"

#include <algorithm>
#include <cmath>

namespace sublab::highdim {

namespace {

constexpr double kClip = 10.0;

struct Env {
    double e, e1, e2, em, e1m, emm;
};

// Moreau envelope of S*L(., y) at z with parameter mu and its derivatives in
// (z, mu).  r = z - v* is the prox residual.
inline Env envelope(const LossFunction& loss, double S, double y, double z, double mu) {
    if (loss.kind == LossKind::Square) {
        if (mu <= 0.0) {
            const double r = z - y;
            return {0.0, 0.0, 0.0, 0.5 * r * r, r, -r * r / S};
        }
        const double k = S + mu;
        const double r = S * (z - y) / k;
        return {0.5 * S * mu / k * (z - y) * (z - y), mu * r, S * mu / k, 0.5 * r * r, S * r / k, -r * r / k};
    }
    if (mu <= 0.0) return {0.0, 0.0, 0.0, INFINITY, 0.0, -INFINITY};
    const ProxResult p = prox_loss(loss, 0.0, y, z, mu / S);
    const double l2 = phi2(p.u);
    const double r = z - p.u;
    const double k = S * l2 + mu;
    return {S * p.value, mu * r, S * l2 * mu / k, 0.5 * r * r, S * l2 * r / k, -r * r / k};
}

// Piecewise even without jumps: the envelope of the logistic loss has
// singularities close to the real axis, which stalls Gauss-Hermite.
QuadratureGrid g0_grid(const std::vector<double>& bps, const QuadratureOrders& o) {
    return gaussian_piecewise(bps, o.panel);
}

std::vector<double> kernel_breakpoints_g(const LabelKernel& k) {
    std::vector<double> out;
    const double n0 = k.theta0_norm();
    if (n0 > 0.0)
        for (double b : k.breakpoints()) out.push_back(b / n0);
    return out;
}

}  // namespace

void SaddleSpec::validate() const {
    if (!(delta0 > 0.0) || !std::isfinite(delta0)) throw InvalidArgument("delta0 must be positive");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("ridge lambda must be positive");
    if (!(beta_s >= 0.0) || !std::isfinite(beta0)) throw InvalidArgument("beta_s must be >= 0");
    if (orders.gaussian < 2 || orders.noise < 2 || orders.panel < 2)
        throw InvalidArgument("quadrature orders must be >= 2");
    switch (selection.kind()) {
        case SchemeKind::Random:
        case SchemeKind::AlphaFamily:
        case SchemeKind::TopkHard:
        case SchemeKind::TopkEasy: break;
        default: throw InvalidArgument("high-dimensional solver supports random, alpha-family and topk rules");
    }
}

double selection_score(const SelectionRule& rule, double t) {
    if (rule.kind() == SchemeKind::Random) return 0.0;
    return phi2(std::clamp(t, -kClip, kClip));
}

static void push_sym(std::vector<double>& out, double s) {
    // phi''(t) = s  <=>  |t| = atanh(sqrt(1 - s))
    if (s > phi2(kClip) && s < 1.0) {
        const double t = std::atanh(std::sqrt(1.0 - s));
        out.push_back(-t);
        out.push_back(t);
    }
}

std::vector<double> selection_breakpoints(const SelectionRule& rule) {
    std::vector<double> out;
    switch (rule.kind()) {
        case SchemeKind::AlphaFamily:
            if (rule.alpha() == 0.0) return out;
            push_sym(out, std::pow(rule.cap(), -1.0 / rule.alpha()));
            break;
        case SchemeKind::TopkHard:
        case SchemeKind::TopkEasy: push_sym(out, rule.threshold()); break;
        default: return out;
    }
    out.push_back(-kClip);
    out.push_back(kClip);
    return out;
}

SelectionRule calibrate_rule(SchemeKind kind, double gamma, double alpha, bool reweight, double beta_norm) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
    if (kind == SchemeKind::AlphaFamily && std::isinf(alpha))
        kind = alpha > 0 ? SchemeKind::TopkHard : SchemeKind::TopkEasy;
    const double b = std::abs(beta_norm);
    // pi = 1 everywhere: every rule is the full sample
    if (gamma >= 1.0) return SelectionRule::random(1.0, reweight);
    switch (kind) {
        case SchemeKind::Random: return SelectionRule::random(gamma, reweight);
        case SchemeKind::TopkHard: {
            if (gamma >= 1.0) return SelectionRule::topk(kind, 1.0, -1.0, 1.0, reweight);
            if (b == 0.0) return SelectionRule::topk(kind, gamma, 1.0, gamma, reweight);
            const double t = b * normal_quantile(0.5 * (1.0 + gamma));
            return SelectionRule::topk(kind, gamma, phi2(std::min(t, kClip)), 0.0, reweight);
        }
        case SchemeKind::TopkEasy: {
            if (gamma >= 1.0) return SelectionRule::topk(kind, 1.0, 2.0, 1.0, reweight);
            if (b == 0.0) return SelectionRule::topk(kind, gamma, 1.0, gamma, reweight);
            const double t = b * normal_quantile(1.0 - 0.5 * gamma);
            return SelectionRule::topk(kind, gamma, phi2(std::min(t, kClip)), 0.0, reweight);
        }
        case SchemeKind::AlphaFamily: {
            if (alpha == 0.0 || b == 0.0) return SelectionRule::alpha_family(gamma, alpha, gamma, reweight);
            if (gamma >= 1.0) {
                const double cap = 2.0 * std::max(1.0, std::pow(phi2(kClip), -alpha));
                return SelectionRule::alpha_family(1.0, alpha, cap, reweight);
            }
            auto mass = [&](double logc) {
                const SelectionRule r = SelectionRule::alpha_family(gamma, alpha, std::exp(logc), reweight);
                std::vector<double> bps;
                for (double t : selection_breakpoints(r)) bps.push_back(t / b);
                const QuadratureGrid q = gaussian_piecewise(bps, 24);
                return q.expect([&](double g) { return r.pi(selection_score(r, b * g)); });
            };
            const double lc = bisect_monotone(mass, gamma, std::log(gamma) - 5.0, std::log(gamma) + 5.0, 1e-14);
            return SelectionRule::alpha_family(gamma, alpha, std::exp(lc), reweight);
        }
        default: throw InvalidArgument("rule kind cannot be calibrated on a Gaussian index");
    }
}

Lagrangian::Lagrangian(const SaddleSpec& spec) : spec_(spec) {
    spec_.validate();
    const SelectionRule& rule = spec_.selection;
    const LabelKernel& kernel = spec_.kernel;
    const double n0 = kernel.theta0_norm();
    reduced_ = spec_.beta_s == 0.0;
    const std::vector<double> tb = selection_breakpoints(rule);
    std::vector<double> bps = kernel_breakpoints_g(kernel);
    if (reduced_ && spec_.beta0 != 0.0)
        for (double t : tb) bps.push_back(t / spec_.beta0);
    const QuadratureGrid q0 = g0_grid(bps, spec_.orders);
    QuadratureGrid noise;
    if (kernel.kind() == KernelKind::GaussianNoise) noise = gauss_hermite(spec_.orders.noise);
    // full mode integrates a 2-d grid per G0 node; half orders there are
    // still converged to ~1e-9 on the misspecified kernels
    const int inner = reduced_ ? spec_.orders.gaussian : std::max(8, spec_.orders.gaussian / 2);
    const int inner_panel = reduced_ ? spec_.orders.panel : std::max(4, 2 * spec_.orders.panel / 3);
    const QuadratureGrid hs = gauss_hermite(inner);
    gp_ = gauss_hermite(inner);

    LabelAtoms atoms;
    gamma_ = 0.0;
    auto push = [&](double g0, double gs, double w) {
        const double t = spec_.beta0 * g0 + spec_.beta_s * gs;
        const double sc = selection_score(rule, t);
        const double pi = rule.pi(sc);
        gamma_ += w * pi;
        if (pi <= 0.0) return;
        const double S = rule.weight(sc);
        for (std::size_t a = 0; a < atoms.y.size(); ++a) {
            g0_.push_back(g0);
            gs_.push_back(gs);
            y_.push_back(atoms.y[a]);
            mass_.push_back(w * pi * atoms.prob[a]);
            s_.push_back(S);
        }
    };
    for (int i = 0; i < q0.order(); ++i) {
        const double g0 = q0.nodes[i];
        kernel.atoms(n0 * g0, noise.nodes, noise.weights, atoms);
        if (reduced_) {
            push(g0, 0.0, q0.weights[i]);
            continue;
        }
        if (tb.empty()) {
            for (int j = 0; j < hs.order(); ++j) push(g0, hs.nodes[j], q0.weights[i] * hs.weights[j]);
        } else {
            std::vector<double> sb;
            for (double t : tb) sb.push_back((t - spec_.beta0 * g0) / spec_.beta_s);
            const QuadratureGrid qs = gaussian_piecewise(sb, inner_panel);
            for (int j = 0; j < qs.order(); ++j) push(g0, qs.nodes[j], q0.weights[i] * qs.weights[j]);
        }
    }
}

LagrangianEval Lagrangian::eval(const Alpha& a, double mu) const {
    if (mu < 0.0) throw InvalidArgument("mu must be >= 0");
    if (a[2] < 0.0) throw InvalidArgument("alpha_perp must be >= 0");
    const LossFunction& loss = spec_.loss;
    LagrangianEval out;
    double T = 0.0, Tm = 0.0, Tmm = 0.0;
    Eigen::Vector3d g = Eigen::Vector3d::Zero(), gm = Eigen::Vector3d::Zero();
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    const std::size_t n = mass_.size();
    const int m = gp_.order();
    if (reduced_) {
        const double sigma = std::hypot(a[1], a[2]);
        const double u1 = sigma > 0.0 ? a[1] / sigma : 0.0;
        const double u2 = sigma > 0.0 ? a[2] / sigma : 1.0;
        double d0 = 0, da = 0, h00 = 0, h0a = 0, haa = 0, hbb = 0, m0 = 0, ma = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g0 = g0_[i];
            for (int j = 0; j < m; ++j) {
                const double ga = gp_.nodes[j];
                const double w = mass_[i] * gp_.weights[j];
                const Env e = envelope(loss, s_[i], y_[i], a[0] * g0 + sigma * ga, mu);
                T += w * e.e;
                d0 += w * e.e1 * g0;
                da += w * e.e1 * ga;
                h00 += w * e.e2 * g0 * g0;
                h0a += w * e.e2 * g0 * ga;
                haa += w * e.e2 * ga * ga;
                hbb += w * e.e2;
                Tm += w * e.em;
                m0 += w * e.e1m * g0;
                ma += w * e.e1m * ga;
                Tmm += w * e.emm;
            }
        }
        const double u[2] = {u1, u2}, v[2] = {-u2, u1};
        g << d0, u1 * da, u2 * da;
        gm << m0, u1 * ma, u2 * ma;
        h(0, 0) = h00;
        for (int i = 0; i < 2; ++i) {
            h(0, i + 1) = h(i + 1, 0) = u[i] * h0a;
            for (int j = 0; j < 2; ++j) h(i + 1, j + 1) = u[i] * u[j] * haa + v[i] * v[j] * hbb;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (int j = 0; j < m; ++j) {
                const Eigen::Vector3d G(g0_[i], gs_[i], gp_.nodes[j]);
                const double w = mass_[i] * gp_.weights[j];
                const Env e = envelope(loss, s_[i], y_[i], a[0] * G(0) + a[1] * G(1) + a[2] * G(2), mu);
                T += w * e.e;
                g += (w * e.e1) * G;
                h += (w * e.e2) * G * G.transpose();
                Tm += w * e.em;
                gm += (w * e.e1m) * G;
                Tmm += w * e.emm;
            }
        }
    }
    const double lam = spec_.lambda, d0 = spec_.delta0;
    const Eigen::Vector3d av(a[0], a[1], a[2]);
    out.value = 0.5 * lam * av.squaredNorm() - mu * a[2] * a[2] / (2.0 * d0) + T;
    out.grad = lam * av + g;
    out.grad(2) -= mu * a[2] / d0;
    out.hess = lam * Eigen::Matrix3d::Identity() + h;
    out.hess(2, 2) -= mu / d0;
    out.d_mu = -a[2] * a[2] / (2.0 * d0) + Tm;
    out.d_mumu = Tmm;
    out.d_alpha_mu = gm;
    out.d_alpha_mu(2) -= a[2] / d0;
    return out;
}

Lagrangian::MuSolve Lagrangian::maximize_mu(const Alpha& a, double hint) const {
    // the mu = 0 boundary binds when the slope there is already <= 0
    const LagrangianEval e0 = eval(a, 0.0);
    if (e0.d_mu <= 0.0) return {0.0, e0, e0.d_mu > -1e-12};
    double lo = 0.0, hi = INFINITY;
    double mu = hint > 0.0 && std::isfinite(hint) ? hint : 1.0;
    LagrangianEval e = eval(a, mu);
    for (int it = 0; it < 300; ++it) {
        if (std::abs(e.d_mu) <= 1e-13) return {mu, e, false};
        if (e.d_mu > 0.0) lo = mu; else hi = mu;
        double next = mu - e.d_mu / e.d_mumu;
        if (!std::isfinite(next) || next <= lo || next >= hi)
            next = std::isinf(hi) ? std::max(2.0 * mu, 10.0) : 0.5 * (lo + hi);
        if (std::abs(next - mu) <= 1e-14 * (1.0 + mu)) return {next, eval(a, next), false};
        mu = next;
        if (mu > 1e15) throw NumericalError("mu search diverged (alpha_perp too small?)");
        e = eval(a, mu);
    }
    if (std::abs(e.d_mu) <= 1e-9) return {mu, e, false};
    throw NumericalError("mu search did not converge");
}

double lagrangian(const SaddleSpec& spec, const Alpha& a, double mu) {
    return Lagrangian(spec).value(a, mu);
}

double realized_gamma(const SaddleSpec& spec) { return Lagrangian(spec).realized_gamma(); }

SaddleSolution solve_saddle(const SaddleSpec& spec) {
    const Lagrangian L(spec);
    SaddleSolution sol;
    Alpha a{0.0, 0.0, 1.0};
    double mu = 1.0;
    auto M = L.maximize_mu(a, mu);
    int it = 0;
    for (; it < 500; ++it) {
        mu = M.mu;
        const LagrangianEval& E = M.at;
        Eigen::Matrix3d H = E.hess;
        if (M.mu > 0.0 && E.d_mumu < 0.0) H -= E.d_alpha_mu * E.d_alpha_mu.transpose() / E.d_mumu;
        H = 0.5 * (H + H.transpose());
        Eigen::Vector3d d = Eigen::Vector3d::Zero();
        double shift = 0.0;
        for (int k = 0; k < 60; ++k) {
            Eigen::LLT<Eigen::Matrix3d> llt(H + shift * Eigen::Matrix3d::Identity());
            if (llt.info() == Eigen::Success) {
                d = -llt.solve(E.grad);
                break;
            }
            shift = shift == 0.0 ? 1e-8 * (1.0 + H.cwiseAbs().maxCoeff()) : 10.0 * shift;
        }
        if (spec.beta_s == 0.0) d(1) = -a[1];   // symmetric direction stays at its optimum 0
        double tmax = 1.0;
        if (d(2) < 0.0) tmax = std::min(1.0, 0.9 * a[2] / -d(2));
        const double slope = E.grad.dot(d);
        double t = tmax;
        bool accepted = false;
        Lagrangian::MuSolve trial = M;
        Alpha next = a;
        for (int ls = 0; ls < 60; ++ls) {
            next = {a[0] + t * d(0), a[1] + t * d(1), std::max(0.0, a[2] + t * d(2))};
            trial = L.maximize_mu(next, mu);
            const double tol = 1e-13 * (1.0 + std::abs(E.value));
            if (trial.at.value <= E.value + 1e-4 * t * slope + tol) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        const double step = t * d.norm();
        if (!accepted) {
            // no further decrease representable at this precision
            break;
        }
        a = next;
        M = trial;
        if (step < 1e-7) {
            ++it;
            break;
        }
    }
    if (it >= 500) throw NumericalError("saddle solver did not converge in 500 iterations");
    sol.alpha = a;
    sol.mu = M.mu;
    sol.mu_flat = M.flat;
    sol.lagrangian_value = M.at.value;
    sol.gradient_norm = M.at.grad.norm();
    sol.iterations = it;
    sol.realized_gamma = L.realized_gamma();
    sol.predicted = predicted_errors(spec, a);
    return sol;
}

PredictedErrors predicted_errors(const SaddleSpec& spec, const Alpha& a) {
    const LabelKernel& kernel = spec.kernel;
    const double n0 = kernel.theta0_norm();
    const QuadratureGrid q0 = g0_grid(kernel_breakpoints_g(kernel), spec.orders);
    const QuadratureGrid qg = gauss_hermite(spec.orders.gaussian);
    QuadratureGrid noise;
    if (kernel.kind() == KernelKind::GaussianNoise) noise = gauss_hermite(spec.orders.noise);
    const double sigma = std::hypot(a[1], a[2]);
    const LossFunction& loss = spec.loss;
    LabelAtoms atoms;

    // P(y u < 0) with u = c0 G0 + s G; the integrand is a sigmoid of width s/|c0|
    auto misclass = [&](double c0, double s) {
        std::vector<double> bps = kernel_breakpoints_g(kernel);
        if (c0 != 0.0 && s > 0.0)
            for (double k : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
                bps.push_back(k * s / std::abs(c0));
                bps.push_back(-k * s / std::abs(c0));
            }
        const QuadratureGrid q0 = gaussian_piecewise(bps, std::max(spec.orders.panel, 16));
        double p = 0.0;
        for (int i = 0; i < q0.order(); ++i) {
            kernel.atoms(n0 * q0.nodes[i], noise.nodes, noise.weights, atoms);
            const double m = c0 * q0.nodes[i];
            for (std::size_t k = 0; k < atoms.y.size(); ++k) {
                const double y = atoms.y[k];
                if (y == 0.0) continue;
                double pr;
                if (s > 0.0) pr = y > 0.0 ? normal_cdf(-m / s) : normal_cdf(m / s);
                else pr = y * m < 0.0 ? 1.0 : 0.0;
                p += q0.weights[i] * atoms.prob[k] * pr;
            }
        }
        return p;
    };
    auto expected_loss = [&](double c0, double s) {
        double v = 0.0;
        for (int i = 0; i < q0.order(); ++i) {
            kernel.atoms(n0 * q0.nodes[i], noise.nodes, noise.weights, atoms);
            for (std::size_t k = 0; k < atoms.y.size(); ++k)
                for (int j = 0; j < qg.order(); ++j)
                    v += q0.weights[i] * atoms.prob[k] * qg.weights[j] *
                         loss.value(c0 * q0.nodes[i] + s * qg.nodes[j], atoms.y[k]);
        }
        return v;
    };
    auto test_loss = [&](double c0, double s) {
        return loss.test == TestKind::Misclassification ? misclass(c0, s) : expected_loss(c0, s);
    };

    // c* = argmin_c E L(c G0, Y)
    double c = 0.0;
    for (int it = 0; it < 100; ++it) {
        double d1 = 0.0, d2 = 0.0;
        for (int i = 0; i < q0.order(); ++i) {
            const double g0 = q0.nodes[i];
            kernel.atoms(n0 * g0, noise.nodes, noise.weights, atoms);
            for (std::size_t k = 0; k < atoms.y.size(); ++k) {
                const double w = q0.weights[i] * atoms.prob[k];
                d1 += w * loss.d1(c * g0, atoms.y[k]) * g0;
                d2 += w * loss.d2(c * g0, atoms.y[k]) * g0 * g0;
            }
        }
        if (!(d2 > 0.0)) break;
        const double step = d1 / d2;
        c -= step;
        if (std::abs(step) < 1e-12 * (1.0 + std::abs(c))) break;
    }

    PredictedErrors out;
    out.test_error = test_loss(a[0], sigma);
    out.excess_error = out.test_error - test_loss(c, 0.0);
    out.misclassification = misclass(a[0], sigma);
    return out;
}

RidgelessTerms ridgeless_closed_form(const LabelKernel& kernel, const SelectionRule& rule, double delta0) {
    if (!(delta0 > 0.0)) throw InvalidArgument("delta0 must be positive");
    const double n0 = kernel.theta0_norm();
    std::vector<double> bps = kernel_breakpoints_g(kernel);
    for (double t : selection_breakpoints(rule)) bps.push_back(t);
    const QuadratureGrid q = bps.empty() ? gauss_hermite(100) : gaussian_piecewise(bps, 24);
    RidgelessTerms r{};
    double A1 = 0, B1 = 0, C1 = 0, A = 0, B = 0, C = 0, gam = 0;
    for (int i = 0; i < q.order(); ++i) {
        const double g = q.nodes[i], w = q.weights[i];
        const double pi = rule.pi(selection_score(rule, g));
        const double m1 = kernel.conditional_mean(n0 * g), m2 = kernel.conditional_second_moment(n0 * g);
        A1 += w * g * g;
        B1 += w * g * m1;
        C1 += w * m2;
        A += w * g * g * pi;
        B += w * g * m1 * pi;
        C += w * m2 * pi;
        gam += w * pi;
    }
    if (!(gam > 0.0)) throw InvalidArgument("selection rule keeps no mass");
    r.A1 = A1;
    r.B1 = B1;
    r.C1 = C1;
    r.Api = A / gam;
    r.Bpi = B / gam;
    r.Cpi = C / gam;
    r.gamma = gam;
    r.delta = delta0 * gam;
    const double d = r.delta;
    if (std::abs(d - 1.0) < 1e-3) throw InvalidArgument("delta within 1e-3 of the interpolation pole");
    const double resid = r.Cpi - r.Bpi * r.Bpi / r.Api;
    if (d > 1.0) {
        const double bias = r.B1 / r.A1 - r.Bpi / r.Api;
        r.excess = bias * bias + resid / (d - 1.0);
    } else {
        const double den = 1.0 - d + r.Api * d;
        const double bias = r.B1 / r.A1 - r.Bpi * d / den;
        r.excess = bias * bias + r.Bpi * r.Bpi / r.Api * d * (1.0 - d) / (den * den) + d / (1.0 - d) * resid;
    }
    return r;
}

}  // namespace sublab::highdim
