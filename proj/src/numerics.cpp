#include "sublab/numerics.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sublab {

QuadratureGrid gauss_hermite(int order) {
    if (order < 2 || order > 200) throw InvalidArgument("gauss_hermite order must lie in [2, 200]");
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials
    Matrix J = Matrix::Zero(order, order);
    for (int k = 1; k < order; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Matrix> es(J);
    QuadratureGrid g;
    g.nodes.resize(order);
    g.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        g.nodes[i] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        g.weights[i] = v * v;
    }
    // symmetrize
    for (int i = 0; i < order / 2; ++i) {
        const int j = order - 1 - i;
        const double x = 0.5 * (g.nodes[j] - g.nodes[i]);
        const double w = 0.5 * (g.weights[i] + g.weights[j]);
        g.nodes[i] = -x;
        g.nodes[j] = x;
        g.weights[i] = g.weights[j] = w;
    }
    if (order % 2 == 1) g.nodes[order / 2] = 0.0;
    double s = 0.0;
    for (double w : g.weights) s += w;
    for (double& w : g.weights) w /= s;
    return g;
}

QuadratureGrid gauss_legendre(int order) {
    if (order < 1 || order > 200) throw InvalidArgument("gauss_legendre order must lie in [1, 200]");
    QuadratureGrid g;
    g.nodes.resize(order);
    g.weights.resize(order);
    if (order == 1) {
        g.nodes[0] = 0.0;
        g.weights[0] = 2.0;
        return g;
    }
    Matrix J = Matrix::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        const double b = k / std::sqrt(4.0 * k * k - 1.0);
        J(k, k - 1) = J(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(J);
    for (int i = 0; i < order; ++i) {
        g.nodes[i] = es.eigenvalues()(i);
        const double v = es.eigenvectors()(0, i);
        g.weights[i] = 2.0 * v * v;
    }
    return g;
}

QuadratureGrid gaussian_piecewise(const std::vector<double>& breakpoints, int panel_order,
                                  double half_width) {
    std::vector<double> cuts = {-half_width, -6.0, -4.0, -2.5, -1.25, 0.0, 1.25, 2.5, 4.0, 6.0, half_width};
    for (double b : breakpoints)
        if (std::isfinite(b) && std::abs(b) < half_width) cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-13; }),
               cuts.end());
    cuts.erase(std::remove_if(cuts.begin(), cuts.end(),
                              [&](double c) { return std::abs(c) > half_width; }),
               cuts.end());
    const QuadratureGrid gl = gauss_legendre(panel_order);
    QuadratureGrid g;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = cuts[k], b = cuts[k + 1];
        const double h = 0.5 * (b - a), m = 0.5 * (a + b);
        for (int i = 0; i < gl.order(); ++i) {
            const double x = m + h * gl.nodes[i];
            g.nodes.push_back(x);
            g.weights.push_back(h * gl.weights[i] * normal_pdf(x));
        }
    }
    double s = 0.0;
    for (double w : g.weights) s += w;
    for (double& w : g.weights) w /= s;
    return g;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile needs p in (0,1)");
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double bisect_monotone(const std::function<double(double)>& f, double target, double lo, double hi,
                       double tol) {
    if (!(lo < hi)) throw InvalidArgument("bisect_monotone needs lo < hi");
    double flo = f(lo) - target, fhi = f(hi) - target;
    int expansions = 0;
    while (flo * fhi > 0.0) {
        if (++expansions > 60) throw NumericalError("bisect_monotone: no bracket after 60 doublings");
        const double width = hi - lo;
        // widen on the side that moves toward the target
        const bool increasing = f(hi) >= f(lo);
        if ((flo > 0.0) == increasing) {
            lo -= width;
            flo = f(lo) - target;
        } else {
            hi += width;
            fhi = f(hi) - target;
        }
    }
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    double best = std::abs(flo) < std::abs(fhi) ? lo : hi;
    double best_r = std::min(std::abs(flo), std::abs(fhi));
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid) - target;
        if (std::abs(fm) < best_r) {
            best_r = std::abs(fm);
            best = mid;
        }
        if (std::abs(fm) <= tol) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return best;
}

ProxResult prox_loss(const LossFunction& loss, double a, double y, double g, double mu) {
    if (!(mu > 0.0)) throw InvalidArgument("prox_loss needs mu > 0");
    if (loss.kind == LossKind::Square) {
        const double u = (y - a + mu * g) / (1.0 + mu);
        return {u, loss.value(a + u, y) + 0.5 * mu * (g - u) * (g - u)};
    }
    // stationarity F(u) = tanh(a+u) - y - mu (g - u) is increasing in u
    const double spread = (1.0 + std::abs(y)) / mu;
    double lo = g - spread, hi = g + spread;
    auto grad = [&](double u) { return std::tanh(a + u) - y - mu * (g - u); };
    double u = std::clamp(g - (std::tanh(a + g) - y) / (phi2(a + g) + mu), lo, hi);
    double gu = grad(u);
    for (int it = 0; it < 100; ++it) {
        if (std::abs(gu) <= 1e-10) break;
        if (gu > 0.0) hi = u; else lo = u;
        const double step = gu / (phi2(a + u) + mu);
        double t = 1.0, un = u - step, gn = grad(un);
        for (int h = 0; h < 50 && !(std::abs(gn) < std::abs(gu)); ++h) {
            t *= 0.5;
            un = u - t * step;
            gn = grad(un);
        }
        if (!(un > lo && un < hi)) {
            un = 0.5 * (lo + hi);
            gn = grad(un);
        }
        const bool stalled = std::abs(un - u) <= 4e-16 * std::max(1.0, std::abs(u));
        u = un;
        gu = gn;
        if (stalled || hi - lo <= 4e-16 * std::max(1.0, std::abs(u))) break;
        if (it == 99) throw NumericalError("prox_loss: Newton did not converge in 100 steps");
    }
    return {u, loss.value(a + u, y) + 0.5 * mu * (g - u) * (g - u)};
}

ScalarMax maximize_concave_scalar(const std::function<double(double)>& f, double lo, double hi,
                                  double tol) {
    if (!(lo < hi)) throw InvalidArgument("maximize_concave_scalar needs lo < hi");
    for (int k = 0; k < 60; ++k) {
        const double w = hi - lo;
        if (f(hi) < f(hi - 1e-3 * w)) break;
        hi = lo + 2.0 * w;
    }
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    ScalarMax best{0.5 * (a + b), f(0.5 * (a + b))};
    const double flo = f(lo);
    if (flo > best.value) best = {lo, flo};
    return best;
}

Matrix inverse_spd(const Matrix& a, double floor) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    const Vector ev = es.eigenvalues();
    if (ev.minCoeff() < floor) throw NumericalError("matrix is singular (smallest eigenvalue below floor)");
    return es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace sublab
