#pragma once

#include "sublab/core.hpp"

#include <functional>
#include <vector>

namespace sublab {

struct QuadratureGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
    int order() const { return static_cast<int>(nodes.size()); }

    template <class F>
    double expect(F&& f) const {
        double s = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) s += weights[i] * f(nodes[i]);
        return s;
    }
};

// Probabilists' rule: integrates against the N(0,1) density.
QuadratureGrid gauss_hermite(int order);
// Plain rule on [-1, 1] (weights sum to 2).
QuadratureGrid gauss_legendre(int order);
// N(0,1) rule built from Gauss-Legendre panels on [-half_width, half_width],
// split at the given breakpoints and a fixed set of tail cut points.
QuadratureGrid gaussian_piecewise(const std::vector<double>& breakpoints, int panel_order = 12,
                                  double half_width = 9.0);

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);

// Root of f(c) = target for monotone f.  The bracket is widened (by doubling
// its width away from the violated end) at most 60 times.
double bisect_monotone(const std::function<double(double)>& f, double target, double lo, double hi,
                       double tol);

struct ProxResult {
    double u;
    double value;
};

// argmin_u L(a + u, y) + mu/2 (g - u)^2
ProxResult prox_loss(const LossFunction& loss, double a, double y, double g, double mu);

struct ScalarMax {
    double arg;
    double value;
};

// Golden-section maximization of a concave function; hi is doubled while f is
// still increasing there.
ScalarMax maximize_concave_scalar(const std::function<double(double)>& f, double lo, double hi,
                                  double tol);

// Inverse of a symmetric positive-definite matrix through its eigenvalues.
// Throws NumericalError when the smallest eigenvalue is below floor.
Matrix inverse_spd(const Matrix& a, double floor = 1e-12);

}  // namespace sublab
