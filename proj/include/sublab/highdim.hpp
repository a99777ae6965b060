#pragma once

#include "sublab/core.hpp"
#include "sublab/numerics.hpp"

#include <array>

namespace sublab::highdim {

struct QuadratureOrders {
    int gaussian = 40;   // Hermite order per Gaussian direction
    int noise = 40;      // label noise nodes for continuous kernels
    int panel = 12;      // Gauss-Legendre order per panel when G0 has jumps

    QuadratureOrders doubled() const { return {2 * gaussian, 2 * noise, 2 * panel}; }
};

struct SaddleSpec {
    LossFunction loss;
    LabelKernel kernel = LabelKernel::glm_logistic(1.0);   // carries ||theta0||
    double beta0 = 1.0;
    double beta_s = 0.0;
    double delta0 = 2.0;   // N / p before selection
    double lambda = 1e-2;
    SelectionRule selection = SelectionRule::full();
    QuadratureOrders orders;

    void validate() const;
};

using Alpha = std::array<double, 3>;   // (alpha0, alpha_s, alpha_perp)

struct PredictedErrors {
    double test_error = 0.0;
    double excess_error = 0.0;
    double misclassification = 0.0;
};

struct SaddleSolution {
    Alpha alpha{};
    double mu = 0.0;
    double lagrangian_value = 0.0;
    double realized_gamma = 0.0;
    PredictedErrors predicted;
    bool mu_flat = false;
    int iterations = 0;
    double gradient_norm = 0.0;
};

// Selection score fed to the rule at surrogate index t: phi''(clip(t)) for the
// alpha family and topk rules, 0 otherwise.
double selection_score(const SelectionRule& rule, double t);
// Values of t where pi jumps or kinks.
std::vector<double> selection_breakpoints(const SelectionRule& rule);

// Population calibration for surrogate index t ~ N(0, beta_norm^2) so that
// E pi = gamma.  alpha = +-inf selects topk-hard / topk-easy.
SelectionRule calibrate_rule(SchemeKind kind, double gamma, double alpha, bool reweight, double beta_norm);

// Lagrangian value and derivatives at (alpha, mu).
struct LagrangianEval {
    double value = 0.0;
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
    Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
    double d_mu = 0.0;
    double d_mumu = 0.0;
    Eigen::Vector3d d_alpha_mu = Eigen::Vector3d::Zero();
};

class Lagrangian {
public:
    explicit Lagrangian(const SaddleSpec& spec);

    double value(const Alpha& a, double mu) const { return eval(a, mu).value; }
    LagrangianEval eval(const Alpha& a, double mu) const;
    double realized_gamma() const { return gamma_; }
    const SaddleSpec& spec() const { return spec_; }

    // argmax over mu >= 0 at fixed alpha
    struct MuSolve {
        double mu;
        LagrangianEval at;
        bool flat;
    };
    MuSolve maximize_mu(const Alpha& a, double hint = 1.0) const;

private:
    SaddleSpec spec_;
    bool reduced_ = false;   // beta_s == 0: (G_s, G_perp) plane is rotation invariant
    // flattened (G0, Gs, y) atoms with mass = weight * pi * prob
    std::vector<double> g0_, gs_, y_, mass_, s_;
    QuadratureGrid gp_;
    double gamma_ = 0.0;
};

double lagrangian(const SaddleSpec& spec, const Alpha& a, double mu);

SaddleSolution solve_saddle(const SaddleSpec& spec);
PredictedErrors predicted_errors(const SaddleSpec& spec, const Alpha& a);
double realized_gamma(const SaddleSpec& spec);

// Excess squared-error risk of ridgeless least squares under a perfect
// surrogate, non-reweighting selection.  delta0 is N/p before selection.
struct RidgelessTerms {
    double A1, B1, C1, Api, Bpi, Cpi, gamma, delta, excess;
};
RidgelessTerms ridgeless_closed_form(const LabelKernel& kernel, const SelectionRule& rule, double delta0);

}  // namespace sublab::highdim
