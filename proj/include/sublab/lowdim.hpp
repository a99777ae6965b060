#pragma once

#include "sublab/core.hpp"

#include <functional>

namespace sublab::lowdim {

// A covariate law represented by weighted atoms (weights sum to one).
class Population {
public:
    Population(Matrix points, Vector weights);

    // Symmetric equal-mass quantile midpoints, m atoms per side.
    static Population uniform_1d(double x_max, int m);
    // |X| has density proportional to x^-exponent on [1, x_max], random sign.
    static Population powerlaw_1d(double exponent, double x_max, int m);
    // Standard normal in p dimensions: shifted Halton points mapped through the
    // normal quantile, plus their reflections.
    static Population gaussian(int p, int n, std::uint64_t seed);
    static Population empirical(const Matrix& x);

    Eigen::Index size() const { return points_.rows(); }
    Eigen::Index dim() const { return points_.cols(); }
    const Matrix& points() const { return points_; }
    const Vector& weights() const { return weights_; }

    // sum_i weights_i * coeff_i * x_i x_i^T
    Matrix gram(const Vector& coeff) const;
    double mean(const Vector& values) const { return weights_.dot(values); }

private:
    Matrix points_;
    Vector weights_;
};

enum class Family { LinearRegression, GlmLogistic, MisspecifiedSquare };

// G(x) = g(x) x x^T and H(x) = h(x) x x^T.
class ConditionalMoments {
public:
    static ConditionalMoments linear_regression(double tau);
    static ConditionalMoments glm_logistic(Vector theta_star);
    // Square loss fitted to labels from `kernel` at z = <theta0, x> with
    // isotropic Gaussian x; theta* is the population least-squares projection.
    static ConditionalMoments misspecified_square(const LabelKernel& kernel, Vector theta0);

    Family family() const { return family_; }
    const Vector& theta_star() const { return theta_star_; }
    double g(const Eigen::Ref<const Vector>& x) const;
    double h(const Eigen::Ref<const Vector>& x) const;
    Matrix G(const Eigen::Ref<const Vector>& x) const { return g(x) * x * x.transpose(); }
    Matrix H(const Eigen::Ref<const Vector>& x) const { return h(x) * x * x.transpose(); }

    Vector g_values(const Population& pop) const;
    Vector h_values(const Population& pop) const;

private:
    Family family_ = Family::LinearRegression;
    double tau_ = 1.0;
    Vector theta_star_;
    Vector theta0_;
    std::function<double(double)> m1_, m2_;
};

Matrix population_hessian(const ConditionalMoments& m, const Population& pop);
Matrix population_gradient_cov(const ConditionalMoments& m, const Population& pop);

// pi and w evaluated on every atom.
struct PointScheme {
    Vector pi;
    Vector w;
};

PointScheme evaluate(const SelectionRule& rule, const Vector& scores);

struct AsymptoticCoefficient {
    double rho = 0.0;
    Matrix G_S, H_S, Q;
    double gamma = 0.0;
    SchemeKind kind = SchemeKind::Random;
    double ES = 0.0, ES2 = 0.0;

    double recompute() const;
};

AsymptoticCoefficient rho_coefficient(const ConditionalMoments& m, const PointScheme& s,
                                      const EstimationMetric& metric, const Population& pop,
                                      SchemeKind kind = SchemeKind::Random);
AsymptoticCoefficient rho_coefficient(const ConditionalMoments& m, const SelectionRule& rule,
                                      const Vector& scores, const EstimationMetric& metric,
                                      const Population& pop);

using ScoreFn = std::function<double(const Eigen::Ref<const Vector>&)>;

Vector evaluate_score(const ScoreFn& f, const Population& pop);

ScoreFn unbiased_score(const ConditionalMoments& m, const EstimationMetric& metric, const Matrix& H);
ScoreFn influence_score(const ConditionalMoments& m, const EstimationMetric& metric, const Matrix& H);
ScoreFn nonreweight_score(const ConditionalMoments& m, const EstimationMetric& metric,
                          const Matrix& H_pi, const Matrix& G_pi);

struct UnbiasedOptimum {
    SelectionRule rule;
    double rho_unb = 0.0;
    double rho_rand = 0.0;
    PointScheme scheme;
};

// Z: scores on the population atoms.
UnbiasedOptimum optimal_unbiased_pi(const Vector& Z, double gamma, const Population& pop);

struct NonReweightFixedPoint {
    Matrix H_pi, G_pi;
    double threshold = 0.0;
    double tie_fraction = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

struct NonReweightOptimum {
    NonReweightFixedPoint fixed_point;
    SelectionRule rule;
    double rho_nr = 0.0;
    PointScheme scheme;
    Vector scores;
    ScoreFn score;
};

// Hard selection of mass gamma from the top of `scores`; atoms sharing the
// boundary score receive a common fractional probability.
struct Threshold {
    double value;
    double tie_fraction;
    Vector pi;
};
Threshold top_mass(const Vector& scores, const Vector& weights, double gamma);

NonReweightOptimum solve_nonreweight_fixed_point(const ConditionalMoments& m,
                                                 const EstimationMetric& metric, double gamma,
                                                 const Population& pop, double damping = 0.5,
                                                 int max_iter = 200);

enum class Law1d { Uniform, Powerlaw };

struct ClosedForm1d {
    double rho_unb;
    double rho_nr;
    double ratio;
    double limit_ratio;   // gamma -> 0
};

ClosedForm1d closed_form_1d(Law1d law, double x_max, double exponent, double gamma);

struct ZQCertificate {
    ScoreFn zq;
    long n_draws = 0;
    long n_negative = 0;
    double negative_fraction = 0.0;
    double std_error = 0.0;
    bool certified = false;   // fraction - 3 SE > 0
    double rho_full = 0.0;
    double mean_negative_part = 0.0;   // E[Z_Q ; Z_Q < 0]
};

// Q is the population Hessian; the certificate is evaluated on `draws` (rows).
ZQCertificate zq_at_full(const ConditionalMoments& m, const Population& pop, const Matrix& draws);

// Keep the top-gamma mass of Z_Q(x;1) and report the non-reweighting rho
// with Q = H.
AsymptoticCoefficient greedy_drop_negative(const ConditionalMoments& m, const Population& pop,
                                           double gamma);

}  // namespace sublab::lowdim
