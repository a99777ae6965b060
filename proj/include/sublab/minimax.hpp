#pragma once

#include "sublab/core.hpp"

#include <vector>

namespace sublab::minimax {

// Covariate with k levels, Bernoulli labels with success probability theta_x.
struct DiscreteMinimaxSpec {
    Vector p;          // level probabilities
    Vector q;          // metric weights
    Vector theta_su;   // surrogate success probabilities
    double eps = 0.0;  // box radius
    double gamma = 0.5;

    Eigen::Index k() const { return p.size(); }
    void validate() const;
    double lower(Eigen::Index x) const;
    double upper(Eigen::Index x) const;
};

struct ThetaMM {
    Vector theta;
    double c = 0.0;
    int alternations = 0;
};

struct MinimaxPi {
    SelectionRule rule;
    Vector pi;
    double c = 0.0;
};

ThetaMM solve_theta_mm(const DiscreteMinimaxSpec& spec);
MinimaxPi minimax_pi(const DiscreteMinimaxSpec& spec, const Vector& theta);

// sum_x theta(1-theta) q / (pi p)
double rho(const DiscreteMinimaxSpec& spec, const Vector& pi, const Vector& theta);
// max over the box of rho(pi, .)
double worst_case_rho(const DiscreteMinimaxSpec& spec, const Vector& pi);

}  // namespace sublab::minimax
