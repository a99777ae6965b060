#pragma once

#include "sublab/core.hpp"
#include "sublab/highdim.hpp"

#include <string>
#include <vector>

namespace sublab::sim {

enum class SurrogateMode { Perfect, Fitted };

struct ExperimentConfig {
    int N = 4000;
    int p = 110;
    std::uint64_t seed = 1;
    int replicates = 10;
    LabelKernel kernel = LabelKernel::glm_logistic(1.0);
    std::uint64_t theta0_seed = 7;
    LossFunction loss{LossKind::Logistic, TestKind::Misclassification};
    std::vector<double> lambdas{0.01};
    bool lambda_grid = false;   // pick lambda per cell on a 10% validation split
    SchemeKind scheme = SchemeKind::AlphaFamily;
    std::vector<double> gammas{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> alphas{0.0};
    bool reweight = false;
    SurrogateMode surrogate = SurrogateMode::Perfect;
    int n_su = 0;
    double lambda_su = 0.01;
    long holdout = 100000;
    bool theory = true;
    highdim::QuadratureOrders orders;

    void validate() const;
};

Vector make_theta0(int p, double norm, std::uint64_t seed);
Dataset generate_synthetic(int N, const LabelKernel& kernel, const Vector& theta0, Rng& rng);

struct ErmResult {
    Vector theta;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
};

// Minimizes (1/n_total) sum_i S_i L(<theta, x_i>, y_i) + lambda/2 |theta|^2.
// Rows with S_i = 0 are skipped; n_total defaults to the row count.
ErmResult fit_erm(const Matrix& X, const Vector& y, const Vector& S, const LossFunction& loss, double lambda,
                  long n_total = -1);

SurrogateModel perfect_surrogate(const Vector& theta0);
// Logistic ridge fit on a fresh sample; decomposition filled when theta0 is given.
SurrogateModel train_surrogate(const Dataset& fresh, double lambda_su, const Vector* theta0);

struct SelectionOutcome {
    Vector pi;
    Vector weight;
    std::vector<char> included;
    double c = 0.0;
    long target_n = 0;
    long realized_n = 0;
};

// alpha = +inf / -inf select the n hardest / easiest points deterministically.
SelectionOutcome alpha_family_pi(const Vector& theta_su, const Matrix& X, double gamma, double alpha,
                                 bool reweight, Rng& rng);
SelectionOutcome random_pi(long N, double gamma, bool reweight, Rng& rng);

struct Projections {
    double alpha0 = 0.0;
    double alphas = 0.0;
    double alphaperp = 0.0;
};

Projections project(const Vector& theta_hat, const Vector& theta0, const Vector& theta_su);

struct TestErrors {
    double test_error = 0.0;
    double misclassification = 0.0;
    double excess = 0.0;
    double holdout_test_error = 0.0;   // NaN when no holdout was drawn
    long holdout_n = 0;
};

TestErrors measure_test_error(const Vector& theta_hat, const LabelKernel& kernel, const Vector& theta0,
                              const LossFunction& loss, long holdout, Rng* rng);

struct ResultRow {
    std::string scheme;
    double gamma = 0.0;
    double alpha = 0.0;
    int replicate = 0;
    long realized_n = 0;
    double test_error = 0.0;
    double misclassification = 0.0;
    double excess = 0.0;
    double theory_test_error = 0.0;
    double alpha0_fit = 0.0;
    double alphas_fit = 0.0;
    double alphaperp_fit = 0.0;
    std::string status = "ok";
    double lambda = 0.0;
    double holdout_test_error = 0.0;
};

struct CellSummary {
    std::string scheme;
    double gamma = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;
    int n_ok = 0;
    double median_test = 0.0, q25_test = 0.0, q75_test = 0.0;
    double median_misclass = 0.0, q25_misclass = 0.0, q75_misclass = 0.0;
    double theory_test_error = 0.0;
    double theory_misclass = 0.0;
    highdim::Alpha theory_alpha{};
    std::string theory_status = "ok";
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<CellSummary> cells;
    double beta0 = 1.0, beta_s = 0.0;   // replicate-averaged surrogate decomposition
};

double median(std::vector<double> v);
double quantile(std::vector<double> v, double q);

// One surrogate per replicate (perfect mode: all equal).  A failed fit leaves
// its message in `errors` and a perfect surrogate in its slot.
std::vector<SurrogateModel> replicate_surrogates(const ExperimentConfig& config, const Vector& theta0, int jobs,
                                                 std::vector<std::string>& errors);
// Number of rows left for training after the validation split.
int training_rows(const ExperimentConfig& config);
// Saddle spec matching one sweep cell.
highdim::SaddleSpec theory_spec(const ExperimentConfig& config, double beta0, double beta_s, double delta0,
                                double gamma, double alpha, double lambda);

ExperimentResult run_sweep(const ExperimentConfig& config, int jobs = 1);

}  // namespace sublab::sim
