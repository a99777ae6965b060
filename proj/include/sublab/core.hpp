#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sublab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Counter-based generator: output k is a SplitMix64 finalizer applied to
// key + k * golden.  Copying the object copies the stream position.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

    std::uint64_t next_u64();
    double uniform();   // open interval (0,1)
    double normal();
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t counter() const { return counter_; }

    static std::uint64_t mix(std::uint64_t z);
    // Deterministic child seed from a parent seed and a list of tags.
    static std::uint64_t derive(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

struct Dataset {
    Matrix features;
    std::optional<Vector> labels;

    Dataset() = default;
    Dataset(Matrix x, std::optional<Vector> y = std::nullopt);
    Eigen::Index n() const { return features.rows(); }
    Eigen::Index p() const { return features.cols(); }
    bool labelled() const { return labels.has_value(); }
};

enum class KernelKind { GlmLogistic, SignFlip, Staircase, GaussianNoise, Deterministic };

std::string to_string(KernelKind k);
KernelKind kernel_kind_from_string(const std::string& s);

// Label atoms for quadrature: values and probabilities.
struct LabelAtoms {
    std::vector<double> y;
    std::vector<double> prob;
};

class LabelKernel {
public:
    static LabelKernel glm_logistic(double theta0_norm);
    static LabelKernel sign_flip(double eta, double theta0_norm);
    static LabelKernel staircase(double eta, double zeta, double theta0_norm);
    static LabelKernel gaussian_noise(double tau, double theta0_norm);
    static LabelKernel deterministic(std::function<double(double)> h, double theta0_norm,
                                     std::string name = "custom");
    // h(t) = t + c (t^3 - 3t)
    static LabelKernel cubic(double c, double theta0_norm);

    KernelKind kind() const { return kind_; }
    const std::string& name() const { return name_; }
    double theta0_norm() const { return norm_; }
    double eta() const { return eta_; }
    double zeta() const { return zeta_; }
    double tau() const { return tau_; }
    double cubic_c() const { return cubic_c_; }
    bool binary() const;

    LabelKernel with_norm(double theta0_norm) const;

    double prob_plus(double z) const;   // binary kernels only
    double conditional_mean(double z) const;
    double conditional_second_moment(double z) const;
    double sample(double z, Rng& rng) const;
    // Jumps of P(.|z) as a function of z.
    std::vector<double> breakpoints() const;
    // noise_nodes/weights: standard normal rule used by the gaussian-noise kind.
    void atoms(double z, const std::vector<double>& noise_nodes,
               const std::vector<double>& noise_weights, LabelAtoms& out) const;

private:
    KernelKind kind_ = KernelKind::GaussianNoise;
    std::string name_;
    double norm_ = 1.0;
    double eta_ = 1.0, zeta_ = 1.0, tau_ = 1.0, cubic_c_ = 0.0;
    std::function<double(double)> h_;
};

double sample_label(const LabelKernel& kernel, double z, Rng& rng);

enum class LossKind { Square, Logistic };
enum class TestKind { SameAsTrain, Misclassification };

struct LossFunction {
    LossKind kind = LossKind::Square;
    TestKind test = TestKind::SameAsTrain;

    double value(double u, double y) const;
    double d1(double u, double y) const;
    double d2(double u, double y) const;
    double test_value(double u, double y) const;
};

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

// phi(t) = log(e^t + e^-t) and its second derivative 1 - tanh^2.
double log_cosh2(double t);
double phi2(double t);

struct SurrogateModel {
    Vector theta_su;
    std::optional<double> beta0, beta_s;
};

struct Decomposition {
    double beta0;
    double beta_s;
};

Decomposition surrogate_decompose(const Vector& theta_su, const Vector& theta0);

enum class SchemeKind {
    Random,
    UnbiasedInfluence,
    NonreweightOptimal,
    AlphaFamily,
    TopkHard,
    TopkEasy,
    MinimaxDiscrete
};

std::string to_string(SchemeKind k);
SchemeKind scheme_kind_from_string(const std::string& s);

// pi and w as functions of a scalar score.  The meaning of the score is
// scheme specific (influence Z, non-reweighting Z, phi''^alpha, level index).
class SelectionRule {
public:
    static SelectionRule random(double gamma, bool reweight = true);
    static SelectionRule unbiased(double gamma, double cap);
    static SelectionRule nonreweight(double gamma, double threshold, double tie_fraction);
    static SelectionRule alpha_family(double gamma, double alpha, double cap, bool reweight);
    static SelectionRule topk(SchemeKind kind, double gamma, double threshold, double tie_fraction,
                              bool reweight);
    static SelectionRule minimax(double gamma, std::vector<double> level_pi);
    static SelectionRule full();

    SchemeKind kind() const { return kind_; }
    double gamma() const { return gamma_; }
    double alpha() const { return alpha_; }
    bool reweight() const { return reweight_; }
    double cap() const { return cap_; }
    double threshold() const { return threshold_; }
    double tie_fraction() const { return tie_; }
    const std::vector<double>& level_pi() const { return level_pi_; }

    double pi(double score) const;
    double weight(double score) const;
    // One draw of S(x).
    double sample(double score, Rng& rng) const;

private:
    SchemeKind kind_ = SchemeKind::Random;
    double gamma_ = 1.0;
    double alpha_ = 0.0;
    bool reweight_ = true;
    double cap_ = 1.0;
    double threshold_ = 0.0;
    double tie_ = 0.0;
    std::vector<double> level_pi_;
};

enum class MetricKind { Identity, Sigma, Hessian, Custom };

struct EstimationMetric {
    Matrix Q;
    MetricKind kind = MetricKind::Identity;

    EstimationMetric() = default;
    EstimationMetric(Matrix q, MetricKind k);
    static EstimationMetric identity(int p);
};

}  // namespace sublab
