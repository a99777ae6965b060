#include "sublab/core.hpp"

#include <algorithm>
#include <cmath>

namespace sublab {

Dataset::Dataset(Matrix x, std::optional<Vector> y) : features(std::move(x)), labels(std::move(y)) {
    if (features.rows() < 1 || features.cols() < 1)
        throw InvalidArgument("dataset needs at least one row and one column");
    if (!features.allFinite()) throw InvalidArgument("dataset has non-finite feature entries");
    if (labels && labels->size() != features.rows())
        throw InvalidArgument("label count does not match row count");
}

std::string to_string(KernelKind k) {
    switch (k) {
        case KernelKind::GlmLogistic: return "glm-logistic";
        case KernelKind::SignFlip: return "sign-flip";
        case KernelKind::Staircase: return "staircase";
        case KernelKind::GaussianNoise: return "gaussian-noise";
        case KernelKind::Deterministic: return "deterministic";
    }
    return "?";
}

KernelKind kernel_kind_from_string(const std::string& s) {
    if (s == "glm-logistic") return KernelKind::GlmLogistic;
    if (s == "sign-flip") return KernelKind::SignFlip;
    if (s == "staircase") return KernelKind::Staircase;
    if (s == "gaussian-noise") return KernelKind::GaussianNoise;
    if (s == "deterministic" || s == "cubic") return KernelKind::Deterministic;
    throw InvalidArgument("unknown kernel kind '" + s + "'");
}

static void check_norm(double n) {
    if (!(n >= 0.0) || !std::isfinite(n)) throw InvalidArgument("theta0_norm must be finite and >= 0");
}

LabelKernel LabelKernel::glm_logistic(double theta0_norm) {
    check_norm(theta0_norm);
    LabelKernel k;
    k.kind_ = KernelKind::GlmLogistic;
    k.name_ = "glm-logistic";
    k.norm_ = theta0_norm;
    return k;
}

LabelKernel LabelKernel::sign_flip(double eta, double theta0_norm) {
    check_norm(theta0_norm);
    if (!(eta > 0.5 && eta <= 1.0)) throw InvalidArgument("sign-flip eta must lie in (1/2, 1]");
    LabelKernel k;
    k.kind_ = KernelKind::SignFlip;
    k.name_ = "sign-flip";
    k.norm_ = theta0_norm;
    k.eta_ = eta;
    return k;
}

LabelKernel LabelKernel::staircase(double eta, double zeta, double theta0_norm) {
    check_norm(theta0_norm);
    if (!(eta >= 0.0 && eta <= 1.0 && zeta >= 0.0 && zeta <= 1.0))
        throw InvalidArgument("staircase eta and zeta must lie in [0, 1]");
    LabelKernel k;
    k.kind_ = KernelKind::Staircase;
    k.name_ = "staircase";
    k.norm_ = theta0_norm;
    k.eta_ = eta;
    k.zeta_ = zeta;
    return k;
}

LabelKernel LabelKernel::gaussian_noise(double tau, double theta0_norm) {
    check_norm(theta0_norm);
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("gaussian-noise tau must be > 0");
    LabelKernel k;
    k.kind_ = KernelKind::GaussianNoise;
    k.name_ = "gaussian-noise";
    k.norm_ = theta0_norm;
    k.tau_ = tau;
    return k;
}

LabelKernel LabelKernel::deterministic(std::function<double(double)> h, double theta0_norm,
                                       std::string name) {
    check_norm(theta0_norm);
    if (!h) throw InvalidArgument("deterministic kernel needs a function");
    LabelKernel k;
    k.kind_ = KernelKind::Deterministic;
    k.name_ = std::move(name);
    k.norm_ = theta0_norm;
    k.h_ = std::move(h);
    return k;
}

LabelKernel LabelKernel::cubic(double c, double theta0_norm) {
    auto k = deterministic([c](double t) { return t + c * (t * t * t - 3.0 * t); }, theta0_norm, "cubic");
    k.cubic_c_ = c;
    return k;
}

LabelKernel LabelKernel::with_norm(double theta0_norm) const {
    check_norm(theta0_norm);
    LabelKernel k = *this;
    k.norm_ = theta0_norm;
    return k;
}

bool LabelKernel::binary() const {
    return kind_ == KernelKind::GlmLogistic || kind_ == KernelKind::SignFlip ||
           kind_ == KernelKind::Staircase;
}

double LabelKernel::prob_plus(double z) const {
    switch (kind_) {
        case KernelKind::GlmLogistic: return 0.5 * (1.0 + std::tanh(z));
        case KernelKind::SignFlip: return z >= 0.0 ? eta_ : 1.0 - eta_;
        case KernelKind::Staircase:
            if (z < -0.5) return 1.0 - zeta_;
            if (z < 0.0) return 1.0 - eta_;
            if (z < 0.5) return eta_;
            return zeta_;
        default: throw InvalidArgument("prob_plus requires a binary kernel");
    }
}

double LabelKernel::conditional_mean(double z) const {
    if (binary()) return 2.0 * prob_plus(z) - 1.0;
    if (kind_ == KernelKind::GaussianNoise) return z;
    return h_(z);
}

double LabelKernel::conditional_second_moment(double z) const {
    if (binary()) return 1.0;
    if (kind_ == KernelKind::GaussianNoise) return z * z + tau_ * tau_;
    const double h = h_(z);
    return h * h;
}

double LabelKernel::sample(double z, Rng& rng) const {
    if (binary()) return rng.uniform() < prob_plus(z) ? 1.0 : -1.0;
    if (kind_ == KernelKind::GaussianNoise) return z + tau_ * rng.normal();
    return h_(z);
}

std::vector<double> LabelKernel::breakpoints() const {
    if (kind_ == KernelKind::SignFlip) return {0.0};
    if (kind_ == KernelKind::Staircase) return {-0.5, 0.0, 0.5};
    return {};
}

void LabelKernel::atoms(double z, const std::vector<double>& noise_nodes,
                        const std::vector<double>& noise_weights, LabelAtoms& out) const {
    out.y.clear();
    out.prob.clear();
    if (binary()) {
        const double f = prob_plus(z);
        if (f > 0.0) { out.y.push_back(1.0); out.prob.push_back(f); }
        if (f < 1.0) { out.y.push_back(-1.0); out.prob.push_back(1.0 - f); }
    } else if (kind_ == KernelKind::GaussianNoise) {
        for (std::size_t i = 0; i < noise_nodes.size(); ++i) {
            out.y.push_back(z + tau_ * noise_nodes[i]);
            out.prob.push_back(noise_weights[i]);
        }
    } else {
        out.y.push_back(h_(z));
        out.prob.push_back(1.0);
    }
}

double sample_label(const LabelKernel& kernel, double z, Rng& rng) {
    return kernel.sample(z, rng);
}

double log_cosh2(double t) {
    const double a = std::abs(t);
    return a + std::log1p(std::exp(-2.0 * a));
}

double phi2(double t) {
    const double th = std::tanh(t);
    return 1.0 - th * th;
}

double LossFunction::value(double u, double y) const {
    if (kind == LossKind::Square) return 0.5 * (y - u) * (y - u);
    return -y * u + log_cosh2(u);
}

double LossFunction::d1(double u, double y) const {
    if (kind == LossKind::Square) return u - y;
    return std::tanh(u) - y;
}

double LossFunction::d2(double u, double) const {
    if (kind == LossKind::Square) return 1.0;
    return phi2(u);
}

double LossFunction::test_value(double u, double y) const {
    if (test == TestKind::Misclassification) return y * u < 0.0 ? 1.0 : 0.0;
    return value(u, y);
}

std::string to_string(LossKind k) { return k == LossKind::Square ? "square" : "logistic"; }

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "square") return LossKind::Square;
    if (s == "logistic") return LossKind::Logistic;
    throw InvalidArgument("unknown loss '" + s + "'");
}

Decomposition surrogate_decompose(const Vector& theta_su, const Vector& theta0) {
    if (theta_su.size() != theta0.size()) throw InvalidArgument("surrogate and theta0 dimensions differ");
    const double n0 = theta0.norm();
    if (!(n0 > 0.0)) throw InvalidArgument("theta0 must be nonzero");
    const double b0 = theta_su.dot(theta0) / n0;
    const double bs = (theta_su - (b0 / n0) * theta0).norm();
    return {b0, bs};
}

std::string to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::Random: return "random";
        case SchemeKind::UnbiasedInfluence: return "unbiased-influence";
        case SchemeKind::NonreweightOptimal: return "nonreweight-optimal";
        case SchemeKind::AlphaFamily: return "alpha-family";
        case SchemeKind::TopkHard: return "topk-hard";
        case SchemeKind::TopkEasy: return "topk-easy";
        case SchemeKind::MinimaxDiscrete: return "minimax-discrete";
    }
    return "?";
}

SchemeKind scheme_kind_from_string(const std::string& s) {
    for (auto k : {SchemeKind::Random, SchemeKind::UnbiasedInfluence, SchemeKind::NonreweightOptimal,
                   SchemeKind::AlphaFamily, SchemeKind::TopkHard, SchemeKind::TopkEasy,
                   SchemeKind::MinimaxDiscrete})
        if (to_string(k) == s) return k;
    throw InvalidArgument("unknown selection kind '" + s + "'");
}

static void check_gamma(double g) {
    if (!(g > 0.0 && g <= 1.0)) throw InvalidArgument("gamma must lie in (0, 1]");
}

SelectionRule SelectionRule::random(double gamma, bool reweight) {
    check_gamma(gamma);
    SelectionRule r;
    r.kind_ = SchemeKind::Random;
    r.gamma_ = gamma;
    r.reweight_ = reweight;
    return r;
}

SelectionRule SelectionRule::full() { return random(1.0, false); }

SelectionRule SelectionRule::unbiased(double gamma, double cap) {
    check_gamma(gamma);
    if (!(cap > 0.0)) throw InvalidArgument("cap constant must be positive");
    SelectionRule r;
    r.kind_ = SchemeKind::UnbiasedInfluence;
    r.gamma_ = gamma;
    r.cap_ = cap;
    r.reweight_ = true;
    return r;
}

SelectionRule SelectionRule::nonreweight(double gamma, double threshold, double tie_fraction) {
    check_gamma(gamma);
    SelectionRule r;
    r.kind_ = SchemeKind::NonreweightOptimal;
    r.gamma_ = gamma;
    r.threshold_ = threshold;
    r.tie_ = std::clamp(tie_fraction, 0.0, 1.0);
    r.reweight_ = false;
    return r;
}

SelectionRule SelectionRule::alpha_family(double gamma, double alpha, double cap, bool reweight) {
    check_gamma(gamma);
    if (!std::isfinite(alpha)) throw InvalidArgument("alpha-family needs a finite alpha");
    if (!(cap > 0.0)) throw InvalidArgument("cap constant must be positive");
    SelectionRule r;
    r.kind_ = SchemeKind::AlphaFamily;
    r.gamma_ = gamma;
    r.alpha_ = alpha;
    r.cap_ = cap;
    r.reweight_ = reweight;
    return r;
}

SelectionRule SelectionRule::topk(SchemeKind kind, double gamma, double threshold, double tie_fraction,
                                  bool reweight) {
    check_gamma(gamma);
    if (kind != SchemeKind::TopkHard && kind != SchemeKind::TopkEasy)
        throw InvalidArgument("topk rule needs a topk kind");
    SelectionRule r;
    r.kind_ = kind;
    r.gamma_ = gamma;
    r.alpha_ = kind == SchemeKind::TopkHard ? INFINITY : -INFINITY;
    r.threshold_ = threshold;
    r.tie_ = std::clamp(tie_fraction, 0.0, 1.0);
    r.reweight_ = reweight;
    return r;
}

SelectionRule SelectionRule::minimax(double gamma, std::vector<double> level_pi) {
    check_gamma(gamma);
    for (double v : level_pi)
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("level probabilities must lie in [0, 1]");
    SelectionRule r;
    r.kind_ = SchemeKind::MinimaxDiscrete;
    r.gamma_ = gamma;
    r.reweight_ = false;
    r.level_pi_ = std::move(level_pi);
    return r;
}

static bool same_score(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b));
}

double SelectionRule::pi(double score) const {
    switch (kind_) {
        case SchemeKind::Random: return gamma_;
        case SchemeKind::UnbiasedInfluence: return std::min(1.0, cap_ * std::sqrt(std::max(score, 0.0)));
        case SchemeKind::NonreweightOptimal:
        case SchemeKind::TopkHard:
            if (same_score(score, threshold_)) return tie_;
            return score > threshold_ ? 1.0 : 0.0;
        case SchemeKind::TopkEasy:
            if (same_score(score, threshold_)) return tie_;
            return score < threshold_ ? 1.0 : 0.0;
        case SchemeKind::AlphaFamily: {
            if (alpha_ == 0.0) return std::min(1.0, cap_);
            if (score <= 0.0) return alpha_ < 0.0 ? 1.0 : 0.0;
            return std::min(1.0, cap_ * std::pow(score, alpha_));
        }
        case SchemeKind::MinimaxDiscrete: {
            const auto i = static_cast<long>(std::lround(score));
            if (i < 0 || i >= static_cast<long>(level_pi_.size()))
                throw InvalidArgument("level index out of range");
            return level_pi_[static_cast<std::size_t>(i)];
        }
    }
    return 0.0;
}

double SelectionRule::weight(double score) const {
    const double p = pi(score);
    if (p <= 0.0) return 0.0;
    return reweight_ ? 1.0 / p : 1.0;
}

double SelectionRule::sample(double score, Rng& rng) const {
    const double p = pi(score);
    if (p <= 0.0) return 0.0;
    if (p >= 1.0 || rng.uniform() < p) return reweight_ ? 1.0 / p : 1.0;
    return 0.0;
}

EstimationMetric::EstimationMetric(Matrix q, MetricKind k) : Q(std::move(q)), kind(k) {
    if (Q.rows() != Q.cols()) throw InvalidArgument("metric must be square");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, Q.cwiseAbs().maxCoeff()))
        throw InvalidArgument("metric must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) throw InvalidArgument("metric must be positive semidefinite");
}

EstimationMetric EstimationMetric::identity(int p) {
    return EstimationMetric(Matrix::Identity(p, p), MetricKind::Identity);
}

}  // namespace sublab
