#include <doctest.h>

#include "sublab/core.hpp"

#include <cmath>
#include <set>

using namespace sublab;

TEST_CASE("rng is deterministic and counter based") {
    Rng a(42), b(42), c(43);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
    }
    CHECK(a.counter() == 100);
    CHECK(Rng::derive(5, {1, 2}) == Rng::derive(5, {1, 2}));
    CHECK(Rng::derive(5, {1, 2}) != Rng::derive(5, {2, 1}));
    CHECK(Rng::derive(5, {1, 2}) != Rng::derive(6, {1, 2}));
}

TEST_CASE("rng moments") {
    Rng r(7);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(std::abs(sn / n) < 4.0 / std::sqrt(n));
    CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("dataset validation") {
    CHECK_THROWS_AS(Dataset(Matrix(0, 2)), InvalidArgument);
    Matrix x = Matrix::Ones(3, 2);
    CHECK_THROWS_AS(Dataset(x, Vector::Ones(2)), InvalidArgument);
    x(0, 0) = NAN;
    CHECK_THROWS_AS(Dataset{x}, InvalidArgument);
    Dataset d(Matrix::Ones(3, 2), Vector::Ones(3));
    CHECK(d.n() == 3);
    CHECK(d.p() == 2);
    CHECK(d.labelled());
}

TEST_CASE("kernel names round trip") {
    for (auto k : {KernelKind::GlmLogistic, KernelKind::SignFlip, KernelKind::Staircase, KernelKind::GaussianNoise,
                   KernelKind::Deterministic})
        CHECK(kernel_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(kernel_kind_from_string("nope"), InvalidArgument);
    for (auto k : {SchemeKind::Random, SchemeKind::UnbiasedInfluence, SchemeKind::NonreweightOptimal,
                   SchemeKind::AlphaFamily, SchemeKind::TopkHard, SchemeKind::TopkEasy, SchemeKind::MinimaxDiscrete})
        CHECK(scheme_kind_from_string(to_string(k)) == k);
}

TEST_CASE("binary kernels") {
    const auto glm = LabelKernel::glm_logistic(1.0);
    CHECK(glm.prob_plus(0.0) == doctest::Approx(0.5));
    CHECK(glm.prob_plus(1.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
    CHECK(glm.conditional_mean(0.7) == doctest::Approx(std::tanh(0.7)));

    const auto sf = LabelKernel::sign_flip(0.9, 1.0);
    CHECK(sf.prob_plus(0.0) == 0.9);
    CHECK(sf.prob_plus(-1e-12) == doctest::Approx(0.1));
    CHECK(sf.breakpoints() == std::vector<double>{0.0});
    CHECK_THROWS_AS(LabelKernel::sign_flip(0.4, 1.0), InvalidArgument);

    const auto st = LabelKernel::staircase(0.95, 0.7, 5.0);
    CHECK(st.prob_plus(-0.6) == doctest::Approx(0.3));
    CHECK(st.prob_plus(-0.5) == doctest::Approx(0.05));
    CHECK(st.prob_plus(0.0) == doctest::Approx(0.95));
    CHECK(st.prob_plus(0.5) == doctest::Approx(0.7));
    CHECK(st.theta0_norm() == 5.0);
    CHECK(st.with_norm(2.0).theta0_norm() == 2.0);
}

TEST_CASE("kernel sampling matches conditional moments") {
    Rng rng(3);
    const int n = 100000;
    for (const auto& k : {LabelKernel::glm_logistic(1.0), LabelKernel::staircase(0.95, 0.7, 1.0),
                          LabelKernel::gaussian_noise(0.5, 1.0), LabelKernel::cubic(0.5, 1.0)}) {
        for (double z : {-0.7, 0.2, 1.3}) {
            double s = 0, s2 = 0;
            for (int i = 0; i < n; ++i) {
                const double y = sample_label(k, z, rng);
                s += y;
                s2 += y * y;
            }
            const double m = k.conditional_mean(z), m2 = k.conditional_second_moment(z);
            const double sd = std::sqrt(std::max(m2 - m * m, 1e-12) / n);
            CHECK(std::abs(s / n - m) <= 5.0 * sd + 1e-12);
        }
    }
}

TEST_CASE("label atoms") {
    LabelAtoms a;
    LabelKernel::sign_flip(1.0, 1.0).atoms(0.3, {}, {}, a);
    CHECK(a.y.size() == 1);
    CHECK(a.y[0] == 1.0);
    LabelKernel::glm_logistic(1.0).atoms(0.3, {}, {}, a);
    CHECK(a.y.size() == 2);
    CHECK(a.prob[0] + a.prob[1] == doctest::Approx(1.0));
    LabelKernel::cubic(0.5, 1.0).atoms(2.0, {}, {}, a);
    CHECK(a.y.size() == 1);
    CHECK(a.y[0] == doctest::Approx(2.0 + 0.5 * (8.0 - 6.0)));
}

TEST_CASE("losses and derivatives") {
    const LossFunction sq{LossKind::Square, TestKind::SameAsTrain};
    const LossFunction lg{LossKind::Logistic, TestKind::Misclassification};
    CHECK(sq.value(1.0, 3.0) == doctest::Approx(2.0));
    CHECK(lg.value(0.0, 1.0) == doctest::Approx(std::log(2.0)));
    CHECK(log_cosh2(800.0) == doctest::Approx(800.0));
    CHECK(std::isfinite(log_cosh2(-1e6)));
    for (double u : {-3.0, -0.4, 0.0, 0.9, 5.0})
        for (double y : {-1.0, 1.0}) {
            const double h = 1e-5;
            for (const auto& L : {sq, lg}) {
                CHECK(L.d1(u, y) == doctest::Approx((L.value(u + h, y) - L.value(u - h, y)) / (2 * h)).epsilon(1e-6));
                CHECK(L.d2(u, y) == doctest::Approx((L.d1(u + h, y) - L.d1(u - h, y)) / (2 * h)).epsilon(1e-6));
            }
        }
    CHECK(lg.test_value(-0.1, 1.0) == 1.0);
    CHECK(lg.test_value(0.1, 1.0) == 0.0);
    CHECK(sq.test_value(0.0, 2.0) == doctest::Approx(2.0));
}

TEST_CASE("phi'' equals 4 p (1 - p)") {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double z = 6.0 * (rng.uniform() - 0.5);
        const double p = 1.0 / (1.0 + std::exp(-2.0 * z));
        CHECK(phi2(z) == doctest::Approx(4.0 * p * (1.0 - p)).epsilon(1e-12));
    }
}

TEST_CASE("surrogate decomposition") {
    Vector th0(3), su(3);
    th0 << 2.0, 0.0, 0.0;
    su << 0.5, 0.3, -0.4;
    const Decomposition d = surrogate_decompose(su, th0);
    CHECK(d.beta0 == doctest::Approx(0.5));
    CHECK(d.beta_s == doctest::Approx(0.5));
    CHECK(surrogate_decompose(th0 / 2.0, th0).beta_s == doctest::Approx(0.0));
}

TEST_CASE("selection rules") {
    const auto r = SelectionRule::random(0.3, true);
    CHECK(r.pi(12.0) == 0.3);
    CHECK(r.weight(0.0) == doctest::Approx(1.0 / 0.3));
    CHECK(SelectionRule::random(0.3, false).weight(0.0) == 1.0);

    const auto u = SelectionRule::unbiased(0.5, 2.0);
    CHECK(u.pi(0.01) == doctest::Approx(0.2));
    CHECK(u.pi(4.0) == 1.0);
    CHECK(u.weight(0.0) == 0.0);

    const auto nr = SelectionRule::nonreweight(0.5, 1.0, 0.25);
    CHECK(nr.pi(2.0) == 1.0);
    CHECK(nr.pi(0.5) == 0.0);
    CHECK(nr.pi(1.0) == 0.25);
    CHECK(nr.weight(2.0) == 1.0);

    const auto a0 = SelectionRule::alpha_family(0.4, 0.0, 0.4, false);
    CHECK(a0.pi(0.01) == doctest::Approx(0.4));
    const auto a1 = SelectionRule::alpha_family(0.4, 1.0, 2.0, true);
    CHECK(a1.pi(0.25) == doctest::Approx(0.5));
    CHECK(a1.weight(0.25) == doctest::Approx(2.0));
    CHECK(a1.pi(0.0) == 0.0);
    CHECK(SelectionRule::alpha_family(0.4, -1.0, 0.1, false).pi(0.0) == 1.0);

    const auto hard = SelectionRule::topk(SchemeKind::TopkHard, 0.5, 0.5, 0.0, false);
    const auto easy = SelectionRule::topk(SchemeKind::TopkEasy, 0.5, 0.5, 0.0, false);
    CHECK(hard.pi(0.9) == 1.0);
    CHECK(easy.pi(0.9) == 0.0);
    CHECK(easy.pi(0.1) == 1.0);

    const auto mm = SelectionRule::minimax(0.5, {0.2, 0.8});
    CHECK(mm.pi(1.0) == 0.8);
    CHECK_THROWS_AS(mm.pi(2.0), InvalidArgument);
}

TEST_CASE("rule sampling has mean pi") {
    Rng rng(5);
    const auto r = SelectionRule::alpha_family(0.5, 1.0, 1.0, true);
    const int n = 200000;
    double s = 0.0;
    int kept = 0;
    for (int i = 0; i < n; ++i) {
        const double v = r.sample(0.3, rng);
        s += v;
        kept += v > 0.0;
    }
    CHECK(static_cast<double>(kept) / n == doctest::Approx(0.3).epsilon(0.02));
    CHECK(s / n == doctest::Approx(1.0).epsilon(0.02));   // unbiased: E S = 1
}

TEST_CASE("estimation metric validation") {
    Matrix q(2, 2);
    q << 1, 2, 0, 1;
    CHECK_THROWS_AS(EstimationMetric(q, MetricKind::Custom), InvalidArgument);
    q << 1, 0, 0, -1;
    CHECK_THROWS_AS(EstimationMetric(q, MetricKind::Custom), InvalidArgument);
    CHECK(EstimationMetric::identity(3).Q.isIdentity());
}
