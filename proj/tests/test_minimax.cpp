#include <doctest.h>

#include "sublab/minimax.hpp"
#include "sublab/numerics.hpp"

#include <algorithm>
#include <cmath>

using namespace sublab;
using namespace sublab::minimax;

namespace {

DiscreteMinimaxSpec random_spec(Rng& rng) {
    DiscreteMinimaxSpec s;
    const int k = 2 + static_cast<int>(rng.uniform() * 5.0);   // 2..6
    s.p.resize(k);
    s.q.resize(k);
    s.theta_su.resize(k);
    for (int x = 0; x < k; ++x) {
        s.p(x) = 0.1 + rng.uniform();
        s.q(x) = 0.2 + 2.0 * rng.uniform();
        s.theta_su(x) = 0.05 + 0.9 * rng.uniform();
    }
    s.p /= s.p.sum();
    s.eps = 0.2 * rng.uniform();
    s.gamma = 0.1 + 0.6 * rng.uniform();
    return s;
}

// pi in [0,1]^k with sum p pi = gamma
Vector random_feasible(const DiscreteMinimaxSpec& s, Rng& rng) {
    Vector u(s.k());
    for (Eigen::Index x = 0; x < s.k(); ++x) u(x) = 0.05 + rng.uniform();
    auto mass = [&](double c) { return s.p.dot((c * u).cwiseMin(1.0)); };
    const double c = bisect_monotone(mass, s.gamma, 0.0, 1e3, 1e-14);
    return (c * u).cwiseMin(1.0);
}

// projected gradient on {sum p pi = gamma, lo <= pi <= 1}
Vector brute_force_pi(const DiscreteMinimaxSpec& s, const Vector& theta) {
    const Eigen::Index k = s.k();
    Vector a(k);
    for (Eigen::Index x = 0; x < k; ++x) a(x) = theta(x) * (1 - theta(x)) * s.q(x) / s.p(x);
    auto project = [&](const Vector& v) {
        auto mass = [&](double t) { return s.p.dot((v.array() + t).min(1.0).max(1e-6).matrix()); };
        const double t = bisect_monotone(mass, s.gamma, -1e3, 1e3, 1e-15);
        return Vector((v.array() + t).min(1.0).max(1e-6).matrix());
    };
    Vector pi = Vector::Constant(k, s.gamma);
    for (int it = 0; it < 200000; ++it) {
        const Vector g = -(a.array() / pi.array().square()).matrix();
        const double step = 1e-3 / (1.0 + g.cwiseAbs().maxCoeff() * 1e-2);
        pi = project(pi - step * g.cwiseQuotient(s.p));
    }
    return pi;
}

}  // namespace

TEST_CASE("box below one half moves every level up by eps") {
    DiscreteMinimaxSpec s;
    s.p = Vector::Constant(3, 1.0 / 3.0);
    s.q = Vector::Ones(3);
    s.theta_su = Vector(3);
    s.theta_su << 0.1, 0.2, 0.35;
    s.eps = 0.1;
    s.gamma = 0.4;
    const ThetaMM t = solve_theta_mm(s);
    for (int x = 0; x < 3; ++x) CHECK(t.theta(x) == doctest::Approx(s.theta_su(x) + 0.1));
    s.eps = 0.0;
    CHECK((solve_theta_mm(s).theta - s.theta_su).norm() == doctest::Approx(0.0));
}

TEST_CASE("symmetric spec") {
    DiscreteMinimaxSpec s;
    s.p = Vector::Constant(2, 0.5);
    s.q = Vector::Ones(2);
    s.theta_su = Vector(2);
    s.theta_su << 0.45, 0.55;
    s.eps = 0.1;
    s.gamma = 0.6;
    const ThetaMM t = solve_theta_mm(s);
    CHECK(t.theta(0) == doctest::Approx(0.5));
    CHECK(t.theta(1) == doctest::Approx(0.5));
    const MinimaxPi m = minimax_pi(s, t.theta);
    CHECK(m.pi(0) == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(m.pi(1) == doctest::Approx(0.6).epsilon(1e-10));
    CHECK(m.rule.pi(0.0) == doctest::Approx(0.6));
}

TEST_CASE("zero uncertainty level is never selected") {
    DiscreteMinimaxSpec s;
    s.p = Vector::Constant(3, 1.0 / 3.0);
    s.q = Vector::Ones(3);
    s.theta_su = Vector(3);
    s.theta_su << 0.0, 0.3, 0.6;
    s.gamma = 0.3;
    const MinimaxPi m = minimax_pi(s, s.theta_su);
    CHECK(m.pi(0) == 0.0);
    CHECK(s.p.dot(m.pi) == doctest::Approx(0.3).epsilon(1e-10));
    s.theta_su << 0.0, 1.0, 0.0;
    CHECK_THROWS_AS(minimax_pi(s, s.theta_su), InvalidArgument);
}

TEST_CASE("pi matches a projected gradient oracle") {
    DiscreteMinimaxSpec s;
    s.p = Vector(3);
    s.p << 0.5, 0.3, 0.2;
    s.q = Vector(3);
    s.q << 1.0, 3.0, 0.5;
    s.theta_su = Vector(3);
    s.theta_su << 0.2, 0.5, 0.9;
    s.eps = 0.05;
    s.gamma = 0.45;
    const ThetaMM t = solve_theta_mm(s);
    const MinimaxPi m = minimax_pi(s, t.theta);
    const Vector oracle = brute_force_pi(s, t.theta);
    for (int x = 0; x < 3; ++x) CHECK(m.pi(x) == doctest::Approx(oracle(x)).epsilon(1e-4));
    CHECK(rho(s, m.pi, t.theta) <= rho(s, oracle, t.theta) + 1e-10);
}

TEST_CASE("saddle inequalities and plugin dominance on random specs") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        const DiscreteMinimaxSpec s = random_spec(rng);
        CAPTURE(trial);
        const ThetaMM t = solve_theta_mm(s);
        const MinimaxPi m = minimax_pi(s, t.theta);
        CHECK(s.p.dot(m.pi) == doctest::Approx(s.gamma).epsilon(1e-10));
        const double at_saddle = rho(s, m.pi, t.theta);
        for (int i = 0; i < 100; ++i) {
            Vector th(s.k());
            for (Eigen::Index x = 0; x < s.k(); ++x) th(x) = s.lower(x) + rng.uniform() * (s.upper(x) - s.lower(x));
            CHECK(rho(s, m.pi, th) <= at_saddle + 1e-12);
            CHECK(rho(s, random_feasible(s, rng), t.theta) >= at_saddle - 1e-12);
        }
        // per-coordinate grid at 1e-4
        for (Eigen::Index x = 0; x < s.k(); ++x) {
            double best = s.lower(x), fb = -1.0;
            for (double v = s.lower(x); v <= s.upper(x) + 1e-12; v += 1e-4) {
                const double f = v * (1.0 - v);
                if (f > fb) { fb = f; best = v; }
            }
            CHECK(t.theta(x) == doctest::Approx(best).epsilon(1e-4));
        }
        const Vector plugin = minimax_pi(s, s.theta_su).pi;
        CHECK(worst_case_rho(s, m.pi) <= worst_case_rho(s, plugin) + 1e-12);
        CHECK(worst_case_rho(s, m.pi) == doctest::Approx(at_saddle).epsilon(1e-12));
    }
}

TEST_CASE("spec validation") {
    DiscreteMinimaxSpec s;
    s.p = Vector::Constant(2, 0.4);
    s.q = Vector::Ones(2);
    s.theta_su = Vector::Constant(2, 0.5);
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    s.p = Vector::Constant(2, 0.5);
    s.eps = -1.0;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
}
