#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "rdx/model.hpp"
#include "rdx/rng.hpp"

using namespace rdx;

namespace {

HouseholdType make_type(double alpha, double gamma, double income, double theta = 1.0) {
    HouseholdType t;
    t.alpha = alpha;
    t.gamma = gamma;
    t.beta = 1.0 - alpha - gamma;
    t.income = income;
    t.mass = 0.25;
    t.theta = theta;
    return t;
}

// Reference softmax over [v; 0] for the shift-invariance checks.
Eigen::VectorXd softmax_with_outside(const Eigen::VectorXd& v, double theta, double shift) {
    Eigen::VectorXd z(v.size() + 1);
    for (int j = 0; j < v.size(); ++j) z[j] = (v[j] + shift) / theta;
    z[v.size()] = shift / theta;
    const double zmax = z.maxCoeff();
    Eigen::VectorXd e = (z.array() - zmax).exp();
    return e / e.sum();
}

}  // namespace

TEST_CASE("systematic utility closed form") {
    // All logs of one.
    auto t = make_type(1.0, 1.0, 2.0);
    CHECK(model::systematic_utility(t, 0.0, 1.0, 1.0, 0.5, 1.0, 0.0) == doctest::Approx(0.0));

    // Hand evaluation with congestion: v = 0.35 * log(0.25).
    auto t2 = make_type(0.55, 0.35, 0.45);
    const double v = model::systematic_utility(t2, 0.0, 1.0, 1.0, 0.1, 1.0, 1.0);
    CHECK(v == doctest::Approx(0.35 * std::log(0.25)).epsilon(1e-12));

    // Boundary: disposable income exactly zero.
    auto t3 = make_type(0.5, 0.5, 1.0);
    CHECK_THROWS_AS(model::systematic_utility(t3, 0.0, 1.0, 1.0, 0.5, 1.0, 0.0),
                    NonpositiveDisposableIncome);
    CHECK_THROWS_AS(model::systematic_utility(t3, 0.0, 0.0, 1.0, 0.1, 1.0, 0.0),
                    NonpositiveSpending);
}

TEST_CASE("choice probabilities: closed form and symmetry") {
    Eigen::VectorXd v1(1);
    v1 << 0.0;
    auto p = model::choice_probabilities(v1, 1.0);
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-14));

    v1 << 1.0;
    p = model::choice_probabilities(v1, 1.0);
    CHECK(p[0] == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))).epsilon(1e-14));

    Eigen::VectorXd v2(2);
    v2 << 0.0, 0.0;
    p = model::choice_probabilities(v2, 1.0);
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("choice probabilities: sum to one, shift invariance, argmax") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform() * 6);
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, 50.0);
        const double theta = 0.25 + rng.uniform() * 3.0;
        const auto p = model::choice_probabilities(v, theta);
        CHECK(std::fabs(p.sum() - 1.0) < 1e-12);
        CHECK((p.array() >= 0.0).all());

        const auto ref = softmax_with_outside(v, theta, 0.0);
        const auto shifted = softmax_with_outside(v, theta, 123.4);
        for (int i = 0; i <= n; ++i) {
            CHECK(p[i] == doctest::Approx(ref[i]).epsilon(1e-10));
            CHECK(p[i] == doctest::Approx(shifted[i]).epsilon(1e-10));
        }

        int argmax_v = 0;
        for (int i = 1; i < n; ++i)
            if (v[i] > v[argmax_v]) argmax_v = i;
        int argmax_p = 0;
        for (int i = 1; i < n; ++i)
            if (p[i] > p[argmax_p]) argmax_p = i;
        CHECK(argmax_v == argmax_p);
    }

    // Overflow safety at extreme utilities.
    Eigen::VectorXd big(2);
    big << 5000.0, -5000.0;
    const auto p = model::choice_probabilities(big, 1.0);
    CHECK(p[0] == doctest::Approx(1.0));
    CHECK(std::isfinite(p.sum()));
}

TEST_CASE("choice probabilities match Gumbel-draw frequencies") {
    Eigen::VectorXd v(3);
    v << 0.3, -0.4, 0.9;
    const double theta = 0.7;
    const auto p = model::choice_probabilities(v, theta);

    Rng rng(42);
    const int draws = 1000000;
    Eigen::VectorXd freq = Eigen::VectorXd::Zero(4);
    for (int d = 0; d < draws; ++d) {
        int best = 3;
        double best_u = rng.gumbel(theta);  // outside option, utility 0
        for (int j = 0; j < 3; ++j) {
            const double u = v[j] + rng.gumbel(theta);
            if (u > best_u) {
                best_u = u;
                best = j;
            }
        }
        freq[best] += 1.0;
    }
    freq /= draws;
    for (int i = 0; i < 4; ++i) {
        const double se = std::sqrt(p[i] * (1.0 - p[i]) / draws);
        CHECK(std::fabs(freq[i] - p[i]) < 3.0 * se);
    }
}

TEST_CASE("market clearing price and housing") {
    auto cp = model::market_clearing_price(1.0, 0.0, 0.6, 0.0);
    CHECK(cp.price == doctest::Approx(1.0));
    CHECK(cp.housing == doctest::Approx(1.0));

    cp = model::market_clearing_price(std::exp(0.6), 0.0, 0.6, 0.0);
    CHECK(std::log(cp.price) == doctest::Approx(1.0).epsilon(1e-12));

    // Round trip through the supply curve.
    cp = model::market_clearing_price(0.37, -0.2, 0.8, 0.05);
    const double log_h = model::housing_supply_log(std::log(cp.price), -0.2, 0.8, 0.05);
    CHECK(log_h == doctest::Approx(std::log(0.37)).epsilon(1e-12));
    CHECK(cp.housing == doctest::Approx(0.37));

    CHECK_THROWS_AS(model::market_clearing_price(0.0, 0.0, 0.6, 0.0), NonpositivePopulation);
}

TEST_CASE("balanced budget tax") {
    CHECK(model::balanced_budget_tax(1.0, 1.0, 1.0) == doctest::Approx(1.0));
    CHECK(model::balanced_budget_tax(0.05, 0.5, 0.2) == doctest::Approx(0.5).epsilon(1e-14));
    const double tau = model::balanced_budget_tax(0.123, 0.7, 0.9);
    CHECK(tau * 0.7 * 0.9 == doctest::Approx(0.123).epsilon(1e-14));
    CHECK_THROWS_AS(model::balanced_budget_tax(-1.0, 1.0, 1.0), NonpositiveInput);
}

TEST_CASE("government possibility frontier slopes") {
    // Myopic closed forms.
    auto s = model::gpf_slopes_from_hats(0.0, 0.0, 0.6, 1.0, 1.0, 0.1);
    CHECK(s.dlogP_dlogG == doctest::Approx(0.0));
    CHECK(s.dlog1ptau_dlogG == doctest::Approx(0.5).epsilon(1e-12));

    s = model::gpf_slopes_from_hats(0.0, 0.0, 0.6, 0.25, 1.0, 0.1);
    CHECK(s.dlog1ptau_dlogG == doctest::Approx(0.2).epsilon(1e-12));

    // dtau/dlogG = tau: (1+tau) dlog(1+tau)/dlogG == tau for a grid of tau.
    for (double tau : {0.05, 0.3, 0.8, 2.0, 7.5}) {
        s = model::gpf_slopes_from_hats(0.0, 0.0, 1.3, tau, 0.0, 1.0);
        CHECK((1.0 + tau) * s.dlog1ptau_dlogG == doctest::Approx(tau).epsilon(1e-12));
    }

    // General mode with vanishing aggregate terms reduces to myopic.
    for (double tau : {0.2, 1.0, 3.0}) {
        const auto gen = model::gpf_slopes_from_hats(0.0, 0.0, 0.6, tau, 1.0, 0.25);
        CHECK(gen.dlogP_dlogG == doctest::Approx(0.0));
        CHECK(gen.dlog1ptau_dlogG == doctest::Approx(tau / (1.0 + tau)).epsilon(1e-12));
    }

    // Nonzero aggregates bend the frontier: prices respond to spending.
    const auto gen = model::gpf_slopes_from_hats(0.05, 0.02, 0.6, 1.0, 1.0, 0.1);
    CHECK(gen.dlogP_dlogG > 0.0);
}

TEST_CASE("preferred tax rate and second-order condition") {
    auto t = make_type(0.2, 0.3, 1.0);
    CHECK(model::preferred_tax_rate(t, 2.0) == doctest::Approx(0.5).epsilon(1e-14));

    // gamma * rho == alpha exactly: no interior solution.
    auto t2 = make_type(0.6, 0.3, 1.0);
    CHECK(std::isinf(model::preferred_tax_rate(t2, 2.0)));

    CHECK_THROWS_AS(model::preferred_tax_rate(t, 0.0), NonpositiveInput);

    // Finite-difference second derivative of V(log G) along the myopic
    // frontier is negative at the interior optimum.
    Rng rng(11);
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const double alpha = 0.05 + rng.uniform() * 0.6;
        const double gamma = 0.05 + rng.uniform() * 0.6;
        const double income = 0.4 + rng.uniform();
        const double price = 0.02 + rng.uniform() * 0.3;
        const double housing = 0.05 + rng.uniform();
        if (income <= price) continue;
        // Interior optimum along the frontier: gamma P tau = alpha (y - P(1+tau)).
        const double tau_star = alpha * (income - price) / (price * (alpha + gamma));
        if (!(tau_star > 1e-3)) continue;
        const double g_star = tau_star * price * housing;

        // Fixed point of the closed form at the optimum's own rho.
        auto ht = make_type(alpha, gamma, income);
        const double rho_star = price * (1.0 + tau_star) / (income - price * (1.0 + tau_star));
        CHECK(model::preferred_tax_rate(ht, rho_star) == doctest::Approx(tau_star).epsilon(1e-8));

        auto value = [&](double log_g) {
            const double g = std::exp(log_g);
            const double tau = g / (price * housing);
            const double disp = income - price * (1.0 + tau);
            if (!(disp > 0.0)) return -1e300;
            return alpha * log_g + gamma * std::log(disp);
        };
        const double h = 1e-4;
        const double lg = std::log(g_star);
        const double second = (value(lg + h) - 2.0 * value(lg) + value(lg - h)) / (h * h);
        CHECK(second < 0.0);
        ++checked;
    }
    CHECK(checked > 100);
}

TEST_CASE("myopic vote delta") {
    // One-district state assembled by hand.
    EquilibriumState st;
    st.price = Eigen::VectorXd::Constant(1, 0.15);
    st.housing = Eigen::VectorXd::Constant(1, 0.4);
    st.spending = Eigen::VectorXd::Constant(1, 0.06);
    st.tax = Eigen::VectorXd::Constant(1, 0.06 / (0.15 * 0.4));
    st.pop_total = Eigen::VectorXd::Constant(1, 0.4);
    st.pop = Eigen::MatrixXd::Constant(1, 1, 0.4);

    auto t = make_type(0.3, 0.4, 0.6);
    CHECK(model::myopic_vote_delta(t, st, 0, 0.0) == doctest::Approx(0.0));

    // Closed form: dv = alpha dlogG + gamma (log disp' - log disp).
    const double dlg = 0.17;
    const double tau1 = st.spending[0] * std::exp(dlg) / (st.price[0] * st.housing[0]);
    const double expect =
        0.3 * dlg + 0.4 * (std::log(0.6 - 0.15 * (1.0 + tau1)) -
                           std::log(0.6 - 0.15 * (1.0 + st.tax[0])));
    CHECK(model::myopic_vote_delta(t, st, 0, dlg) == doctest::Approx(expect).epsilon(1e-12));

    // Strict concavity in dlogG on a grid.
    const double h = 1e-4;
    for (double x : {0.01, 0.1, 0.3, 0.6}) {
        const double second = (model::myopic_vote_delta(t, st, 0, x + h) -
                               2.0 * model::myopic_vote_delta(t, st, 0, x) +
                               model::myopic_vote_delta(t, st, 0, x - h)) /
                              (h * h);
        CHECK(second < 0.0);
    }

    // Counterfactual gross-of-tax price above income.
    auto poor = make_type(0.3, 0.4, 0.17);
    CHECK_THROWS_AS(model::myopic_vote_delta(poor, st, 0, 2.5), NonpositiveDisposableIncome);
}
