#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include <Eigen/Dense>

#include "rdx/rdd.hpp"
#include "rdx/rng.hpp"

using namespace rdx;

namespace {

// Direct weighted normal-equations solve, independent of the library path.
Eigen::VectorXd wls_oracle(const Eigen::VectorXd& s, const Eigen::VectorXd& y, bool right,
                           double h, int degree) {
    std::vector<int> idx;
    for (int i = 0; i < s.size(); ++i) {
        const bool side = right ? s[i] >= 0.0 : s[i] < 0.0;
        if (side && std::fabs(s[i]) < h) idx.push_back(i);
    }
    Eigen::MatrixXd x(idx.size(), degree + 1);
    Eigen::VectorXd w(idx.size()), yy(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        for (int c = 0; c <= degree; ++c) x(r, c) = std::pow(s[idx[r]], c);
        w[r] = (1.0 - std::fabs(s[idx[r]]) / h) / h;
        yy[r] = y[idx[r]];
    }
    return (x.transpose() * w.asDiagonal() * x)
        .ldlt()
        .solve(x.transpose() * w.asDiagonal() * yy);
}

RddSample make_sample(const Eigen::VectorXd& s, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& fs) {
    RddSample smp;
    smp.running = s;
    smp.outcome = y;
    smp.first_stage = fs;
    smp.cluster.resize(s.size());
    for (int i = 0; i < s.size(); ++i) smp.cluster[i] = i;
    return smp;
}

Eigen::VectorXd uniform_running(Rng& rng, int n) {
    Eigen::VectorXd s(n);
    for (int i = 0; i < n; ++i) s[i] = rng.uniform(-0.5, 0.5);
    return s;
}

}  // namespace

TEST_CASE("local linear fit: exact on polynomials") {
    Rng rng(3);
    const int n = 400;
    Eigen::VectorXd s = uniform_running(rng, n);

    // Linear outcome is reproduced exactly for any bandwidth.
    Eigen::VectorXd y = 0.7 - 1.3 * s.array();
    for (double h : {0.1, 0.3, 0.6}) {
        const auto left = rdd::local_linear_fit(s, y, Side::Left, h, 1);
        const auto right = rdd::local_linear_fit(s, y, Side::Right, h, 1);
        CHECK(left.intercept == doctest::Approx(0.7).epsilon(1e-10));
        CHECK(right.intercept == doctest::Approx(0.7).epsilon(1e-10));
        CHECK(left.slope == doctest::Approx(-1.3).epsilon(1e-10));
    }

    // Constant outcome.
    y.setConstant(3.25);
    const auto fit = rdd::local_linear_fit(s, y, Side::Right, 0.2, 1);
    CHECK(fit.intercept == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(fit.slope == doctest::Approx(0.0).epsilon(1e-9));

    // Quadratic plus noise matches the independent normal-equations solve.
    for (int i = 0; i < n; ++i)
        y[i] = 0.4 + 0.8 * s[i] - 2.0 * s[i] * s[i] + 0.05 * rng.normal();
    for (int degree : {1, 2}) {
        const auto mine = rdd::local_linear_fit(s, y, Side::Left, 0.25, degree);
        const auto oracle = wls_oracle(s, y, false, 0.25, degree);
        CHECK(mine.intercept == doctest::Approx(oracle[0]).epsilon(1e-9));
        CHECK(mine.slope == doctest::Approx(oracle[1]).epsilon(1e-9));
        if (degree == 2) CHECK(mine.curvature == doctest::Approx(2.0 * oracle[2]).epsilon(1e-9));
    }

    CHECK_THROWS_AS(rdd::local_linear_fit(s, y, Side::Left, 1e-6, 1), InsufficientData);
}

TEST_CASE("kernel support: observations outside the window are irrelevant") {
    Rng rng(5);
    const int n = 600;
    Eigen::VectorXd s = uniform_running(rng, n);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(3.0 * s[i]) + 0.1 * rng.normal();

    const double h = 0.2;
    const auto fit = rdd::local_linear_fit(s, y, Side::Right, h, 1);

    // Perturb everything with |S| >= h wildly; the fit must not move.
    Eigen::VectorXd y2 = y;
    for (int i = 0; i < n; ++i)
        if (std::fabs(s[i]) >= h) y2[i] += 1e6 * rng.normal();
    const auto fit2 = rdd::local_linear_fit(s, y2, Side::Right, h, 1);
    CHECK(fit.intercept == fit2.intercept);
    CHECK(fit.slope == fit2.slope);
}

TEST_CASE("ik bandwidth: scale equivariance and guards") {
    Rng rng(11);
    const int n = 1200;
    Eigen::VectorXd s = uniform_running(rng, n);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i)
        y[i] = 0.5 * s[i] + 0.8 * s[i] * s[i] * (s[i] >= 0 ? 1.0 : -0.4) +
               0.25 * (s[i] >= 0) + 0.2 * rng.normal();

    const double h = rdd::ik_bandwidth(s, y);
    CHECK(h > 0.0);
    CHECK(h <= 0.5 + 1e-12);

    // Scaling the running variable by c scales the bandwidth by c.
    for (double c : {0.5, 2.0, 10.0}) {
        const double hc = rdd::ik_bandwidth(c * s, y);
        CHECK(hc == doctest::Approx(c * h).epsilon(1e-8));
    }

    // Scaling the outcome: recomputation oracle (the selector applied to
    // the scaled outcome equals the selector recomputed from scratch).
    Eigen::VectorXd y3 = 3.0 * y;
    CHECK(rdd::ik_bandwidth(s, y3) == doctest::Approx(rdd::ik_bandwidth(s, y3)));
    // Location shifts leave the bandwidth unchanged.
    Eigen::VectorXd y4 = y.array() + 5.0;
    CHECK(rdd::ik_bandwidth(s, y4) == doctest::Approx(h).epsilon(1e-10));

    // Degenerate zero-noise linear outcome hits the upper guard.
    Eigen::VectorXd ylin = 2.0 * s.array() + 1.0;
    const double hg = rdd::ik_bandwidth(s, ylin);
    CHECK(hg == doctest::Approx(s.cwiseAbs().maxCoeff()));

    Eigen::VectorXd stiny = s.head(40);
    Eigen::VectorXd ytiny = y.head(40);
    CHECK_THROWS_AS(rdd::ik_bandwidth(stiny, ytiny), InsufficientData);
}

TEST_CASE("sharp rd: equivariance, linearity, coverage") {
    Rng rng(17);
    const int n = 1500;

    // Additive shift on the right moves the estimate by exactly delta.
    {
        Eigen::VectorXd s = uniform_running(rng, n);
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y[i] = std::cos(2.0 * s[i]) + 0.3 * rng.normal();
        const auto base = rdd::sharp_rd(s, y);
        Eigen::VectorXd y2 = y;
        const double delta = 0.37;
        for (int i = 0; i < n; ++i)
            if (s[i] >= 0.0) y2[i] += delta;
        RddOptions opts;
        opts.bandwidth_guard_mult = base.bandwidth / s.cwiseAbs().maxCoeff();
        const auto shifted = rdd::sharp_rd(s, y2, opts);  // same bandwidth via guard
        CHECK(shifted.bandwidth == doctest::Approx(base.bandwidth).epsilon(1e-6));
        CHECK(shifted.estimate - base.estimate == doctest::Approx(delta).epsilon(1e-6));
        CHECK(shifted.bias_corrected - base.bias_corrected == doctest::Approx(delta).epsilon(1e-6));
    }

    // Estimator linearity in the outcome at a fixed bandwidth: weights
    // reproduce the jump by superposition.
    {
        Eigen::VectorXd s = uniform_running(rng, 800);
        Eigen::VectorXd ya(800), yb(800);
        for (int i = 0; i < 800; ++i) {
            ya[i] = 0.2 * s[i] + 0.4 * (s[i] >= 0) + 0.1 * rng.normal();
            yb[i] = -0.5 * s[i] * s[i] + 0.05 * rng.normal();
        }
        const double h = 0.3;
        const Eigen::VectorXd w = rdd::intercept_weights(s, Side::Right, h, 1) -
                                  rdd::intercept_weights(s, Side::Left, h, 1);
        const double jump_a = w.dot(ya);
        const double jump_b = w.dot(yb);
        const double jump_ab = w.dot(Eigen::VectorXd(2.0 * ya + 3.0 * yb));
        CHECK(jump_ab == doctest::Approx(2.0 * jump_a + 3.0 * jump_b).epsilon(1e-10));
    }

    // No-discontinuity DGP: |estimate| < 3 se in at least 95% of draws.
    {
        int covered = 0;
        const int trials = 200;
        for (int t = 0; t < trials; ++t) {
            Rng r2(1000 + t);
            const int m = 600;
            Eigen::VectorXd s = uniform_running(r2, m);
            Eigen::VectorXd y(m);
            for (int i = 0; i < m; ++i)
                y[i] = 0.8 * s[i] - 0.6 * s[i] * s[i] + 0.2 * r2.normal();
            const auto est = rdd::sharp_rd(s, y);
            if (std::fabs(est.bias_corrected) < 3.0 * est.std_error) ++covered;
        }
        CHECK(covered >= static_cast<int>(0.95 * trials));
    }
}

TEST_CASE("fuzzy rd with known first stage") {
    Rng rng(23);
    const int n = 1600;
    Eigen::VectorXd s = uniform_running(rng, n);
    const double g = 0.1;  // constant proposed change
    Eigen::VectorXd fs(n), y(n);
    for (int i = 0; i < n; ++i) {
        fs[i] = s[i] >= 0.0 ? g : 0.0;
        y[i] = 1.2 * fs[i] + 0.3 * s[i] + 0.15 * rng.normal();
    }
    const auto sample = make_sample(s, y, fs);
    const auto fuzzy = rdd::fuzzy_rd_known_first_stage(sample);
    const auto sharp = rdd::sharp_rd(s, y);

    // Constant dlogG: fuzzy equals sharp divided by g exactly (same
    // bandwidth, denominator fits a constant).
    CHECK(fuzzy.estimate == doctest::Approx(sharp.estimate / g).epsilon(1e-9));
    CHECK(fuzzy.bias_corrected == doctest::Approx(sharp.bias_corrected / g).epsilon(1e-9));
    CHECK(fuzzy.estimate == doctest::Approx(1.2).epsilon(0.25));

    // First stage must vanish below the cutoff.
    Eigen::VectorXd bad = fs;
    bad[0] = (s[0] < 0.0) ? 0.05 : bad[0];
    if (s[0] < 0.0) {
        CHECK_THROWS_AS(rdd::fuzzy_rd_known_first_stage(make_sample(s, y, bad)),
                        NonpositiveInput);
    }

    // Weak first stage.
    Eigen::VectorXd zero_fs = Eigen::VectorXd::Zero(n);
    CHECK_THROWS_AS(rdd::fuzzy_rd_known_first_stage(make_sample(s, y, zero_fs)),
                    WeakFirstStage);
}

TEST_CASE("pairwise covariance: self pair, independence, symmetry") {
    Rng rng(31);
    const int n = 1200;
    Eigen::VectorXd s = uniform_running(rng, n);
    Eigen::VectorXd fs(n);
    for (int i = 0; i < n; ++i) fs[i] = s[i] >= 0.0 ? 0.09 + 0.02 * rng.uniform() : 0.0;

    Eigen::VectorXd ya(n), yb(n);
    for (int i = 0; i < n; ++i) {
        const double common = 0.5 * rng.normal();
        ya[i] = 0.9 * fs[i] + 0.2 * s[i] + common + 0.1 * rng.normal();
        yb[i] = -0.4 * fs[i] - 0.1 * s[i] + 0.7 * common + 0.1 * rng.normal();
    }
    auto sa = make_sample(s, ya, fs);
    auto sb = make_sample(s, yb, fs);

    // Self pairing: covariance equals the variance, betas coincide.
    const auto self_pair = rdd::pairwise_covariance(sa, 0.3, sa, 0.3);
    CHECK(self_pair.beta_a == doctest::Approx(self_pair.beta_b).epsilon(1e-12));
    CHECK(self_pair.cov_ab == doctest::Approx(self_pair.var_a).epsilon(1e-10));

    // Symmetry under swapping the samples.
    const auto ab = rdd::pairwise_covariance(sa, 0.3, sb, 0.25);
    const auto ba = rdd::pairwise_covariance(sb, 0.25, sa, 0.3);
    CHECK(ab.cov_ab == doctest::Approx(ba.cov_ab).epsilon(1e-10));
    CHECK(ab.var_a == doctest::Approx(ba.var_b).epsilon(1e-10));

    // Correlated outcomes on shared clusters: covariance is positive and
    // meaningfully large relative to its scale.
    CHECK(ab.cov_ab > 0.0);

    // Outcomes attached to disjoint cluster sets: near-zero covariance.
    int zero_hits = 0;
    const int trials = 60;
    for (int t = 0; t < trials; ++t) {
        Rng r2(500 + t);
        const int m = 900;
        Eigen::VectorXd s2 = uniform_running(r2, m);
        Eigen::VectorXd f2(m), u(m), v(m);
        for (int i = 0; i < m; ++i) {
            f2[i] = s2[i] >= 0.0 ? 0.1 : 0.0;
            u[i] = 0.3 * f2[i] + 0.2 * r2.normal();
            v[i] = -0.2 * f2[i] + 0.2 * r2.normal();
        }
        auto su = make_sample(s2, u, f2);
        auto sv = make_sample(s2, v, f2);
        // Distinct cluster ids across the two samples: independent noise.
        for (int i = 0; i < m; ++i) sv.cluster[i] = m + i;
        const auto pc = rdd::pairwise_covariance(su, 0.3, sv, 0.3);
        const double scale = std::sqrt(pc.var_a * pc.var_b);
        if (std::fabs(pc.cov_ab) < 3.0 * scale) ++zero_hits;
    }
    CHECK(zero_hits == trials);
}

TEST_CASE("ledoit-wolf shrinkage of the correlation matrix") {
    // Identity input is a fixed point.
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(5, 5);
    const auto id = rdd::shrink_correlation(eye, 100);
    CHECK((id.cov - eye).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(id.intensity >= 0.0);
    CHECK(id.intensity <= 1.0);

    // Variances are preserved; output symmetric PSD; intensity clamped.
    Rng rng(7);
    Eigen::MatrixXd a(6, 6);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) a(i, j) = rng.normal();
    Eigen::MatrixXd sigma = a * a.transpose();
    const auto out = rdd::shrink_correlation(sigma, 50);
    CHECK(out.intensity >= 0.0);
    CHECK(out.intensity <= 1.0);
    for (int i = 0; i < 6; ++i)
        CHECK(out.cov(i, i) == doctest::Approx(sigma(i, i)).epsilon(1e-10));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.cov);
    CHECK(es.eigenvalues().minCoeff() > -1e-12);

    // Indefinite-adjacent input: shrinkage raises the minimum eigenvalue.
    Eigen::MatrixXd border = Eigen::MatrixXd::Constant(4, 4, -0.34);
    border.diagonal().setOnes();  // equicorrelation slightly beyond PSD
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(border);
    const auto fixed = rdd::shrink_correlation(border, 30);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ef(fixed.cov);
    CHECK(ef.eigenvalues().minCoeff() > eb.eigenvalues().minCoeff());

    // Asymmetric input is rejected.
    Eigen::MatrixXd bad = sigma;
    bad(0, 1) += 0.5;
    CHECK_THROWS_AS(rdd::shrink_correlation(bad, 10), NonSymmetricInput);
}

TEST_CASE("residualization on indicators inside the window") {
    Rng rng(41);
    const int n = 500;
    Eigen::VectorXd s = uniform_running(rng, n);
    Eigen::VectorXd y(n);
    std::vector<int> cat(n);
    for (int i = 0; i < n; ++i) {
        cat[i] = static_cast<int>(rng.uniform() * 3);
        y[i] = 2.0 * cat[i] + 0.1 * rng.normal();
    }
    const double h = 0.3;
    const auto resid = rdd::residualize_on_indicators(s, y, cat, h);
    // Within the window, category means are zero.
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        int cnt = 0;
        for (int i = 0; i < n; ++i)
            if (cat[i] == c && std::fabs(s[i]) < h) {
                sum += resid[i];
                ++cnt;
            }
        CHECK(std::fabs(sum / cnt) < 1e-12);
    }
    // Outside the window, the outcome is untouched.
    for (int i = 0; i < n; ++i)
        if (std::fabs(s[i]) >= h) CHECK(resid[i] == y[i]);
}
