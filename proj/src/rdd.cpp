#include "rdx/rdd.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Dense>

namespace rdx {
namespace rdd {

namespace {

inline bool on_side(double s, Side side) { return side == Side::Left ? s < 0.0 : s >= 0.0; }

inline double triangular(double s, double h) {
    const double u = std::fabs(s) / h;
    return u < 1.0 ? (1.0 - u) / h : 0.0;
}

// Indices with positive kernel weight on the requested side.
std::vector<int> side_window(const Eigen::VectorXd& running, Side side, double h) {
    std::vector<int> idx;
    for (int i = 0; i < running.size(); ++i)
        if (on_side(running[i], side) && std::fabs(running[i]) < h) idx.push_back(i);
    return idx;
}

Eigen::MatrixXd design_row_powers(const Eigen::VectorXd& running, const std::vector<int>& idx,
                                  int degree) {
    Eigen::MatrixXd x(static_cast<int>(idx.size()), degree + 1);
    for (int r = 0; r < x.rows(); ++r) {
        double p = 1.0;
        for (int c = 0; c <= degree; ++c) {
            x(r, c) = p;
            p *= running[idx[r]];
        }
    }
    return x;
}

}  // namespace

LocalFit local_linear_fit(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                          Side side, double h, int degree) {
    if (degree != 1 && degree != 2) throw NonpositiveInput("degree must be 1 or 2");
    if (!(h > 0.0)) throw NonpositiveInput("bandwidth must be positive");
    const auto idx = side_window(running, side, h);
    if (static_cast<int>(idx.size()) < degree + 2)
        throw InsufficientData("need at least degree+2 observations with positive weight");

    const Eigen::MatrixXd x = design_row_powers(running, idx, degree);
    Eigen::VectorXd w(x.rows()), y(x.rows());
    for (int r = 0; r < x.rows(); ++r) {
        w[r] = triangular(running[idx[r]], h);
        y[r] = outcome[idx[r]];
    }
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    const Eigen::VectorXd xtwy = x.transpose() * w.asDiagonal() * y;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13) throw SingularDesign();
    const Eigen::VectorXd beta = ldlt.solve(xtwy);

    LocalFit fit;
    fit.intercept = beta[0];
    fit.slope = beta[1];
    if (degree == 2) fit.curvature = 2.0 * beta[2];
    fit.n_effective = static_cast<int>(idx.size());
    return fit;
}

Eigen::VectorXd intercept_weights(const Eigen::VectorXd& running, Side side, double h,
                                  int degree) {
    const auto idx = side_window(running, side, h);
    if (static_cast<int>(idx.size()) < degree + 2)
        throw InsufficientData("need at least degree+2 observations with positive weight");
    const Eigen::MatrixXd x = design_row_powers(running, idx, degree);
    Eigen::VectorXd w(x.rows());
    for (int r = 0; r < x.rows(); ++r) w[r] = triangular(running[idx[r]], h);
    const Eigen::MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || ldlt.rcond() < 1e-13) throw SingularDesign();
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(degree + 1);
    e1[0] = 1.0;
    const Eigen::VectorXd a = ldlt.solve(e1);

    Eigen::VectorXd weights = Eigen::VectorXd::Zero(running.size());
    for (int r = 0; r < x.rows(); ++r) weights[idx[r]] = w[r] * x.row(r).dot(a);
    return weights;
}

namespace {

// Unweighted polynomial fit of outcome on powers of running over `idx`.
Eigen::VectorXd global_poly_fit(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                                const std::vector<int>& idx, int degree, bool with_treat) {
    const int p = degree + 1 + (with_treat ? 1 : 0);
    Eigen::MatrixXd x(static_cast<int>(idx.size()), p);
    Eigen::VectorXd y(static_cast<int>(idx.size()));
    for (int r = 0; r < x.rows(); ++r) {
        const double s = running[idx[r]];
        int c = 0;
        double pw = 1.0;
        for (int d = 0; d <= degree; ++d) {
            x(r, c++) = pw;
            pw *= s;
        }
        if (with_treat) x(r, c++) = (s >= 0.0) ? 1.0 : 0.0;
        y[r] = outcome[idx[r]];
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(x.transpose() * x);
    if (ldlt.info() != Eigen::Success) throw SingularDesign();
    return ldlt.solve(x.transpose() * y);
}

}  // namespace

double ik_bandwidth(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                    const RddOptions& opts) {
    const int n = static_cast<int>(running.size());
    std::vector<int> left, right;
    for (int i = 0; i < n; ++i) (running[i] < 0.0 ? left : right).push_back(i);
    if (static_cast<int>(left.size()) < opts.min_side_obs ||
        static_cast<int>(right.size()) < opts.min_side_obs)
        throw InsufficientData("bandwidth selector needs the configured per-side floor");

    const double s_absmax = running.cwiseAbs().maxCoeff();
    const double guard = opts.bandwidth_guard_mult * s_absmax;

    // Lower floor: enough observations strictly inside the window on both
    // sides, so lumpy running variables cannot starve the local fits.
    auto kth_abs = [&](const std::vector<int>& side, int k) {
        std::vector<double> a;
        a.reserve(side.size());
        for (int i : side) a.push_back(std::fabs(running[i]));
        const int kk = std::min<int>(k, static_cast<int>(a.size()) - 1);
        std::nth_element(a.begin(), a.begin() + kk, a.end());
        return a[kk];
    };
    const int floor_obs = std::max(opts.min_effective_obs, 4);
    const double h_floor =
        std::min(1.0000001 * std::max(kth_abs(left, floor_obs - 1), kth_abs(right, floor_obs - 1)),
                 guard);
    auto finish = [&](double h) { return std::min(std::max(h, h_floor), guard); };

    // Step 1: pilot density and conditional variances at the cutoff.
    const double mean_s = running.mean();
    const double sd_s = std::sqrt((running.array() - mean_s).square().sum() / (n - 1));
    const double h1 = 1.84 * sd_s * std::pow(n, -0.2);

    auto within = [&](const std::vector<int>& side, double h) {
        std::vector<int> out;
        for (int i : side)
            if (std::fabs(running[i]) <= h) out.push_back(i);
        return out;
    };
    const auto l1 = within(left, h1);
    const auto r1 = within(right, h1);
    if (l1.size() < 3 || r1.size() < 3) return guard;
    // Conditional variance at the cutoff: residual variance around a
    // pilot linear fit inside the window.
    auto side_var = [&](const std::vector<int>& idx) {
        const Eigen::VectorXd beta = global_poly_fit(running, outcome, idx, 1, false);
        double v = 0.0;
        for (int i : idx) {
            const double r = outcome[i] - beta[0] - beta[1] * running[i];
            v += r * r;
        }
        return v / (static_cast<double>(idx.size()) - 2.0);
    };
    const double var_l = side_var(l1);
    const double var_r = side_var(r1);
    const double f0 = (static_cast<double>(l1.size()) + static_cast<double>(r1.size())) /
                      (2.0 * n * h1);
    const double mean_y = outcome.mean();
    const double var_y = (outcome.array() - mean_y).square().sum() / (n - 1.0);
    // Noiseless outcomes make the MSE criterion degenerate.
    if (!(var_l + var_r > 1e-12 * std::max(var_y, 1e-300)) || !(f0 > 0.0)) return guard;

    // Step 2: third derivative from a global cubic with a treatment shift,
    // then one-sided pilot bandwidths and local-quadratic curvatures.
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    const Eigen::VectorXd cubic = global_poly_fit(running, outcome, all, 3, true);
    const double m3 = 6.0 * cubic[3];
    const double m3sq = std::max(m3 * m3, 1e-300);

    auto pilot_h2 = [&](double var_side, double n_side) {
        const double h2 = 3.56 * std::pow(var_side / (f0 * m3sq), 1.0 / 7.0) *
                          std::pow(n_side, -1.0 / 7.0);
        return std::min(h2, s_absmax);
    };
    const double h2_l = pilot_h2(var_l, static_cast<double>(left.size()));
    const double h2_r = pilot_h2(var_r, static_cast<double>(right.size()));

    auto curvature = [&](const std::vector<int>& side, double h2) -> std::pair<double, double> {
        auto idx = within(side, h2);
        if (idx.size() < 4) idx = side;  // widen to the full side if too thin
        const Eigen::VectorXd q = global_poly_fit(running, outcome, idx, 2, false);
        return {2.0 * q[2], static_cast<double>(idx.size())};
    };
    const auto [m2_l, n2_l] = curvature(left, h2_l);
    const auto [m2_r, n2_r] = curvature(right, h2_r);

    // Step 3: regularized plug-in with the triangular-kernel constant.
    const double reg_l = 2160.0 * var_l / (n2_l * std::pow(h2_l, 4));
    const double reg_r = 2160.0 * var_r / (n2_r * std::pow(h2_r, 4));
    const double denom = f0 * ((m2_r - m2_l) * (m2_r - m2_l) + reg_l + reg_r);
    if (!(denom > 0.0) || !std::isfinite(denom)) return guard;
    const double h = 3.4375 * std::pow((var_l + var_r) / denom, 0.2) * std::pow(n, -0.2);
    if (!std::isfinite(h) || h <= 0.0) return guard;
    return finish(h);
}

namespace {

// Raw nearest-neighbor residuals Y_i minus the mean of the J nearest
// same-side neighbors, ties in distance broken by record order.
Eigen::VectorXd nn_raw_residuals(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                                 const std::vector<int>& side_idx, int neighbors) {
    const int m = static_cast<int>(side_idx.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(running.size());
    if (m < 2) return out;
    const int j_star = std::min(neighbors, m - 1);

    std::vector<int> order(side_idx);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (running[a] != running[b]) return running[a] < running[b];
        return a < b;
    });
    for (int pos = 0; pos < m; ++pos) {
        const int i = order[pos];
        int lo = pos - 1, hi = pos + 1;
        double acc = 0.0;
        for (int taken = 0; taken < j_star; ++taken) {
            const double dlo = lo >= 0 ? std::fabs(running[i] - running[order[lo]]) : -1.0;
            const double dhi = hi < m ? std::fabs(running[i] - running[order[hi]]) : -1.0;
            bool take_lo;
            if (lo < 0)
                take_lo = false;
            else if (hi >= m)
                take_lo = true;
            else if (dlo != dhi)
                take_lo = dlo < dhi;
            else
                take_lo = order[lo] < order[hi];
            acc += outcome[order[take_lo ? lo : hi]];
            take_lo ? --lo : ++hi;
        }
        out[i] = outcome[i] - acc / j_star;
    }
    return out;
}

// Squared and degrees-of-freedom-adjusted version: J/(J+1) * resid^2.
Eigen::VectorXd nn_residuals(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                             const std::vector<int>& side_idx, int neighbors) {
    const int m = static_cast<int>(side_idx.size());
    const int j_star = std::min(neighbors, std::max(m - 1, 1));
    Eigen::VectorXd raw = nn_raw_residuals(running, outcome, side_idx, neighbors);
    const double adj = static_cast<double>(j_star) / (j_star + 1.0);
    return adj * raw.array().square();
}

struct SharpParts {
    double jump = 0.0;
    double bias = 0.0;
    double variance = 0.0;
    double bandwidth = 0.0;
    int n_left = 0;
    int n_right = 0;
    Eigen::VectorXd weights;  // signed intercept weights (right minus left)
};

SharpParts sharp_parts(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                       double h, const RddOptions& opts) {
    SharpParts parts;
    parts.bandwidth = h;

    const auto fit_l = local_linear_fit(running, outcome, Side::Left, h, 1);
    const auto fit_r = local_linear_fit(running, outcome, Side::Right, h, 1);
    parts.jump = fit_r.intercept - fit_l.intercept;
    parts.n_left = fit_l.n_effective;
    parts.n_right = fit_r.n_effective;

    const Eigen::VectorXd w_l = intercept_weights(running, Side::Left, h, 1);
    const Eigen::VectorXd w_r = intercept_weights(running, Side::Right, h, 1);
    parts.weights = w_r - w_l;

    // Plug-in bias: one-sided local-quadratic curvature at the pilot
    // bandwidth, pushed through the exact finite-sample weights.
    const double h_pilot = opts.pilot_mult * h;
    double bias = 0.0;
    try {
        const auto quad_l = local_linear_fit(running, outcome, Side::Left, h_pilot, 2);
        const auto quad_r = local_linear_fit(running, outcome, Side::Right, h_pilot, 2);
        double sum_l = 0.0, sum_r = 0.0;
        for (int i = 0; i < running.size(); ++i) {
            if (w_l[i] != 0.0) sum_l += w_l[i] * running[i] * running[i];
            if (w_r[i] != 0.0) sum_r += w_r[i] * running[i] * running[i];
        }
        bias = 0.5 * quad_r.curvature * sum_r - 0.5 * quad_l.curvature * sum_l;
    } catch (const InsufficientData&) {
        bias = 0.0;  // pilot window too thin; fall back to the conventional point
    }
    parts.bias = bias;

    std::vector<int> left_all, right_all;
    for (int i = 0; i < running.size(); ++i)
        (running[i] < 0.0 ? left_all : right_all).push_back(i);
    const Eigen::VectorXd sig_l = nn_residuals(running, outcome, left_all, opts.nn_neighbors);
    const Eigen::VectorXd sig_r = nn_residuals(running, outcome, right_all, opts.nn_neighbors);
    double variance = 0.0;
    for (int i = 0; i < running.size(); ++i) {
        const double w = parts.weights[i];
        if (w != 0.0) variance += w * w * (running[i] < 0.0 ? sig_l[i] : sig_r[i]);
    }
    parts.variance = variance;
    return parts;
}

}  // namespace

RddEstimate sharp_rd(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                     const RddOptions& opts) {
    const double h = ik_bandwidth(running, outcome, opts);
    const auto parts = sharp_parts(running, outcome, h, opts);
    RddEstimate est;
    est.estimate = parts.jump;
    est.bias_corrected = parts.jump - parts.bias;
    est.std_error = std::sqrt(parts.variance);
    est.bandwidth = h;
    est.n_left = parts.n_left;
    est.n_right = parts.n_right;
    return est;
}

RddEstimate fuzzy_rd_known_first_stage(const RddSample& sample, const RddOptions& opts) {
    for (int i = 0; i < sample.size(); ++i)
        if (sample.running[i] < 0.0 && sample.first_stage[i] != 0.0)
            throw NonpositiveInput("first stage must be zero below the cutoff");

    const double h = ik_bandwidth(sample.running, sample.outcome, opts);
    const auto num = sharp_parts(sample.running, sample.outcome, h, opts);

    // Denominator: right-limit intercept of D*dlogG at the same bandwidth
    // (the left limit is identically zero).
    const auto den_fit = local_linear_fit(sample.running, sample.first_stage, Side::Right, h, 1);
    const double den = den_fit.intercept;
    if (!(std::fabs(den) > opts.weak_first_stage_floor)) throw WeakFirstStage();

    const Eigen::VectorXd w_r = intercept_weights(sample.running, Side::Right, h, 1);
    std::vector<int> right_all;
    for (int i = 0; i < sample.size(); ++i)
        if (sample.running[i] >= 0.0) right_all.push_back(i);
    // Signed cross products of raw nearest-neighbor residuals give the
    // covariance between the numerator's right intercept and the
    // denominator; the same adjustment J/(J+1) applies.
    const int j_right = std::min(opts.nn_neighbors,
                                 std::max(static_cast<int>(right_all.size()) - 1, 1));
    const double nn_adj = static_cast<double>(j_right) / (j_right + 1.0);
    const Eigen::VectorXd raw_d =
        nn_raw_residuals(sample.running, sample.first_stage, right_all, opts.nn_neighbors);
    const Eigen::VectorXd raw_y =
        nn_raw_residuals(sample.running, sample.outcome, right_all, opts.nn_neighbors);
    double var_den = 0.0, cov_nd = 0.0;
    for (int i : right_all) {
        const double w = w_r[i];
        if (w == 0.0) continue;
        var_den += w * w * nn_adj * raw_d[i] * raw_d[i];
        cov_nd += w * w * nn_adj * raw_y[i] * raw_d[i];
    }

    const double ratio = num.jump / den;
    const double ratio_bc = (num.jump - num.bias) / den;
    const double var = num.variance / (den * den) +
                       (ratio * ratio) * var_den / (den * den) -
                       2.0 * ratio * cov_nd / (den * den);

    RddEstimate est;
    est.estimate = ratio;
    est.bias_corrected = ratio_bc;
    est.std_error = std::sqrt(std::max(var, 0.0));
    est.bandwidth = h;
    est.n_left = num.n_left;
    est.n_right = num.n_right;
    return est;
}

BoundaryLimits boundary_limits(const Eigen::VectorXd& running, const Eigen::VectorXd& level,
                               const RddOptions& opts) {
    const double h = ik_bandwidth(running, level, opts);
    BoundaryLimits lim;
    lim.left = local_linear_fit(running, level, Side::Left, h, 1).intercept;
    lim.right = local_linear_fit(running, level, Side::Right, h, 1).intercept;
    return lim;
}

Eigen::VectorXd residualize_on_indicators(const Eigen::VectorXd& running,
                                          const Eigen::VectorXd& outcome,
                                          const std::vector<int>& category, double h) {
    if (static_cast<int>(category.size()) != running.size())
        throw DimensionMismatch("category vector length must match the sample");
    std::map<int, std::pair<double, int>> groups;
    for (int i = 0; i < running.size(); ++i) {
        if (std::fabs(running[i]) >= h) continue;
        auto& g = groups[category[i]];
        g.first += outcome[i];
        g.second += 1;
    }
    Eigen::VectorXd out = outcome;
    for (int i = 0; i < running.size(); ++i) {
        if (std::fabs(running[i]) >= h) continue;
        const auto& g = groups[category[i]];
        out[i] = outcome[i] - g.first / g.second;
    }
    return out;
}

PairCovariance pairwise_covariance(const RddSample& a, double h_a, const RddSample& b,
                                   double h_b) {
    // Stacked fully interacted local-linear IV system. Per block:
    // outcome ~ beta * first_stage + (1, S, T*S), instrument T = I(S >= 0),
    // triangular weights at the block's own bandwidth.
    struct Row {
        int block;
        int cluster;
        double w, y, x, s, t;
    };
    std::vector<Row> rows;
    auto add_block = [&rows](const RddSample& smp, double h, int block) {
        for (int i = 0; i < smp.size(); ++i) {
            const double s = smp.running[i];
            const double w = triangular(s, h);
            if (w <= 0.0) continue;
            rows.push_back({block, smp.cluster.empty() ? i : smp.cluster[i], w,
                            smp.outcome[i], smp.first_stage[i], s, s >= 0.0 ? 1.0 : 0.0});
        }
    };
    add_block(a, h_a, 0);
    add_block(b, h_b, 1);
    if (rows.size() < 10) throw InsufficientData("stacked IV system has too few rows");

    constexpr int p = 8;  // (beta, const, S, T*S) per block
    auto regressors = [](const Row& r, Eigen::Matrix<double, p, 1>& x,
                         Eigen::Matrix<double, p, 1>& z) {
        x.setZero();
        z.setZero();
        const int base = r.block * 4;
        x[base + 0] = r.x;
        x[base + 1] = 1.0;
        x[base + 2] = r.s;
        x[base + 3] = r.t * r.s;
        z[base + 0] = r.t;
        z[base + 1] = 1.0;
        z[base + 2] = r.s;
        z[base + 3] = r.t * r.s;
    };

    Eigen::Matrix<double, p, p> ztx = Eigen::Matrix<double, p, p>::Zero();
    Eigen::Matrix<double, p, 1> zty = Eigen::Matrix<double, p, 1>::Zero();
    Eigen::Matrix<double, p, 1> x, z;
    for (const auto& r : rows) {
        regressors(r, x, z);
        ztx.noalias() += r.w * z * x.transpose();
        zty.noalias() += r.w * r.y * z;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, p, p>> lu(ztx);
    if (!lu.isInvertible()) throw SingularDesign();
    const Eigen::Matrix<double, p, 1> beta = lu.solve(zty);

    // Cluster-robust sandwich over referendum identifiers.
    std::map<int, Eigen::Matrix<double, p, 1>> scores;
    for (const auto& r : rows) {
        regressors(r, x, z);
        const double resid = r.y - x.dot(beta);
        auto it = scores.find(r.cluster);
        if (it == scores.end())
            it = scores.emplace(r.cluster, Eigen::Matrix<double, p, 1>::Zero()).first;
        it->second.noalias() += r.w * resid * z;
    }
    Eigen::Matrix<double, p, p> meat = Eigen::Matrix<double, p, p>::Zero();
    for (const auto& [cid, g] : scores) meat.noalias() += g * g.transpose();

    const Eigen::Matrix<double, p, p> bread = lu.inverse();
    const Eigen::Matrix<double, p, p> cov = bread * meat * bread.transpose();

    PairCovariance out;
    out.beta_a = beta[0];
    out.beta_b = beta[4];
    out.var_a = cov(0, 0);
    out.var_b = cov(4, 4);
    out.cov_ab = cov(0, 4);
    return out;
}

ShrunkCovariance shrink_correlation(const Eigen::MatrixXd& sigma, int n_obs) {
    const int p = static_cast<int>(sigma.rows());
    if (sigma.cols() != p) throw NonSymmetricInput();
    if (!sigma.isApprox(sigma.transpose(), 1e-8)) throw NonSymmetricInput();

    Eigen::VectorXd sd(p);
    for (int i = 0; i < p; ++i) sd[i] = std::sqrt(std::max(sigma(i, i), 0.0));

    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            if (i != j && sd[i] > 0.0 && sd[j] > 0.0)
                corr(i, j) = sigma(i, j) / (sd[i] * sd[j]);

    // Optimal intensity: estimation noise of the off-diagonal correlations
    // (asymptotic variance (1 - r^2)^2 / n) over their dispersion from the
    // identity target.
    double noise = 0.0, dispersion = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            if (i != j) {
                const double r = corr(i, j);
                noise += (1.0 - r * r) * (1.0 - r * r) / std::max(n_obs, 2);
                dispersion += r * r;
            }
    double delta = dispersion > 0.0 ? noise / dispersion : 1.0;
    delta = std::clamp(delta, 0.0, 1.0);

    Eigen::MatrixXd shrunk = (1.0 - delta) * corr;
    shrunk.diagonal().setOnes();
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) shrunk(i, j) *= sd[i] * sd[j];
    // Exact symmetry against accumulated roundoff.
    shrunk = 0.5 * (shrunk + shrunk.transpose()).eval();
    return {shrunk, delta};
}

}  // namespace rdd
}  // namespace rdx
