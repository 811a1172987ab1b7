#include "rdx/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "rdx/model.hpp"

namespace rdx {
namespace mle {

namespace {

constexpr double kProbEps = 1e-12;
const double kInvSqrt2Pi = 0.3989422804014326779;

inline double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

}  // namespace

double turnout_log_likelihood(const Eigen::VectorXd& theta, const TurnoutLayout& layout,
                              const std::vector<TurnoutCell>& data) {
    double ll = 0.0;
    for (const auto& cell : data) {
        if (cell.electorate == 0) continue;
        double prob;
        if (cell.benefit <= 0.0) {
            prob = kProbEps;
        } else {
            const double z = (std::log(cell.benefit) -
                              (layout.mu0(theta, cell.type) +
                               layout.mu1(theta, cell.type) * cell.dlogG)) /
                             layout.sigma0(theta, cell.type);
            prob = std::clamp(normal_cdf(z), kProbEps, 1.0 - kProbEps);
        }
        ll += cell.voters * std::log(prob) +
              (cell.electorate - cell.voters) * std::log(1.0 - prob);
    }
    return ll;
}

Eigen::VectorXd turnout_log_likelihood_gradient(const Eigen::VectorXd& theta,
                                                const TurnoutLayout& layout,
                                                const std::vector<TurnoutCell>& data) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(layout.dim());
    for (const auto& cell : data) {
        if (cell.electorate == 0 || cell.benefit <= 0.0) continue;
        const int k = cell.type;
        const double sigma = layout.sigma0(theta, k);
        const double z =
            (std::log(cell.benefit) - (layout.mu0(theta, k) + layout.mu1(theta, k) * cell.dlogG)) /
            sigma;
        const double prob = std::clamp(normal_cdf(z), kProbEps, 1.0 - kProbEps);
        // dll/dprob * dprob/dz
        const double dll_dz =
            (cell.voters / prob - (cell.electorate - cell.voters) / (1.0 - prob)) *
            normal_pdf(z);
        grad[k] += dll_dz * (-1.0 / sigma);
        grad[layout.n_types + k] += dll_dz * (-cell.dlogG / sigma);
        // sigma parameterized as exp(s): dz/ds = -z.
        const int sidx = layout.common_sigma0 ? 2 * layout.n_types : 2 * layout.n_types + k;
        grad[sidx] += dll_dz * (-z);
    }
    return grad;
}

namespace {

Eigen::VectorXd moments_start(const std::vector<TurnoutCell>& data, const TurnoutLayout& layout) {
    // Invert the mean turnout rate per type at mu1 = 0, sigma0 = 1:
    // mu0^k = mean(log benefit) - Phi^{-1}(mean turnout).
    const int nk = layout.n_types;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(layout.dim());
    std::vector<double> sum_v(nk, 0.0), sum_n(nk, 0.0), sum_logb(nk, 0.0);
    std::vector<long> cells(nk, 0);
    for (const auto& c : data) {
        if (c.electorate == 0 || c.benefit <= 0.0) continue;
        sum_v[c.type] += static_cast<double>(c.voters);
        sum_n[c.type] += static_cast<double>(c.electorate);
        sum_logb[c.type] += std::log(c.benefit);
        ++cells[c.type];
    }
    for (int k = 0; k < nk; ++k) {
        const double rate =
            sum_n[k] > 0.0 ? std::clamp(sum_v[k] / sum_n[k], 1e-6, 1.0 - 1e-6) : 0.5;
        const double mean_logb = cells[k] > 0 ? sum_logb[k] / cells[k] : 0.0;
        theta[k] = mean_logb - normal_quantile(rate);
        theta[nk + k] = 0.0;
    }
    // log sigma0 entries start at 0 (sigma0 = 1).
    return theta;
}

}  // namespace

TurnoutFit fit_turnout(const std::vector<TurnoutCell>& data, int n_types, bool common_sigma0) {
    bool interior = false;
    for (const auto& c : data)
        if (c.voters > 0 && c.voters < c.electorate) interior = true;
    if (!interior) throw InsufficientData("turnout data are degenerate (no interior cell)");

    TurnoutLayout layout{n_types, common_sigma0};
    const int dim = layout.dim();
    Eigen::VectorXd x = moments_start(data, layout);

    auto neg_f = [&](const Eigen::VectorXd& v) {
        return -turnout_log_likelihood(v, layout, data);
    };
    auto neg_g = [&](const Eigen::VectorXd& v) {
        return Eigen::VectorXd(-turnout_log_likelihood_gradient(v, layout, data));
    };

    // BFGS with backtracking line search.
    Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim);
    double f = neg_f(x);
    Eigen::VectorXd g = neg_g(x);
    const double scale = std::max(1.0, std::fabs(f));
    int it = 0;
    const int max_iter = 500;
    for (; it < max_iter; ++it) {
        if (g.cwiseAbs().maxCoeff() < 1e-8 * scale) break;
        Eigen::VectorXd dir = -(hinv * g);
        double slope = g.dot(dir);
        if (slope >= 0.0) {  // reset on loss of descent
            hinv.setIdentity();
            dir = -g;
            slope = g.dot(dir);
        }
        double step = 1.0;
        double f_new = 0.0;
        Eigen::VectorXd x_new;
        bool ok = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * dir;
            f_new = neg_f(x_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                ok = true;
                break;
            }
            step *= 0.5;
        }
        if (!ok) break;
        const Eigen::VectorXd g_new = neg_g(x_new);
        const Eigen::VectorXd s = x_new - x;
        const Eigen::VectorXd yv = g_new - g;
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            const Eigen::VectorXd hy = hinv * yv;
            const double yhy = yv.dot(hy);
            hinv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
                    (hy * s.transpose() + s * hy.transpose()) / sy;
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }

    TurnoutFit fit;
    fit.layout = layout;
    fit.theta = x;
    fit.loglik = -f;
    fit.iterations = it;
    fit.grad_norm = g.cwiseAbs().maxCoeff() / scale;
    if (fit.grad_norm >= 1e-6)
        throw NoConvergence(it, fit.grad_norm);

    // Covariance: inverse of the negative numerical Hessian (central
    // differences of the analytic gradient, symmetrized).
    Eigen::MatrixXd hess(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const double step = 1e-4 * (1.0 + std::fabs(x[i]));
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += step;
        xm[i] -= step;
        const Eigen::VectorXd gp = turnout_log_likelihood_gradient(xp, layout, data);
        const Eigen::VectorXd gm = turnout_log_likelihood_gradient(xm, layout, data);
        hess.col(i) = (gp - gm) / (2.0 * step);
    }
    hess = 0.5 * (hess + hess.transpose()).eval();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(-hess);
    if (!lu.isInvertible()) throw NonInvertibleHessian();
    fit.cov = lu.inverse();
    return fit;
}

namespace {

double benefit_for(const ReferendumRecord& rec, int k, double a, double g, double chi,
                   Anticipation mode) {
    const int j = rec.district;
    const double y = rec.economy.types[k].income;
    if (!(y - rec.pre.price[j] * (1.0 + rec.pre.tax[j]) > 0.0)) return 0.0;
    if (mode == Anticipation::FullEquilibrium) {
        // Amenity terms cancel between the two solved states.
        const auto& s0 = rec.pre;
        const auto& s1 = rec.treated;
        const double d0 = y - s0.price[j] * (1.0 + s0.tax[j]);
        const double d1 = y - s1.price[j] * (1.0 + s1.tax[j]);
        if (!(d1 > 0.0)) return std::numeric_limits<double>::infinity();
        const double dv = a * (std::log(s1.spending[j]) - std::log(s0.spending[j])) -
                          a * chi * (std::log(s1.pop_total[j]) - std::log(s0.pop_total[j])) +
                          g * (std::log(d1) - std::log(d0));
        return std::fabs(dv);
    }
    HouseholdType ht;
    ht.alpha = a;
    ht.gamma = g;
    ht.income = y;
    try {
        return std::fabs(model::myopic_vote_delta(ht, rec.pre, j, rec.dlogG));
    } catch (const NonpositiveDisposableIncome&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace

std::vector<TurnoutCell> build_turnout_cells(const Dataset& data, const StructuralEstimate& zeta,
                                             Anticipation mode) {
    std::vector<TurnoutCell> cells;
    const int nk = static_cast<int>(data.config.types.size());
    cells.reserve(data.records.size() * nk);
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const auto& rec = data.records[i];
        for (int k = 0; k < nk; ++k) {
            TurnoutCell c;
            c.referendum = static_cast<int>(i);
            c.type = k;
            c.voters = rec.voters[k];
            c.electorate = rec.electorate[k];
            c.dlogG = rec.dlogG;
            c.benefit = benefit_for(rec, k, zeta.a[k], zeta.g[k], data.config.chi, mode);
            cells.push_back(c);
        }
    }
    return cells;
}

std::vector<TurnoutCell> build_turnout_cells_true(const Dataset& data) {
    StructuralEstimate truth;
    const int nk = static_cast<int>(data.config.types.size());
    truth.a.resize(nk);
    truth.g.resize(nk);
    for (int k = 0; k < nk; ++k) {
        truth.a[k] = data.config.types[k].alpha / data.config.types[k].theta;
        truth.g[k] = data.config.types[k].gamma / data.config.types[k].theta;
    }
    return build_turnout_cells(data, truth, data.config.anticipation);
}

TurnoutEstimate rubin_combine(const std::vector<Eigen::VectorXd>& draws,
                              const std::vector<Eigen::MatrixXd>& covariances) {
    const int m = static_cast<int>(draws.size());
    if (m < 2 || covariances.size() != draws.size()) throw InsufficientDraws();
    const int dim = static_cast<int>(draws.front().size());

    TurnoutEstimate out;
    out.theta = Eigen::VectorXd::Zero(dim);
    for (const auto& d : draws) out.theta += d;
    out.theta /= m;

    out.within = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& c : covariances) out.within += c;
    out.within /= m;

    out.between = Eigen::MatrixXd::Zero(dim, dim);
    for (const auto& d : draws) {
        const Eigen::VectorXd dev = d - out.theta;
        out.between += dev * dev.transpose();
    }
    out.between /= (m - 1.0);

    out.total = out.within + (1.0 + 1.0 / m) * out.between;
    return out;
}

Eigen::VectorXd draw_zeta(const StructuralEstimate& est, Rng& rng, int& rejections) {
    const int dim = static_cast<int>(est.zeta.size());
    Eigen::LLT<Eigen::MatrixXd> llt(
        est.sigma_zeta + 1e-14 * Eigen::MatrixXd::Identity(dim, dim));
    Eigen::MatrixXd chol;
    if (llt.info() == Eigen::Success) {
        chol = llt.matrixL();
    } else {
        // PSD repair via eigenvalue clipping.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(est.sigma_zeta);
        const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
        chol = es.eigenvectors() * ev.asDiagonal();
    }
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Eigen::VectorXd u(dim);
        for (int i = 0; i < dim; ++i) u[i] = rng.normal();
        Eigen::VectorXd draw = est.zeta + chol * u;
        if ((draw.array() > 0.0).all()) return draw;
        ++rejections;
    }
    throw NoConvergence(1000, 0.0);
}

StructuralEstimate with_zeta(const StructuralEstimate& base, const Eigen::VectorXd& zeta) {
    StructuralEstimate out = base;
    const int nk = static_cast<int>(base.a.size());
    out.zeta = zeta;
    out.a = zeta.head(nk);
    out.g = zeta.segment(nk, nk);
    out.eta = zeta[2 * nk];
    for (int k = 0; k < nk; ++k) out.ratio[k] = out.a[k] / out.g[k];
    return out;
}

}  // namespace mle
}  // namespace rdx
