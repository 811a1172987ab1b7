#include "rdx/ident.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace rdx {
namespace ident {

EstimationTable make_estimation_table(const Dataset& data) {
    const int n = static_cast<int>(data.records.size());
    if (n == 0) throw InsufficientData("empty dataset");
    const int nj = data.config.n_jurisdictions;
    const int nk = static_cast<int>(data.config.types.size());

    EstimationTable t;
    t.n_jurisdictions = nj;
    t.n_types = nk;
    t.margin.resize(n);
    t.dlogG.resize(n);
    t.first_stage.resize(n);
    t.cluster.resize(n);
    t.district.resize(n);
    t.dlogN_own.resize(n, nk);
    t.dlogN_oth.resize(n, nk);
    t.lvlN_own.resize(n, nk);
    t.lvlN_oth.resize(n, nk);
    t.rho_own.resize(n, nk);
    t.rho_oth.resize(n, nk);
    t.dlogM_own.resize(n);
    t.dlogM_oth.resize(n);
    t.dlogP_own.resize(n);
    t.dlogP_oth.resize(n);
    t.dlogT_own.resize(n);
    t.dlogT_oth.resize(n);
    t.dlogG_own.resize(n);
    t.dlogG_oth.resize(n);
    t.dlogH_own.resize(n);
    t.dlogH_oth.resize(n);

    for (int i = 0; i < n; ++i) {
        const auto& rec = data.records[i];
        const auto& post = rec.post();
        const auto& pre = rec.pre;
        const int own = rec.district;
        t.margin[i] = rec.margin;
        t.dlogG[i] = rec.dlogG;
        t.first_stage[i] = rec.approved ? rec.dlogG : 0.0;
        t.cluster[i] = i;
        t.district[i] = own;

        auto dlog = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b, int j) {
            return std::log(a[j]) - std::log(b[j]);
        };
        t.dlogM_own[i] = dlog(post.pop_total, pre.pop_total, own);
        t.dlogP_own[i] = dlog(post.price, pre.price, own);
        t.dlogT_own[i] = std::log1p(post.tax[own]) - std::log1p(pre.tax[own]);
        t.dlogG_own[i] = dlog(post.spending, pre.spending, own);
        t.dlogH_own[i] = dlog(post.housing, pre.housing, own);

        double sM = 0.0, sP = 0.0, sT = 0.0, sG = 0.0, sH = 0.0;
        for (int j = 0; j < nj; ++j) {
            if (j == own) continue;
            sM += dlog(post.pop_total, pre.pop_total, j);
            sP += dlog(post.price, pre.price, j);
            sT += std::log1p(post.tax[j]) - std::log1p(pre.tax[j]);
            sG += dlog(post.spending, pre.spending, j);
            sH += dlog(post.housing, pre.housing, j);
        }
        const double m = std::max(nj - 1, 1);
        t.dlogM_oth[i] = sM / m;
        t.dlogP_oth[i] = sP / m;
        t.dlogT_oth[i] = sT / m;
        t.dlogG_oth[i] = sG / m;
        t.dlogH_oth[i] = sH / m;

        for (int k = 0; k < nk; ++k) {
            const double y = data.config.types[k].income;
            t.dlogN_own(i, k) = std::log(post.pop(k, own)) - std::log(pre.pop(k, own));
            t.lvlN_own(i, k) = post.pop(k, own);
            const double gross_own = post.price[own] * (1.0 + post.tax[own]);
            t.rho_own(i, k) = gross_own / (y - gross_own);
            double sN = 0.0, sLvl = 0.0, sRho = 0.0;
            for (int j = 0; j < nj; ++j) {
                if (j == own) continue;
                sN += std::log(post.pop(k, j)) - std::log(pre.pop(k, j));
                sLvl += post.pop(k, j);
                const double gross = post.price[j] * (1.0 + post.tax[j]);
                sRho += gross / (y - gross);
            }
            t.dlogN_oth(i, k) = sN / m;
            t.lvlN_oth(i, k) = sLvl / m;
            t.rho_oth(i, k) = sRho / m;
        }
    }
    return t;
}

EstimationTable filter_district(const EstimationTable& t, int district) {
    std::vector<int> rows;
    for (int i = 0; i < t.size(); ++i)
        if (t.district[i] == district) rows.push_back(i);
    const int n = static_cast<int>(rows.size());
    const int nk = t.n_types;

    EstimationTable out;
    out.n_jurisdictions = t.n_jurisdictions;
    out.n_types = nk;
    auto take_vec = [&](const Eigen::VectorXd& src) {
        Eigen::VectorXd dst(n);
        for (int i = 0; i < n; ++i) dst[i] = src[rows[i]];
        return dst;
    };
    auto take_mat = [&](const Eigen::MatrixXd& src) {
        Eigen::MatrixXd dst(n, nk);
        for (int i = 0; i < n; ++i) dst.row(i) = src.row(rows[i]);
        return dst;
    };
    out.margin = take_vec(t.margin);
    out.dlogG = take_vec(t.dlogG);
    out.first_stage = take_vec(t.first_stage);
    out.cluster.resize(n);
    out.district.resize(n);
    for (int i = 0; i < n; ++i) {
        out.cluster[i] = t.cluster[rows[i]];
        out.district[i] = t.district[rows[i]];
    }
    out.dlogN_own = take_mat(t.dlogN_own);
    out.dlogN_oth = take_mat(t.dlogN_oth);
    out.lvlN_own = take_mat(t.lvlN_own);
    out.lvlN_oth = take_mat(t.lvlN_oth);
    out.rho_own = take_mat(t.rho_own);
    out.rho_oth = take_mat(t.rho_oth);
    out.dlogM_own = take_vec(t.dlogM_own);
    out.dlogM_oth = take_vec(t.dlogM_oth);
    out.dlogP_own = take_vec(t.dlogP_own);
    out.dlogP_oth = take_vec(t.dlogP_oth);
    out.dlogT_own = take_vec(t.dlogT_own);
    out.dlogT_oth = take_vec(t.dlogT_oth);
    out.dlogG_own = take_vec(t.dlogG_own);
    out.dlogG_oth = take_vec(t.dlogG_oth);
    out.dlogH_own = take_vec(t.dlogH_own);
    out.dlogH_oth = take_vec(t.dlogH_oth);
    return out;
}

namespace {

RddSample make_sample(const EstimationTable& t, const Eigen::VectorXd& outcome) {
    RddSample s;
    s.running = t.margin;
    s.outcome = outcome;
    s.first_stage = t.first_stage;
    s.cluster = t.cluster;
    return s;
}

}  // namespace

ElasticityEstimates estimate_elasticities(const EstimationTable& t, const RddOptions& opts) {
    const int nk = t.n_types;
    ElasticityEstimates est;
    est.n_types = nk;
    est.n_other = std::max(t.n_jurisdictions - 1, 1);
    est.n_clusters = t.size();

    const int p = est.n_estimands();
    std::vector<Eigen::VectorXd> outcomes(p);
    for (int k = 0; k < nk; ++k) {
        outcomes[est.idx_eN_own(k)] = t.dlogN_own.col(k);
        outcomes[est.idx_eN_oth(k)] = t.dlogN_oth.col(k);
    }
    outcomes[est.idx_eM_own()] = t.dlogM_own;
    outcomes[est.idx_eM_oth()] = t.dlogM_oth;
    outcomes[est.idx_eP_own()] = t.dlogP_own;
    outcomes[est.idx_eP_oth()] = t.dlogP_oth;
    outcomes[est.idx_eT_own()] = t.dlogT_own;
    outcomes[est.idx_eT_oth()] = t.dlogT_oth;
    outcomes[est.idx_eG_own()] = t.dlogG_own;
    outcomes[est.idx_eG_oth()] = t.dlogG_oth;
    outcomes[est.idx_eH_own()] = t.dlogH_own;

    est.value.resize(p);
    est.bandwidth.resize(p);
    for (int i = 0; i < p; ++i) {
        const RddSample s = make_sample(t, outcomes[i]);
        const RddEstimate e = rdd::fuzzy_rd_known_first_stage(s, opts);
        est.value[i] = e.bias_corrected;
        est.bandwidth[i] = e.bandwidth;
    }

    // Pairwise clustered covariances from the stacked IV systems, then
    // Ledoit-Wolf shrinkage of the correlation matrix.
    Eigen::MatrixXd cov(p, p);
    for (int i = 0; i < p; ++i) {
        const RddSample si = make_sample(t, outcomes[i]);
        for (int j = i; j < p; ++j) {
            const RddSample sj = make_sample(t, outcomes[j]);
            const auto pc =
                rdd::pairwise_covariance(si, est.bandwidth[i], sj, est.bandwidth[j]);
            if (i == j) {
                cov(i, i) = pc.var_a;
            } else {
                cov(i, j) = pc.cov_ab;
                cov(j, i) = pc.cov_ab;
            }
        }
    }
    const auto shrunk = rdd::shrink_correlation(cov, est.n_clusters);
    est.cov = shrunk.cov;
    est.lw_intensity = shrunk.intensity;

    // Cutoff-level weights: midpoints of one-sided local-linear limits.
    est.w_own.resize(nk);
    est.w_oth.resize(nk);
    est.rho_own.resize(nk);
    est.rho_oth.resize(nk);
    est.ltilde_own.resize(nk);
    est.ltilde_oth.resize(nk);
    Eigen::VectorXd own_l(nk), own_r(nk), oth_l(nk), oth_r(nk);
    for (int k = 0; k < nk; ++k) {
        const auto lim_own = rdd::boundary_limits(t.margin, t.lvlN_own.col(k), opts);
        const auto lim_oth = rdd::boundary_limits(t.margin, t.lvlN_oth.col(k), opts);
        own_l[k] = lim_own.left;
        own_r[k] = lim_own.right;
        oth_l[k] = lim_oth.left;
        oth_r[k] = lim_oth.right;
        est.rho_own[k] = rdd::boundary_limits(t.margin, t.rho_own.col(k), opts).midpoint();
        est.rho_oth[k] = rdd::boundary_limits(t.margin, t.rho_oth.col(k), opts).midpoint();
    }
    const double tot_own = own_l.sum() + own_r.sum();
    const double tot_oth = oth_l.sum() + oth_r.sum();
    for (int k = 0; k < nk; ++k) {
        est.ltilde_own[k] = (own_l[k] + own_r[k]) / tot_own;
        est.ltilde_oth[k] = (oth_l[k] + oth_r[k]) / tot_oth;
    }
    est.w_own = 0.5 * (own_l + own_r);
    est.w_oth = 0.5 * (oth_l + oth_r);
    return est;
}

SystemInputs estimate_system_inputs(const ElasticityEstimates& est, int k) {
    SystemInputs in;
    in.type_index = k;
    in.chi = est.chi;
    in.n_other = est.n_other;
    in.n_clusters = est.n_clusters;
    in.w_own = est.w_own[k];
    in.w_oth = est.w_oth[k];
    in.rho_own = est.rho_own[k];
    in.rho_oth = est.rho_oth[k];

    const int sel[10] = {est.idx_eN_own(k), est.idx_eN_oth(k), est.idx_eM_own(),
                         est.idx_eM_oth(),  est.idx_eP_own(),  est.idx_eP_oth(),
                         est.idx_eT_own(),  est.idx_eT_oth(),  est.idx_eG_own(),
                         est.idx_eG_oth()};
    in.elasticity.resize(10);
    in.elasticity_cov.resize(10, 10);
    for (int i = 0; i < 10; ++i) {
        in.elasticity[i] = est.value[sel[i]];
        for (int j = 0; j < 10; ++j) in.elasticity_cov(i, j) = est.cov(sel[i], sel[j]);
    }
    return in;
}

ThetaSystem build_theta_system(const SystemInputs& in) {
    if (in.elasticity.size() != 10)
        throw DimensionMismatch("system inputs need the 10-entry elasticity layout");
    const double chi = in.chi;
    const double m = static_cast<double>(in.n_other);
    const double wo = in.w_own, wt = in.w_oth;
    const double ro = in.rho_own, rt = in.rho_oth;

    // Indices within the 10-entry layout.
    enum { eNo = 0, eNt, eMo, eMt, ePo, ePt, eTo, eTt, eGo, eGt };

    Eigen::MatrixXd map = Eigen::MatrixXd::Zero(18, 10);
    map(0, eNo) = 1.0;
    map(1, eGo) = 1.0 - wo;
    map(2, eMo) = chi * (1.0 - wo);
    map(3, ePo) = ro * (1.0 - wo);
    map(4, eTo) = ro * (1.0 - wo);
    map(5, eGt) = m * wt;
    map(6, eMt) = chi * m * wt;
    map(7, ePt) = m * rt * wt;
    map(8, eTt) = m * rt * wt;
    map(9, eNt) = 1.0;
    map(10, eGt) = 1.0 - wt;
    map(11, eMt) = chi * (1.0 - wt);
    map(12, ePt) = rt * (1.0 - wt);
    map(13, eTt) = rt * (1.0 - wt);
    map(14, eGo) = wo;
    map(14, eGt) = (m - 1.0) * wt;
    map(15, eMo) = chi * wo;
    map(15, eMt) = chi * (m - 1.0) * wt;
    map(16, ePo) = ro * wo;
    map(16, ePt) = (m - 1.0) * rt * wt;
    map(17, eTo) = ro * wo;
    map(17, eTt) = (m - 1.0) * rt * wt;

    ThetaSystem sys;
    sys.weight_map = map;
    sys.theta = map * in.elasticity;
    sys.sigma = map * in.elasticity_cov * map.transpose();
    return sys;
}

namespace {

struct ThetaParts {
    double psi1, xi1, psi2, xi2, det;
};

ThetaParts theta_parts(const Eigen::VectorXd& th) {
    if (th.size() != 18) throw DimensionMismatch("theta vector must have 18 entries");
    ThetaParts p;
    p.psi1 = th[1] - th[2] - th[5] + th[6];
    p.xi1 = -th[3] - th[4] + th[7] + th[8];
    p.psi2 = th[10] - th[11] - th[14] + th[15];
    p.xi2 = -th[12] - th[13] + th[16] + th[17];
    p.det = p.psi1 * p.xi2 - p.psi2 * p.xi1;
    const double scale =
        std::max({std::fabs(p.psi1 * p.xi2), std::fabs(p.psi2 * p.xi1), 1e-300});
    if (std::fabs(p.det) < 1e-12 * scale)
        throw SingularSystem("determinant of the preference system vanishes");
    return p;
}

}  // namespace

Eigen::Vector2d solve_preferences_theta(const Eigen::VectorXd& th) {
    const auto p = theta_parts(th);
    Eigen::Vector2d ag;
    ag[0] = (th[0] * p.xi2 - th[9] * p.xi1) / p.det;
    ag[1] = (p.psi1 * th[9] - p.psi2 * th[0]) / p.det;
    return ag;
}

Eigen::MatrixXd preference_jacobian(const Eigen::VectorXd& th) {
    const auto p = theta_parts(th);
    const Eigen::Vector2d ag = solve_preferences_theta(th);
    const double a = ag[0], g = ag[1];
    const double t1 = th[0], t10 = th[9];

    Eigen::MatrixXd jac(2, 18);
    auto set = [&](int n, double da, double dg) {
        jac(0, n) = da / p.det;
        jac(1, n) = dg / p.det;
    };
    set(0, p.xi2, -p.psi2);
    set(1, -a * p.xi2, t10 - g * p.xi2);
    set(2, a * p.xi2, -t10 + g * p.xi2);
    set(3, t10 - a * p.psi2, -g * p.psi2);
    set(4, t10 - a * p.psi2, -g * p.psi2);
    set(5, a * p.xi2, -t10 + g * p.xi2);
    set(6, -a * p.xi2, t10 - g * p.xi2);
    set(7, -t10 + a * p.psi2, g * p.psi2);
    set(8, -t10 + a * p.psi2, g * p.psi2);
    set(9, -p.xi1, p.psi1);
    set(10, a * p.xi1, -t1 + g * p.xi1);
    set(11, -a * p.xi1, t1 - g * p.xi1);
    set(12, -t1 + a * p.psi1, g * p.psi1);
    set(13, -t1 + a * p.psi1, g * p.psi1);
    set(14, -a * p.xi1, t1 - g * p.xi1);
    set(15, a * p.xi1, -t1 + g * p.xi1);
    set(16, t1 - a * p.psi1, -g * p.psi1);
    set(17, t1 - a * p.psi1, -g * p.psi1);
    return jac;
}

DeltaSe delta_method_se(const Eigen::VectorXd& theta, const Eigen::MatrixXd& sigma_theta) {
    if (theta.size() != 18) throw DimensionMismatch("theta vector must have 18 entries");
    if (sigma_theta.rows() != 18 || sigma_theta.cols() != 18)
        throw DimensionMismatch("sigma_theta must be 18 x 18");
    const Eigen::MatrixXd jac = preference_jacobian(theta);
    const Eigen::Vector2d ag = solve_preferences_theta(theta);
    DeltaSe out;
    out.cov_ag = jac * sigma_theta * jac.transpose();
    out.se_a = std::sqrt(std::max(out.cov_ag(0, 0), 0.0));
    out.se_g = std::sqrt(std::max(out.cov_ag(1, 1), 0.0));
    Eigen::Vector2d grad;
    grad[0] = 1.0 / ag[1];
    grad[1] = -ag[0] / (ag[1] * ag[1]);
    out.se_ratio = std::sqrt(std::max(grad.dot(out.cov_ag * grad), 0.0));
    return out;
}

PreferenceSolution solve_preferences(const SystemInputs& in) {
    const ThetaSystem sys = build_theta_system(in);
    const Eigen::Vector2d ag = solve_preferences_theta(sys.theta);
    const DeltaSe se = delta_method_se(sys.theta, sys.sigma);
    PreferenceSolution sol;
    sol.a = ag[0];
    sol.g = ag[1];
    sol.se_a = se.se_a;
    sol.se_g = se.se_g;
    sol.ratio = ag[0] / ag[1];
    sol.se_ratio = se.se_ratio;
    sol.cov_ag = se.cov_ag;
    return sol;
}

PreferenceSolution solve_preferences(const std::vector<SystemInputs>& ins) {
    if (ins.empty()) throw InsufficientData("no systems supplied");
    if (ins.size() == 1) return solve_preferences(ins.front());

    // Stack both equations of every system and solve by least squares.
    const int rows = 2 * static_cast<int>(ins.size());
    Eigen::MatrixXd design(rows, 2);
    Eigen::VectorXd lhs(rows);
    int r = 0;
    for (const auto& in : ins) {
        const ThetaSystem sys = build_theta_system(in);
        const auto& th = sys.theta;
        design(r, 0) = th[1] - th[2] - th[5] + th[6];
        design(r, 1) = -th[3] - th[4] + th[7] + th[8];
        lhs[r++] = th[0];
        design(r, 0) = th[10] - th[11] - th[14] + th[15];
        design(r, 1) = -th[12] - th[13] + th[16] + th[17];
        lhs[r++] = th[9];
    }
    const Eigen::Matrix2d gram = design.transpose() * design;
    Eigen::FullPivLU<Eigen::Matrix2d> lu(gram);
    if (!lu.isInvertible()) throw SingularSystem("stacked preference system is rank deficient");
    const Eigen::Vector2d ag = lu.solve(design.transpose() * lhs);

    PreferenceSolution sol;
    sol.a = ag[0];
    sol.g = ag[1];
    sol.ratio = ag[0] / ag[1];
    sol.residual_norm = (design * ag - lhs).norm();

    // Delta-method covariance by finite differences of the stacked solve
    // with block-diagonal theta covariance across systems.
    const int p = 18 * static_cast<int>(ins.size());
    Eigen::MatrixXd jac(2, p);
    Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
    std::vector<ThetaSystem> systems;
    systems.reserve(ins.size());
    for (const auto& in : ins) systems.push_back(build_theta_system(in));

    auto solve_stacked = [&](const std::vector<Eigen::VectorXd>& thetas) {
        Eigen::MatrixXd d(rows, 2);
        Eigen::VectorXd y(rows);
        int rr = 0;
        for (const auto& th : thetas) {
            d(rr, 0) = th[1] - th[2] - th[5] + th[6];
            d(rr, 1) = -th[3] - th[4] + th[7] + th[8];
            y[rr++] = th[0];
            d(rr, 0) = th[10] - th[11] - th[14] + th[15];
            d(rr, 1) = -th[12] - th[13] + th[16] + th[17];
            y[rr++] = th[9];
        }
        return Eigen::Vector2d((d.transpose() * d).ldlt().solve(d.transpose() * y));
    };
    std::vector<Eigen::VectorXd> thetas;
    for (const auto& s : systems) thetas.push_back(s.theta);
    for (std::size_t b = 0; b < systems.size(); ++b) {
        sigma.block(18 * b, 18 * b, 18, 18) = systems[b].sigma;
        for (int i = 0; i < 18; ++i) {
            const double step = 1e-6 * (1.0 + std::fabs(thetas[b][i]));
            auto plus = thetas, minus = thetas;
            plus[b][i] += step;
            minus[b][i] -= step;
            const Eigen::Vector2d d = (solve_stacked(plus) - solve_stacked(minus)) / (2 * step);
            jac(0, 18 * b + i) = d[0];
            jac(1, 18 * b + i) = d[1];
        }
    }
    const Eigen::Matrix2d cov = jac * sigma * jac.transpose();
    sol.cov_ag = cov;
    sol.se_a = std::sqrt(std::max(cov(0, 0), 0.0));
    sol.se_g = std::sqrt(std::max(cov(1, 1), 0.0));
    Eigen::Vector2d grad(1.0 / sol.g, -sol.a / (sol.g * sol.g));
    sol.se_ratio = std::sqrt(std::max(grad.dot(cov * grad), 0.0));
    return sol;
}

EtaEstimate solve_eta(double theta_H, double theta_P, double var_H, double var_P,
                      double cov_HP, double floor) {
    if (!(std::fabs(theta_P) > floor)) throw WeakDenominator();
    EtaEstimate out;
    out.eta = theta_H / theta_P;
    const double g1 = 1.0 / theta_P;
    const double g2 = -theta_H / (theta_P * theta_P);
    out.se = std::sqrt(
        std::max(g1 * g1 * var_H + g2 * g2 * var_P + 2.0 * g1 * g2 * cov_HP, 0.0));
    return out;
}

LocationEffects calibrate_location_effects(const Eigen::MatrixXd& pop,
                                           const Eigen::VectorXd& price,
                                           const Eigen::VectorXd& tax,
                                           const Eigen::VectorXd& spending,
                                           const Eigen::VectorXd& housing,
                                           const std::vector<HouseholdType>& types,
                                           double chi, double eta) {
    const int nk = static_cast<int>(pop.rows());
    const int nj = static_cast<int>(pop.cols());
    if (static_cast<int>(types.size()) != nk)
        throw DimensionMismatch("types size must match population rows");

    for (int k = 0; k < nk; ++k) {
        if (pop.row(k).sum() >= types[k].mass) throw ZeroOutsideOption();
        for (int j = 0; j < nj; ++j)
            if (!(pop(k, j) > 0.0))
                throw NonpositiveInput("observed populations must be positive");
    }

    LocationEffects out;
    out.amenity.resize(nj);
    out.productivity.resize(nj);
    for (int j = 0; j < nj; ++j) {
        const double pop_total = pop.col(j).sum();
        double acc = 0.0;
        for (int k = 0; k < nk; ++k) {
            const auto& ht = types[k];
            const double outside = ht.mass - pop.row(k).sum();
            const double non_amenity =
                ht.alpha * std::log(spending[j]) - ht.alpha * chi * std::log(pop_total) +
                ht.gamma * std::log(ht.income - price[j] * (1.0 + tax[j]));
            acc += ht.theta * std::log(pop(k, j) / outside) - non_amenity;
        }
        out.amenity[j] = acc / nk;
    }
    // Supply residuals with lambda = 0, then normalize mean(B) to zero.
    for (int j = 0; j < nj; ++j)
        out.productivity[j] = std::log(housing[j]) - eta * std::log(price[j]);
    out.lambda = out.productivity.mean();
    out.productivity.array() -= out.lambda;
    return out;
}

StructuralEstimate identify(const Dataset& data, const RddOptions& opts) {
    const EstimationTable table = make_estimation_table(data);
    const int nk = table.n_types;
    const int nj = table.n_jurisdictions;

    // Districts whose own referenda produce two-sided running-variable
    // support; these carry the cross-equation variation in rho that pins
    // (a, g) jointly. Remaining districts contribute through the pooled
    // eta estimate only.
    RddOptions sub_opts = opts;
    sub_opts.min_side_obs = 8;
    sub_opts.min_effective_obs = 8;
    std::vector<ElasticityEstimates> district_est;
    for (int j = 0; j < nj; ++j) {
        const EstimationTable sub = filter_district(table, j);
        int neg = 0, pos = 0;
        for (int i = 0; i < sub.size(); ++i) (sub.margin[i] < 0.0 ? neg : pos)++;
        if (neg < 10 || pos < 10) continue;
        try {
            ElasticityEstimates est = estimate_elasticities(sub, sub_opts);
            est.chi = data.config.chi;
            district_est.push_back(std::move(est));
        } catch (const DomainError&) {
            // skip districts whose subsample defeats the estimator
        }
    }

    // Pooled estimates: used for eta (exact under the housing identity)
    // and as the fallback system when no district subsample qualifies.
    ElasticityEstimates pooled = estimate_elasticities(table, opts);
    pooled.chi = data.config.chi;

    StructuralEstimate out;
    out.n_systems = static_cast<int>(district_est.size());
    out.a.resize(nk);
    out.g.resize(nk);
    out.se_a.resize(nk);
    out.se_g.resize(nk);
    out.ratio.resize(nk);
    out.se_ratio.resize(nk);
    out.lw_intensity = pooled.lw_intensity;
    out.residual_norm = 0.0;
    out.sigma_zeta = Eigen::MatrixXd::Zero(2 * nk + 1, 2 * nk + 1);

    for (int k = 0; k < nk; ++k) {
        std::vector<SystemInputs> systems;
        for (const auto& est : district_est)
            systems.push_back(estimate_system_inputs(est, k));
        if (systems.empty()) systems.push_back(estimate_system_inputs(pooled, k));
        const PreferenceSolution sol = solve_preferences(systems);
        out.a[k] = sol.a;
        out.g[k] = sol.g;
        out.se_a[k] = sol.se_a;
        out.se_g[k] = sol.se_g;
        out.ratio[k] = sol.ratio;
        out.se_ratio[k] = sol.se_ratio;
        out.residual_norm += sol.residual_norm;

        const Eigen::Matrix2d& cov = sol.cov_ag;
        out.sigma_zeta(k, k) = cov(0, 0);
        out.sigma_zeta(nk + k, nk + k) = cov(1, 1);
        out.sigma_zeta(k, nk + k) = cov(0, 1);
        out.sigma_zeta(nk + k, k) = cov(0, 1);
    }

    const double th_H = pooled.value[pooled.idx_eH_own()];
    const double th_P = pooled.value[pooled.idx_eP_own()];
    const auto eta_est =
        solve_eta(th_H, th_P, pooled.cov(pooled.idx_eH_own(), pooled.idx_eH_own()),
                  pooled.cov(pooled.idx_eP_own(), pooled.idx_eP_own()),
                  pooled.cov(pooled.idx_eH_own(), pooled.idx_eP_own()));
    out.eta = eta_est.eta;
    out.se_eta = eta_est.se;
    out.sigma_zeta(2 * nk, 2 * nk) = eta_est.se * eta_est.se;

    out.zeta.resize(2 * nk + 1);
    out.zeta.head(nk) = out.a;
    out.zeta.segment(nk, nk) = out.g;
    out.zeta[2 * nk] = out.eta;
    return out;
}

}  // namespace ident
}  // namespace rdx
