#include "rdx/extrap.hpp"

#include <cmath>
#include <limits>

namespace rdx {

ExtrapolationGrid ExtrapolationGrid::uniform(double lo, double hi, int n) {
    ExtrapolationGrid g;
    g.points.resize(n);
    for (int i = 0; i < n; ++i)
        g.points[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
    g.validate();
    return g;
}

void ExtrapolationGrid::validate() const {
    if (points.empty()) throw NonpositiveInput("grid must be nonempty");
    double prev = 0.0;
    for (double p : points) {
        if (!(p > prev)) throw NonpositiveInput("grid must be strictly increasing and positive");
        prev = p;
    }
}

namespace extrap {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

int n_bins(double kappa) {
    return static_cast<int>(std::ceil(1.0 / kappa - 1e-9));
}

int bin_index(double margin, double kappa) {
    const int nb = n_bins(kappa);
    int idx = static_cast<int>(std::floor((margin + 0.5) / kappa));
    if (idx >= nb) idx = nb - 1;  // fold the closed right endpoint
    if (idx < 0) idx = 0;
    return idx;
}

Economy scenario_economy(const ReferendumRecord& record, const StructuralEstimate& zeta,
                         const TurnoutFit& turnout, double chi) {
    const int nk = static_cast<int>(record.economy.types.size());
    Economy econ;
    econ.eta = zeta.eta;
    econ.lambda = 0.0;  // replaced by the calibrated value below
    econ.chi = chi;
    econ.types.resize(nk);
    for (int k = 0; k < nk; ++k) {
        auto& t = econ.types[k];
        t.alpha = zeta.a[k];
        t.gamma = zeta.g[k];
        t.beta = 1.0 - t.alpha - t.gamma;
        t.income = record.economy.types[k].income;
        t.mass = record.economy.types[k].mass;
        t.theta = 1.0;
        t.mu0 = turnout.mu0(k);
        t.mu1 = turnout.mu1(k);
        t.sigma0 = turnout.sigma0(k);
    }
    const auto& pre = record.pre;
    const auto effects = ident::calibrate_location_effects(
        pre.pop, pre.price, pre.tax, pre.spending, pre.housing, econ.types, chi, zeta.eta);
    econ.lambda = effects.lambda;
    econ.jurisdictions.resize(record.economy.n_jurisdictions());
    for (int j = 0; j < record.economy.n_jurisdictions(); ++j) {
        econ.jurisdictions[j].amenity = effects.amenity[j];
        econ.jurisdictions[j].productivity = effects.productivity[j];
        econ.jurisdictions[j].spending = pre.spending[j];
    }
    return econ;
}

std::vector<CounterfactualRecord> simulate_counterfactual_grid(
    const ReferendumRecord& record, const ExtrapolationGrid& grid,
    const StructuralEstimate& zeta, const TurnoutFit& turnout, Anticipation mode,
    const SolverConfig& solver) {
    grid.validate();
    const Economy econ = scenario_economy(record, zeta, turnout, record.economy.chi);
    const int j = record.district;

    // Step (3b): the rejection equilibrium is the observed baseline and is
    // shared across the whole grid. The calibration makes it an exact
    // fixed point of the scenario economy.
    EquilibriumState baseline = record.pre;
    baseline.spending = record.pre.spending;

    std::vector<CounterfactualRecord> out;
    out.reserve(grid.size());
    const EquilibriumState* warm = &baseline;
    EquilibriumState last_treated;
    for (int gi = 0; gi < grid.size(); ++gi) {
        const double dlg = grid.points[gi];
        try {
            const VoteOutcome vote =
                voting::referendum_outcome(econ, baseline, j, dlg, mode, solver);
            Eigen::VectorXd g1 = baseline.spending;
            g1[j] *= std::exp(dlg);
            const EquilibriumState treated = equilibrium::solve(econ, g1, solver, warm);

            CounterfactualRecord rec;
            rec.referendum = record.referendum;
            rec.dlogG = dlg;
            rec.margin = vote.margin;
            rec.price0 = baseline.price[j];
            rec.price1 = treated.price[j];
            rec.housing0 = baseline.housing[j];
            rec.housing1 = treated.housing[j];
            rec.tax0 = baseline.tax[j];
            rec.tax1 = treated.tax[j];
            rec.spending0 = baseline.spending[j];
            rec.spending1 = treated.spending[j];
            rec.pop0 = baseline.pop.col(j);
            rec.pop1 = treated.pop.col(j);
            out.push_back(std::move(rec));
            last_treated = treated;
            warm = &last_treated;  // adjacent grid points are close
        } catch (const DomainError&) {
            // skip failed grid points
        }
    }
    return out;
}

AveCurve binned_ave(const std::vector<CounterfactualRecord>& records, double kappa,
                    const std::function<double(const CounterfactualRecord&)>& outcome) {
    if (!(kappa > 0.0)) throw NonpositiveInput("bin width must be positive");
    const int nb = n_bins(kappa);
    AveCurve curve;
    curve.kappa = kappa;
    curve.edges.resize(nb);
    for (int b = 0; b < nb; ++b) curve.edges[b] = -0.5 + b * kappa;
    curve.mean = Eigen::VectorXd::Constant(nb, kNaN);
    curve.variance = Eigen::VectorXd::Constant(nb, kNaN);
    curve.count = Eigen::VectorXi::Zero(nb);

    Eigen::VectorXd sum = Eigen::VectorXd::Zero(nb);
    for (const auto& rec : records) {
        const int b = bin_index(rec.margin, kappa);
        sum[b] += outcome(rec);
        curve.count[b] += 1;
    }
    for (int b = 0; b < nb; ++b)
        if (curve.count[b] > 0) curve.mean[b] = sum[b] / curve.count[b];
    return curve;
}

NestedBootstrapResult nested_bootstrap_variance(
    const std::function<BinnedDraw(int m, Rng&)>& outer, int m_draws, int r_draws, int bins,
    Rng& rng) {
    if (m_draws < 2 || r_draws < 2)
        throw NonpositiveInput("nested bootstrap needs at least two draws per level");

    Eigen::MatrixXd outer_ave(m_draws, bins);
    Eigen::MatrixXd within_var = Eigen::MatrixXd::Constant(m_draws, bins, kNaN);
    for (int m = 0; m < m_draws; ++m) {
        BinnedDraw draw = outer(m, rng);
        if (draw.ave.size() != bins)
            throw DimensionMismatch("outer draw bin count mismatch");
        outer_ave.row(m) = draw.ave.transpose();

        Eigen::MatrixXd inner(r_draws, bins);
        for (int r = 0; r < r_draws; ++r) {
            const Eigen::VectorXd v = draw.inner(r, rng);
            if (v.size() != bins) throw DimensionMismatch("inner draw bin count mismatch");
            inner.row(r) = v.transpose();
        }
        for (int b = 0; b < bins; ++b) {
            double mean = 0.0;
            int n = 0;
            for (int r = 0; r < r_draws; ++r)
                if (std::isfinite(inner(r, b))) {
                    mean += inner(r, b);
                    ++n;
                }
            if (n < 2) continue;
            mean /= n;
            double var = 0.0;
            for (int r = 0; r < r_draws; ++r)
                if (std::isfinite(inner(r, b))) var += (inner(r, b) - mean) * (inner(r, b) - mean);
            within_var(m, b) = var / (n - 1.0);
        }
    }

    NestedBootstrapResult res;
    res.within = Eigen::VectorXd::Constant(bins, kNaN);
    res.between = Eigen::VectorXd::Constant(bins, kNaN);
    res.total = Eigen::VectorXd::Constant(bins, kNaN);
    res.outer_count = Eigen::VectorXi::Zero(bins);

    for (int b = 0; b < bins; ++b) {
        double within = 0.0;
        int n_within = 0;
        double mean = 0.0;
        int n_outer = 0;
        for (int m = 0; m < m_draws; ++m) {
            if (std::isfinite(within_var(m, b))) {
                within += within_var(m, b);
                ++n_within;
            }
            if (std::isfinite(outer_ave(m, b))) {
                mean += outer_ave(m, b);
                ++n_outer;
            }
        }
        res.outer_count[b] = n_outer;
        if (n_outer < 2 || n_within < 1) continue;
        within /= n_within;
        mean /= n_outer;
        double between = 0.0;
        for (int m = 0; m < m_draws; ++m)
            if (std::isfinite(outer_ave(m, b)))
                between += (outer_ave(m, b) - mean) * (outer_ave(m, b) - mean);
        between /= (n_outer - 1.0);
        res.within[b] = within;
        res.between[b] = between;
        res.total[b] = within + (1.0 + 1.0 / n_outer) * between;
    }
    return res;
}

}  // namespace extrap
}  // namespace rdx
