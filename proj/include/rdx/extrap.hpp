#pragma once

#include <functional>
#include <vector>

#include "rdx/dgp.hpp"
#include "rdx/ident.hpp"
#include "rdx/mle.hpp"

namespace rdx {

/// Strictly increasing positive grid of proposed log spending changes.
struct ExtrapolationGrid {
    std::vector<double> points;

    static ExtrapolationGrid uniform(double lo, double hi, int n);
    void validate() const;
    int size() const { return static_cast<int>(points.size()); }
};

/// Simulated counterfactual for one (referendum, grid point): the margin
/// the proposal would generate and the own-district potential outcomes
/// under rejection (0) and approval (1).
struct CounterfactualRecord {
    int referendum = 0;
    double dlogG = 0.0;
    double margin = 0.0;
    double price0 = 0.0, price1 = 0.0;
    double housing0 = 0.0, housing1 = 0.0;
    double tax0 = 0.0, tax1 = 0.0;
    double spending0 = 0.0, spending1 = 0.0;
    Eigen::VectorXd pop0, pop1;  // per-type masses in the district

    double price_elasticity() const { return (std::log(price1) - std::log(price0)) / dlogG; }
    double housing_elasticity() const {
        return (std::log(housing1) - std::log(housing0)) / dlogG;
    }
    double tax_elasticity() const {
        return (std::log1p(tax1) - std::log1p(tax0)) / dlogG;
    }
    double pop_elasticity(int k) const {
        return (std::log(pop1[k]) - std::log(pop0[k])) / dlogG;
    }
};

/// Binned average arc elasticities over the margin support [-0.5, 0.5].
/// Bins are left-closed; empty bins carry count 0 and NaN means.
struct AveCurve {
    double kappa = 0.0;
    Eigen::VectorXd edges;     // left edges
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;  // filled by the bootstrap; NaN otherwise
    Eigen::VectorXi count;

    int n_bins() const { return static_cast<int>(edges.size()); }
};

namespace extrap {

/// Index of the bin containing margin s (left-closed, right-open; the
/// right endpoint 0.5 folds into the last bin).
int bin_index(double margin, double kappa);
int n_bins(double kappa);

/// Normalized economy for counterfactual simulation: types carry the
/// estimated (a, g) with unit Gumbel scale and the turnout parameters;
/// amenities and productivities are calibrated so that the observed
/// baseline state is exactly the model's dlogG = 0 equilibrium.
Economy scenario_economy(const ReferendumRecord& record, const StructuralEstimate& zeta,
                         const TurnoutFit& turnout, double chi);

/// Steps (1)-(3) of the extrapolation algorithm for one referendum: share
/// the baseline across the grid, simulate margins, and solve the treated
/// equilibrium per grid point. Failed grid points are skipped.
std::vector<CounterfactualRecord> simulate_counterfactual_grid(
    const ReferendumRecord& record, const ExtrapolationGrid& grid,
    const StructuralEstimate& zeta, const TurnoutFit& turnout, Anticipation mode,
    const SolverConfig& solver);

/// Binned mean of an arc-elasticity accessor over the records.
AveCurve binned_ave(const std::vector<CounterfactualRecord>& records, double kappa,
                    const std::function<double(const CounterfactualRecord&)>& outcome);

/// One draw of the two-step bootstrap: the outer AVE point estimates and
/// a sampler for the inner redraws.
struct BinnedDraw {
    Eigen::VectorXd ave;  // per bin, NaN where empty
    std::function<Eigen::VectorXd(int r, Rng&)> inner;
};

struct NestedBootstrapResult {
    Eigen::VectorXd within;    // Eq.-style within component per bin
    Eigen::VectorXd between;   // between component per bin
    Eigen::VectorXd total;     // within + (1 + 1/m) between
    Eigen::VectorXi outer_count;  // outer draws contributing per bin
};

/// Two-step nested parametric bootstrap: the outer closure supplies the
/// per-draw AVE curve and an inner sampler; variances combine as
/// total = within + (1 + 1/m) * between, bin by bin.
NestedBootstrapResult nested_bootstrap_variance(
    const std::function<BinnedDraw(int m, Rng&)>& outer, int m_draws, int r_draws,
    int bins, Rng& rng);

}  // namespace extrap
}  // namespace rdx
