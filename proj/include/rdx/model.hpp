#pragma once

#include <Eigen/Core>

#include "rdx/types.hpp"

namespace rdx {

/// How voters anticipate equilibrium responses when comparing the status
/// quo with a proposed spending change. Myopic voters internalize their
/// own district's budget balance but hold prices, housing and populations
/// fixed; full-equilibrium voters anticipate the re-solved equilibrium.
enum class Anticipation { Myopic, FullEquilibrium };

struct GpfSlopes {
    double dlogP_dlogG = 0.0;
    double dlog1ptau_dlogG = 0.0;
};

namespace model {

/// Gross-of-tax housing expenditure share rho = P(1+tau) / (y - P(1+tau)).
/// Throws NonpositiveDisposableIncome when y <= P(1+tau).
double expenditure_share(double income, double price, double tax);

/// Systematic (non-idiosyncratic) utility of a type in one jurisdiction:
///   v = Abar + alpha*log G - alpha*chi*log N + gamma*log[y - P(1+tau)].
double systematic_utility(const HouseholdType& type, double amenity, double spending,
                          double pop_total, double price, double tax, double chi);

/// Like systematic_utility but maps infeasible disposable income to -inf
/// instead of throwing, so solvers can traverse infeasible regions.
double systematic_utility_or_neg_inf(const HouseholdType& type, double amenity,
                                     double spending, double pop_total, double price,
                                     double tax, double chi);

/// Logit choice shares over jurisdictions plus the outside option.
/// Input: systematic utilities v (may contain -inf), Gumbel scale theta.
/// Output: vector of size v.size()+1; last entry is the outside share.
/// Computed with max-shift so large |v|/theta cannot overflow.
Eigen::VectorXd choice_probabilities(const Eigen::VectorXd& v, double theta);

/// Market clearing: log P = (log N - lambda - B)/eta and H = N exactly.
struct ClearingPoint {
    double price;
    double housing;
};
ClearingPoint market_clearing_price(double pop_total, double lambda, double eta,
                                    double productivity);

/// Housing supplied at a given price: log H = lambda + eta*log P + B.
double housing_supply_log(double log_price, double lambda, double eta, double productivity);

/// Balanced budget: tau = G / (P * H).
double balanced_budget_tax(double spending, double price, double housing);

/// Slopes of the Government Possibility Frontier from the aggregated
/// preference terms alpha_hat and gamma_hat (sums of (alpha/theta) and
/// (gamma*rho/theta) weighted by N^k(1 - N^k/sigma^k)). Myopic voting
/// corresponds to alpha_hat = gamma_hat = 0.
GpfSlopes gpf_slopes_from_hats(double alpha_hat, double gamma_hat, double eta, double tau,
                               double chi, double pop_total);

/// GPF slopes at jurisdiction j of an equilibrium state.
GpfSlopes gpf_slopes(const Economy& econ, const EquilibriumState& state, int j,
                     Anticipation mode);

/// Preferred tax rate tau* = max{alpha/(gamma*rho - alpha), 0} for a given
/// expenditure share. Returns +infinity when gamma*rho <= alpha (the
/// first-order condition has no interior solution).
double preferred_tax_rate(const HouseholdType& type, double rho);

/// Utility difference v(dlogG) - v(0) for a type residing in district j,
/// with the counterfactual tax implied by the held-fixed budget:
/// tau' = G e^{dlogG} / (P H); P, H, N fixed (myopic anticipation).
double myopic_vote_delta(const HouseholdType& type, const EquilibriumState& state, int j,
                         double dlogG);

/// Utility difference between two solved states for a type in district j
/// (the full-equilibrium anticipation mode).
double vote_delta_between(const HouseholdType& type, const Economy& econ,
                          const EquilibriumState& state0, const EquilibriumState& state1,
                          int j);

}  // namespace model
}  // namespace rdx
