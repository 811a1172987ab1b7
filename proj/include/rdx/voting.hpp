#pragma once

#include "rdx/equilibrium.hpp"
#include "rdx/model.hpp"
#include "rdx/types.hpp"

namespace rdx {

/// Outcome of one referendum: the approval vote share margin, the
/// approval decision and the per-type turnout/approval primitives.
struct VoteOutcome {
    double margin = 0.0;             // S, vote share minus 0.5
    bool approved = false;           // D = (S > 0)
    Eigen::VectorXd turnout;         // T^k in [0, 1]
    Eigen::VectorXd approval;        // W^k in {0, 1}
    Eigen::VectorXd utility_delta;   // v^k(dlogG) - v^k(0)
};

namespace voting {

/// Probability that a type participates, given the anticipated utility
/// benefit |dv|: T = Phi((log benefit - (mu0 + mu1*dlogG)) / sigma0).
/// A zero benefit yields T = 0 (the log-normal CDF limit).
double turnout_probability(const HouseholdType& type, double benefit, double dlogG);

/// Approval vote share margin S = sum_k N^k T^k W^k / sum_k N^k T^k - 0.5.
/// Throws ZeroTurnout when the expected mass of voters is zero.
double vote_share_margin(const Eigen::VectorXd& populations, const Eigen::VectorXd& turnouts,
                         const Eigen::VectorXd& approvals);

/// Hold a referendum in district j of a solved state: compute per-type
/// utility deltas under the anticipation mode, approvals (dv >= 0 approves;
/// indifferent households approve), turnout, the margin and the approval
/// decision (margin strictly positive passes).
VoteOutcome referendum_outcome(const Economy& econ, const EquilibriumState& state, int j,
                               double dlogG, Anticipation mode,
                               const SolverConfig& solver = {});

}  // namespace voting
}  // namespace rdx
