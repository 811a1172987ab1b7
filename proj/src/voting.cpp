#include "rdx/voting.hpp"

#include <cmath>
#include <limits>

#include "rdx/rng.hpp"

namespace rdx {
namespace voting {

double turnout_probability(const HouseholdType& type, double benefit, double dlogG) {
    if (benefit < 0.0) throw NonpositiveInput("turnout benefit must be nonnegative");
    if (benefit == 0.0) return 0.0;
    const double z = (std::log(benefit) - (type.mu0 + type.mu1 * dlogG)) / type.sigma0;
    return normal_cdf(z);
}

double vote_share_margin(const Eigen::VectorXd& populations, const Eigen::VectorXd& turnouts,
                         const Eigen::VectorXd& approvals) {
    const double voters = (populations.array() * turnouts.array()).sum();
    if (!(voters > 0.0)) throw ZeroTurnout();
    const double approving =
        (populations.array() * turnouts.array() * approvals.array()).sum();
    return approving / voters - 0.5;
}

VoteOutcome referendum_outcome(const Economy& econ, const EquilibriumState& state, int j,
                               double dlogG, Anticipation mode, const SolverConfig& solver) {
    const int nk = econ.n_types();
    VoteOutcome out;
    out.turnout.resize(nk);
    out.approval.resize(nk);
    out.utility_delta.resize(nk);

    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    auto current_disposable = [&](int k) {
        return econ.types[k].income - state.price[j] * (1.0 + state.tax[j]);
    };

    if (mode == Anticipation::FullEquilibrium) {
        Economy scenario = econ;
        for (int l = 0; l < econ.n_jurisdictions(); ++l)
            scenario.jurisdictions[l].spending = state.spending[l];
        const auto pair = equilibrium::counterfactual_pair(scenario, j, dlogG, solver, &state);
        for (int k = 0; k < nk; ++k) {
            if (!(current_disposable(k) > 0.0)) {
                out.utility_delta[k] = 0.0;  // not a resident; carries no vote weight
                continue;
            }
            const double d1 = econ.types[k].income -
                              pair.state1.price[j] * (1.0 + pair.state1.tax[j]);
            out.utility_delta[k] =
                d1 > 0.0 ? model::vote_delta_between(econ.types[k], scenario, pair.state0,
                                                     pair.state1, j)
                         : kNegInf;
        }
    } else {
        for (int k = 0; k < nk; ++k) {
            if (!(current_disposable(k) > 0.0)) {
                out.utility_delta[k] = 0.0;
                continue;
            }
            try {
                out.utility_delta[k] = model::myopic_vote_delta(econ.types[k], state, j, dlogG);
            } catch (const NonpositiveDisposableIncome&) {
                // The counterfactual tax would expropriate this resident.
                out.utility_delta[k] = kNegInf;
            }
        }
    }

    for (int k = 0; k < nk; ++k) {
        out.approval[k] = (out.utility_delta[k] >= 0.0) ? 1.0 : 0.0;
        out.turnout[k] =
            turnout_probability(econ.types[k], std::fabs(out.utility_delta[k]), dlogG);
    }
    out.margin = vote_share_margin(state.pop.col(j), out.turnout, out.approval);
    out.approved = out.margin > 0.0;
    return out;
}

}  // namespace voting
}  // namespace rdx
