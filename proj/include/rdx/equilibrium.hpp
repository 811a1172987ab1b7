#pragma once

#include <optional>

#include "rdx/model.hpp"
#include "rdx/types.hpp"

namespace rdx {

struct SolverConfig {
    double tolerance = 1e-10;   // max absolute residual
    int max_iterations = 10000;
    double damping = 0.5;       // in (0, 1]

    void validate() const {
        if (!(tolerance > 0.0)) throw NonpositiveInput("solver tolerance must be positive");
        if (!(damping > 0.0 && damping <= 1.0))
            throw NonpositiveInput("solver damping must lie in (0, 1]");
        if (max_iterations <= 0) throw NonpositiveInput("max_iterations must be positive");
    }
};

struct NoConvergence : DomainError {
    int iterations;
    double residual;
    NoConvergence(int it, double res)
        : DomainError("equilibrium solver did not converge (residual " +
                      std::to_string(res) + " after " + std::to_string(it) + " iterations)"),
          iterations(it),
          residual(res) {}
};

struct InfeasibleIncome : DomainError {
    InfeasibleIncome()
        : DomainError("no fixed point keeps disposable income positive in an occupied cell") {}
};

/// Baseline state and its single-district counterfactual: the spending
/// vectors differ only in the district that held the referendum.
struct CounterfactualPair {
    EquilibriumState state0;  // dlogG = 0
    EquilibriumState state1;  // G_j scaled by e^{dlogG}
    int district = 0;
    double dlogG = 0.0;
};

namespace equilibrium {

/// Solve the sorting fixed point for the given spending vector by damped
/// iteration on the per-type population matrix:
///   N -> (P, H) via market clearing -> tau via balanced budget
///     -> systematic utilities -> logit populations N'.
/// Populations update as N <- (1-d) N + d N'.
EquilibriumState solve(const Economy& econ, const Eigen::VectorXd& spending,
                       const SolverConfig& config,
                       const EquilibriumState* warm_start = nullptr);

/// Convenience overload using the economy's own spending vector.
EquilibriumState solve(const Economy& econ, const SolverConfig& config,
                       const EquilibriumState* warm_start = nullptr);

/// Max-norm residual of the state against the equilibrium conditions
/// (logit populations, market clearing, balanced budget).
double residual(const Economy& econ, const Eigen::VectorXd& spending,
                const EquilibriumState& state);

/// Baseline plus the equilibrium after scaling G_j by e^{dlogG} in
/// district j only; the counterfactual solve warm-starts from state0.
CounterfactualPair counterfactual_pair(const Economy& econ, int district, double dlogG,
                                       const SolverConfig& config,
                                       const EquilibriumState* baseline = nullptr);

/// Solve the fixed point with fixed tax rates replacing the
/// balanced-budget condition, and return the implied spending vector
/// G_j = tau_j P_j H_j together with the state. Used to pin baseline
/// spending levels for simulated economies.
struct FixedTaxSolution {
    EquilibriumState state;
    Eigen::VectorXd spending;
};
FixedTaxSolution solve_fixed_tax(const Economy& econ, double tau_bar,
                                 const SolverConfig& config);
FixedTaxSolution solve_fixed_tax(const Economy& econ, const Eigen::VectorXd& tau,
                                 const SolverConfig& config);

}  // namespace equilibrium
}  // namespace rdx
