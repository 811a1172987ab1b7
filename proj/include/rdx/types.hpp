#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace rdx {

// Base class for all domain errors thrown by the library.
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonpositiveDisposableIncome : DomainError {
    NonpositiveDisposableIncome()
        : DomainError("disposable income is nonpositive") {}
};
struct NonpositiveSpending : DomainError {
    NonpositiveSpending() : DomainError("spending must be positive") {}
};
struct NonpositivePopulation : DomainError {
    NonpositivePopulation() : DomainError("population must be positive") {}
};
struct NonpositiveInput : DomainError {
    explicit NonpositiveInput(const std::string& what) : DomainError(what) {}
};
struct SingularSystem : DomainError {
    explicit SingularSystem(const std::string& what) : DomainError(what) {}
};
struct ZeroTurnout : DomainError {
    ZeroTurnout() : DomainError("expected mass of voters is zero") {}
};

/// One of the K discrete household types.
///
/// Utility weights are in utils per log unit; `income` is in numeraire
/// units; `mass` is the type's population mass. `theta` scales the Gumbel
/// amenity shock. (mu0, mu1, sigma0) parameterize the log-normal turnout
/// cost: log C ~ N(mu0 + mu1 * dlogG, sigma0^2).
struct HouseholdType {
    double alpha = 0.0;   // preference for log education spending
    double gamma = 0.0;   // preference for log nonhousing consumption
    double beta = 0.0;    // preference for log housing (unused in equilibrium; H = 1)
    double income = 0.0;  // endowment y
    double mass = 0.0;    // sigma^k
    double theta = 1.0;   // Gumbel scale of the idiosyncratic amenity shock
    double mu0 = 0.0;     // turnout log-cost intercept
    double mu1 = 0.0;     // turnout log-cost slope in dlogG
    double sigma0 = 1.0;  // turnout log-cost standard deviation
};

struct Jurisdiction {
    double amenity = 0.0;       // Abar_j, utils
    double productivity = 0.0;  // B_j, log housing units
    double spending = 0.0;      // G_j, numeraire units, > 0
};

/// Immutable model configuration: jurisdictions, types and the
/// housing-supply / congestion primitives.
struct Economy {
    std::vector<Jurisdiction> jurisdictions;
    std::vector<HouseholdType> types;
    double eta = 0.6;     // housing supply elasticity, > 0
    double lambda = 0.0;  // housing supply intercept, log units
    double chi = 0.0;     // congestion parameter in [0, 1]

    int n_jurisdictions() const { return static_cast<int>(jurisdictions.size()); }
    int n_types() const { return static_cast<int>(types.size()); }

    void validate() const {
        if (jurisdictions.empty() || types.empty())
            throw NonpositiveInput("economy needs at least one jurisdiction and one type");
        if (eta <= 0.0) throw NonpositiveInput("eta must be positive");
        if (chi < 0.0 || chi > 1.0) throw NonpositiveInput("chi must lie in [0, 1]");
        for (const auto& t : types) {
            if (t.alpha <= 0.0 || t.gamma <= 0.0 || t.mass <= 0.0 || t.theta <= 0.0 ||
                t.sigma0 <= 0.0)
                throw NonpositiveInput("household type primitives must be positive");
        }
        for (const auto& j : jurisdictions) {
            if (!(j.spending > 0.0)) throw NonpositiveInput("jurisdiction spending must be positive");
            if (!std::isfinite(j.amenity) || !std::isfinite(j.productivity))
                throw NonpositiveInput("jurisdiction amenity/productivity must be finite");
        }
    }
};

/// Per-jurisdiction prices, taxes, housing and populations satisfying
/// the equilibrium conditions (up to solver tolerance).
struct EquilibriumState {
    Eigen::VectorXd price;       // P_j
    Eigen::VectorXd tax;         // tau_j
    Eigen::VectorXd housing;     // H_j
    Eigen::VectorXd pop_total;   // N_j
    Eigen::MatrixXd pop;         // N^k_j, K x J
    Eigen::VectorXd spending;    // G_j the state was solved at
    int iterations = 0;          // solver iterations used
    double residual = 0.0;       // max-norm residual at exit

    int n_jurisdictions() const { return static_cast<int>(price.size()); }
    int n_types() const { return static_cast<int>(pop.rows()); }

    /// Outside-option mass of type k: sigma^k minus the inside mass.
    double outside_mass(const Economy& econ, int k) const {
        return econ.types[k].mass - pop.row(k).sum();
    }
};

}  // namespace rdx
