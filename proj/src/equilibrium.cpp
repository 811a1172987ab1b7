#include "rdx/equilibrium.hpp"

#include <cmath>
#include <limits>

namespace rdx {
namespace equilibrium {

namespace {

// Populations below this floor are treated as structurally empty.
constexpr double kPopFloor = 1e-14;

// Given populations, fill prices, housing and taxes; then compute the
// logit target populations. Returns the max-norm population residual.
double forward_pass(const Economy& econ, const Eigen::VectorXd& spending,
                    const Eigen::MatrixXd& pop, Eigen::VectorXd& price,
                    Eigen::VectorXd& housing, Eigen::VectorXd& tax,
                    Eigen::VectorXd& pop_total, Eigen::MatrixXd& pop_target) {
    const int nj = econ.n_jurisdictions();
    const int nk = econ.n_types();

    for (int j = 0; j < nj; ++j) {
        pop_total[j] = pop.col(j).sum();
        const double n = std::max(pop_total[j], kPopFloor);
        const auto cp = model::market_clearing_price(n, econ.lambda, econ.eta,
                                                     econ.jurisdictions[j].productivity);
        price[j] = cp.price;
        housing[j] = cp.housing;
        tax[j] = model::balanced_budget_tax(spending[j], price[j], housing[j]);
    }

    double max_resid = 0.0;
    Eigen::VectorXd v(nj);
    for (int k = 0; k < nk; ++k) {
        const auto& type = econ.types[k];
        for (int j = 0; j < nj; ++j) {
            v[j] = model::systematic_utility_or_neg_inf(
                type, econ.jurisdictions[j].amenity, spending[j],
                std::max(pop_total[j], kPopFloor), price[j], tax[j], econ.chi);
        }
        const Eigen::VectorXd shares = model::choice_probabilities(v, type.theta);
        for (int j = 0; j < nj; ++j) {
            pop_target(k, j) = type.mass * shares[j];
            max_resid = std::max(max_resid, std::fabs(pop_target(k, j) - pop(k, j)));
        }
    }
    return max_resid;
}

Eigen::MatrixXd initial_population(const Economy& econ) {
    const int nj = econ.n_jurisdictions();
    const int nk = econ.n_types();
    Eigen::MatrixXd pop(nk, nj);
    // Spread each type evenly over inside locations, leaving half outside.
    for (int k = 0; k < nk; ++k)
        pop.row(k).setConstant(0.5 * econ.types[k].mass / static_cast<double>(nj));
    return pop;
}

}  // namespace

EquilibriumState solve(const Economy& econ, const Eigen::VectorXd& spending,
                       const SolverConfig& config, const EquilibriumState* warm_start) {
    econ.validate();
    config.validate();
    const int nj = econ.n_jurisdictions();
    const int nk = econ.n_types();
    if (spending.size() != nj) throw NonpositiveInput("spending vector size mismatch");
    for (int j = 0; j < nj; ++j)
        if (!(spending[j] > 0.0)) throw NonpositiveInput("spending must be positive");

    EquilibriumState st;
    st.spending = spending;
    st.pop = warm_start ? warm_start->pop : initial_population(econ);
    st.price.resize(nj);
    st.housing.resize(nj);
    st.tax.resize(nj);
    st.pop_total.resize(nj);

    Eigen::MatrixXd target(nk, nj);
    double resid = 0.0;
    double prev_resid = std::numeric_limits<double>::infinity();
    double damping = config.damping;
    for (int it = 1; it <= config.max_iterations; ++it) {
        resid = forward_pass(econ, spending, st.pop, st.price, st.housing, st.tax,
                             st.pop_total, target);
        if (resid < config.tolerance) {
            st.iterations = it;
            st.residual = resid;
            // A cell is occupied when its mass is meaningfully above the
            // convergence scale; occupied cells must afford the district.
            const double occupied = 100.0 * config.tolerance;
            for (int j = 0; j < nj; ++j) {
                if (st.pop_total[j] <= nk * occupied) throw InfeasibleIncome();
                for (int k = 0; k < nk; ++k) {
                    if (st.pop(k, j) > occupied &&
                        econ.types[k].income <= st.price[j] * (1.0 + st.tax[j]))
                        throw InfeasibleIncome();
                }
            }
            return st;
        }
        // Oscillation control: back off the damping when the residual
        // grows, recover slowly toward the configured value.
        if (resid > prev_resid)
            damping = std::max(0.5 * damping, 0.02);
        else
            damping = std::min(1.05 * damping, config.damping);
        prev_resid = resid;
        st.pop = (1.0 - damping) * st.pop + damping * target;
    }
    throw NoConvergence(config.max_iterations, resid);
}

EquilibriumState solve(const Economy& econ, const SolverConfig& config,
                       const EquilibriumState* warm_start) {
    Eigen::VectorXd g(econ.n_jurisdictions());
    for (int j = 0; j < econ.n_jurisdictions(); ++j) g[j] = econ.jurisdictions[j].spending;
    return solve(econ, g, config, warm_start);
}

double residual(const Economy& econ, const Eigen::VectorXd& spending,
                const EquilibriumState& state) {
    const int nj = econ.n_jurisdictions();
    Eigen::VectorXd price(nj), housing(nj), tax(nj), pop_total(nj);
    Eigen::MatrixXd target(econ.n_types(), nj);
    double r = forward_pass(econ, spending, state.pop, price, housing, tax, pop_total, target);
    for (int j = 0; j < nj; ++j) {
        r = std::max(r, std::fabs(std::log(state.housing[j]) - std::log(state.pop_total[j])));
        r = std::max(r, std::fabs(spending[j] - state.tax[j] * state.price[j] * state.housing[j]));
    }
    return r;
}

CounterfactualPair counterfactual_pair(const Economy& econ, int district, double dlogG,
                                       const SolverConfig& config,
                                       const EquilibriumState* baseline) {
    CounterfactualPair pair;
    pair.district = district;
    pair.dlogG = dlogG;
    Eigen::VectorXd g0(econ.n_jurisdictions());
    for (int j = 0; j < econ.n_jurisdictions(); ++j) g0[j] = econ.jurisdictions[j].spending;
    pair.state0 = baseline ? *baseline : solve(econ, g0, config);

    Eigen::VectorXd g1 = g0;
    g1[district] *= std::exp(dlogG);
    pair.state1 = solve(econ, g1, config, &pair.state0);
    return pair;
}

FixedTaxSolution solve_fixed_tax(const Economy& econ, double tau_bar,
                                 const SolverConfig& config) {
    return solve_fixed_tax(econ, Eigen::VectorXd::Constant(econ.n_jurisdictions(), tau_bar),
                           config);
}

FixedTaxSolution solve_fixed_tax(const Economy& econ, const Eigen::VectorXd& tau,
                                 const SolverConfig& config) {
    econ.validate();
    config.validate();
    const int nj = econ.n_jurisdictions();
    const int nk = econ.n_types();
    if (tau.size() != nj) throw NonpositiveInput("tau vector size mismatch");
    for (int j = 0; j < nj; ++j)
        if (!(tau[j] > 0.0)) throw NonpositiveInput("tau must be positive");

    EquilibriumState st;
    st.pop = initial_population(econ);
    st.price.resize(nj);
    st.housing.resize(nj);
    st.tax = tau;
    st.pop_total.resize(nj);
    st.spending.resize(nj);

    Eigen::MatrixXd target(nk, nj);
    Eigen::VectorXd v(nj);
    double resid = 0.0;
    double prev_resid = std::numeric_limits<double>::infinity();
    double damping = config.damping;
    for (int it = 1; it <= config.max_iterations; ++it) {
        for (int j = 0; j < nj; ++j) {
            st.pop_total[j] = st.pop.col(j).sum();
            const double n = std::max(st.pop_total[j], kPopFloor);
            const auto cp = model::market_clearing_price(
                n, econ.lambda, econ.eta, econ.jurisdictions[j].productivity);
            st.price[j] = cp.price;
            st.housing[j] = cp.housing;
            st.spending[j] = tau[j] * st.price[j] * st.housing[j];
        }
        resid = 0.0;
        for (int k = 0; k < nk; ++k) {
            const auto& type = econ.types[k];
            for (int j = 0; j < nj; ++j) {
                v[j] = model::systematic_utility_or_neg_inf(
                    type, econ.jurisdictions[j].amenity, st.spending[j],
                    std::max(st.pop_total[j], kPopFloor), st.price[j], tau[j], econ.chi);
            }
            const Eigen::VectorXd shares = model::choice_probabilities(v, type.theta);
            for (int j = 0; j < nj; ++j) {
                target(k, j) = type.mass * shares[j];
                resid = std::max(resid, std::fabs(target(k, j) - st.pop(k, j)));
            }
        }
        if (resid < config.tolerance) {
            st.iterations = it;
            st.residual = resid;
            return {st, st.spending};
        }
        if (resid > prev_resid)
            damping = std::max(0.5 * damping, 0.02);
        else
            damping = std::min(1.05 * damping, config.damping);
        prev_resid = resid;
        st.pop = (1.0 - damping) * st.pop + damping * target;
    }
    throw NoConvergence(config.max_iterations, resid);
}

}  // namespace equilibrium
}  // namespace rdx
