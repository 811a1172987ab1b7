#include "rdx/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rdx {
namespace model {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double expenditure_share(double income, double price, double tax) {
    const double gross = price * (1.0 + tax);
    const double disposable = income - gross;
    if (!(disposable > 0.0)) throw NonpositiveDisposableIncome();
    return gross / disposable;
}

double systematic_utility(const HouseholdType& type, double amenity, double spending,
                          double pop_total, double price, double tax, double chi) {
    if (!(spending > 0.0)) throw NonpositiveSpending();
    const double disposable = type.income - price * (1.0 + tax);
    if (!(disposable > 0.0)) throw NonpositiveDisposableIncome();
    double v = amenity + type.alpha * std::log(spending) +
               type.gamma * std::log(disposable);
    if (chi != 0.0) v -= type.alpha * chi * std::log(pop_total);
    return v;
}

double systematic_utility_or_neg_inf(const HouseholdType& type, double amenity,
                                     double spending, double pop_total, double price,
                                     double tax, double chi) {
    const double disposable = type.income - price * (1.0 + tax);
    if (!(disposable > 0.0)) return kNegInf;
    return systematic_utility(type, amenity, spending, pop_total, price, tax, chi);
}

Eigen::VectorXd choice_probabilities(const Eigen::VectorXd& v, double theta) {
    const int n = static_cast<int>(v.size());
    Eigen::VectorXd shares(n + 1);
    // Outside option has systematic utility 0; include it in the max shift.
    double vmax = 0.0;
    for (int j = 0; j < n; ++j) vmax = std::max(vmax, v[j] / theta);
    double denom = std::exp(-vmax);  // outside term
    for (int j = 0; j < n; ++j) {
        const double e = std::isfinite(v[j]) ? std::exp(v[j] / theta - vmax) : 0.0;
        shares[j] = e;
        denom += e;
    }
    shares.head(n) /= denom;
    shares[n] = std::exp(-vmax) / denom;
    return shares;
}

ClearingPoint market_clearing_price(double pop_total, double lambda, double eta,
                                    double productivity) {
    if (!(pop_total > 0.0)) throw NonpositivePopulation();
    const double log_p = (std::log(pop_total) - lambda - productivity) / eta;
    return {std::exp(log_p), pop_total};
}

double housing_supply_log(double log_price, double lambda, double eta, double productivity) {
    return lambda + eta * log_price + productivity;
}

double balanced_budget_tax(double spending, double price, double housing) {
    if (!(spending > 0.0 && price > 0.0 && housing > 0.0))
        throw NonpositiveInput("balanced_budget_tax needs positive G, P, H");
    return spending / (price * housing);
}

GpfSlopes gpf_slopes_from_hats(double alpha_hat, double gamma_hat, double eta, double tau,
                               double chi, double pop_total) {
    // Partials of the clearing condition J and the budget condition K with
    // respect to (log G, log P, log(1+tau)).
    const double cong = 1.0 + chi * alpha_hat / pop_total;
    const double jg = -alpha_hat / cong;
    const double jshared =
        (gamma_hat - (chi / pop_total) * gamma_hat * (alpha_hat - gamma_hat)) / cong;
    const double jp = eta + jshared;
    const double jt = jshared;
    const double kg = -1.0;
    const double kp = 1.0 + eta;
    const double kt = (1.0 + tau) / tau;

    const double denom_p = jp * kt - jt * kp;
    const double denom_t = jt * kp - jp * kt;
    if (std::fabs(denom_p) < 1e-14 || std::fabs(denom_t) < 1e-14)
        throw SingularSystem("government possibility frontier system is singular");
    GpfSlopes out;
    out.dlogP_dlogG = -(jg * kt - jt * kg) / denom_p;
    out.dlog1ptau_dlogG = -(jg * kp - jp * kg) / denom_t;
    return out;
}

GpfSlopes gpf_slopes(const Economy& econ, const EquilibriumState& state, int j,
                     Anticipation mode) {
    const double tau = state.tax[j];
    if (mode == Anticipation::Myopic) return {0.0, tau / (1.0 + tau)};

    // Discrete-type analogues of the aggregated preference terms: the
    // integrals over F become sums with N_{ij} = N^k_j / sigma^k.
    double alpha_hat = 0.0;
    double gamma_hat = 0.0;
    for (int k = 0; k < econ.n_types(); ++k) {
        const auto& t = econ.types[k];
        const double nk = state.pop(k, j);
        const double share = nk / t.mass;
        const double w = nk * (1.0 - share);
        alpha_hat += (t.alpha / t.theta) * w;
        const double rho = expenditure_share(t.income, state.price[j], tau);
        gamma_hat += (t.gamma * rho / t.theta) * w;
    }
    return gpf_slopes_from_hats(alpha_hat, gamma_hat, econ.eta, tau, econ.chi,
                                state.pop_total[j]);
}

double preferred_tax_rate(const HouseholdType& type, double rho) {
    if (!(rho > 0.0)) throw NonpositiveInput("rho must be positive");
    const double denom = type.gamma * rho - type.alpha;
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();
    return std::max(type.alpha / denom, 0.0);
}

double myopic_vote_delta(const HouseholdType& type, const EquilibriumState& state, int j,
                         double dlogG) {
    const double price = state.price[j];
    const double tax0 = state.tax[j];
    const double g0 = state.spending[j];
    const double g1 = g0 * std::exp(dlogG);
    const double tax1 = g1 / (price * state.housing[j]);

    const double disp0 = type.income - price * (1.0 + tax0);
    if (!(disp0 > 0.0)) throw NonpositiveDisposableIncome();
    const double disp1 = type.income - price * (1.0 + tax1);
    if (!(disp1 > 0.0)) throw NonpositiveDisposableIncome();

    // Population and amenity terms cancel: N is held fixed under myopia.
    return type.alpha * dlogG + type.gamma * (std::log(disp1) - std::log(disp0));
}

double vote_delta_between(const HouseholdType& type, const Economy& econ,
                          const EquilibriumState& state0, const EquilibriumState& state1,
                          int j) {
    const double v0 = systematic_utility(type, econ.jurisdictions[j].amenity,
                                         state0.spending[j], state0.pop_total[j],
                                         state0.price[j], state0.tax[j], econ.chi);
    const double v1 = systematic_utility(type, econ.jurisdictions[j].amenity,
                                         state1.spending[j], state1.pop_total[j],
                                         state1.price[j], state1.tax[j], econ.chi);
    return v1 - v0;
}

}  // namespace model
}  // namespace rdx
