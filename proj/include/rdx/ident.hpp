#pragma once

#include <vector>

#include "rdx/dgp.hpp"
#include "rdx/rdd.hpp"

namespace rdx {

struct ZeroOutsideOption : DomainError {
    ZeroOutsideOption() : DomainError("inside populations exhaust the type mass") {}
};
struct WeakDenominator : DomainError {
    WeakDenominator() : DomainError("price elasticity denominator is below the floor") {}
};

/// Referendum-level estimation table with outcomes defined relative to the
/// voting district: "own" columns are the district that held the vote,
/// "oth" columns average the non-voting districts (the representative
/// other jurisdiction; multiplicity |J|-1 restores the sums).
///
/// Elasticity outcomes are within-district changes of the log observable
/// between the pre-vote measurement and the post-outcome measurement, so
/// fixed district attributes drop out (the own-district spending change
/// is then the first stage itself). Weight outcomes are post levels.
struct EstimationTable {
    int n_jurisdictions = 0;
    int n_types = 0;
    Eigen::VectorXd margin;
    Eigen::VectorXd dlogG;
    Eigen::VectorXd first_stage;  // D * dlogG
    std::vector<int> cluster;
    std::vector<int> district;  // voting district per row

    Eigen::MatrixXd dlogN_own, dlogN_oth;  // n x K
    Eigen::VectorXd dlogM_own, dlogM_oth;  // total population
    Eigen::VectorXd dlogP_own, dlogP_oth;
    Eigen::VectorXd dlogT_own, dlogT_oth;  // log(1 + tau)
    Eigen::VectorXd dlogG_own, dlogG_oth;
    Eigen::VectorXd dlogH_own, dlogH_oth;

    Eigen::MatrixXd lvlN_own, lvlN_oth;  // n x K, post-level populations
    Eigen::MatrixXd rho_own, rho_oth;    // n x K, post-level shares

    int size() const { return static_cast<int>(margin.size()); }
};

/// Layout of the estimand vector produced by estimate_elasticities:
/// [eN_own^k (K), eN_oth^k (K), eM_own, eM_oth, eP_own, eP_oth,
///  eT_own, eT_oth, eG_own, eG_oth, eH_own], total 2K + 9.
struct ElasticityEstimates {
    int n_types = 0;
    Eigen::VectorXd value;
    Eigen::VectorXd bandwidth;
    Eigen::MatrixXd cov;         // Ledoit-Wolf shrunk
    double lw_intensity = 0.0;
    int n_clusters = 0;

    // Cutoff-level weight estimates (midpoints of one-sided limits).
    Eigen::VectorXd w_own, w_oth;          // Ntilde^k / sigma^k
    Eigen::VectorXd rho_own, rho_oth;      // expenditure shares
    Eigen::VectorXd ltilde_own, ltilde_oth;  // population-share weights

    int n_other = 1;  // multiplicity of the representative other district
    double chi = 1.0;

    int idx_eN_own(int k) const { return k; }
    int idx_eN_oth(int k) const { return n_types + k; }
    int idx_eM_own() const { return 2 * n_types + 0; }
    int idx_eM_oth() const { return 2 * n_types + 1; }
    int idx_eP_own() const { return 2 * n_types + 2; }
    int idx_eP_oth() const { return 2 * n_types + 3; }
    int idx_eT_own() const { return 2 * n_types + 4; }
    int idx_eT_oth() const { return 2 * n_types + 5; }
    int idx_eG_own() const { return 2 * n_types + 6; }
    int idx_eG_oth() const { return 2 * n_types + 7; }
    int idx_eH_own() const { return 2 * n_types + 8; }
    int n_estimands() const { return 2 * n_types + 9; }
};

/// Inputs of one type's two-equation identification system.
struct SystemInputs {
    int type_index = 0;
    double chi = 1.0;
    int n_other = 1;
    int n_clusters = 0;
    // [eN_own, eN_oth, eM_own, eM_oth, eP_own, eP_oth, eT_own, eT_oth,
    //  eG_own, eG_oth]
    Eigen::VectorXd elasticity;
    Eigen::MatrixXd elasticity_cov;
    double w_own = 0.0, w_oth = 0.0;
    double rho_own = 0.0, rho_oth = 0.0;
};

struct PreferenceSolution {
    double a = 0.0;  // alpha/theta
    double g = 0.0;  // gamma/theta
    double se_a = 0.0, se_g = 0.0;
    double ratio = 0.0, se_ratio = 0.0;
    double residual_norm = 0.0;  // nonzero only for overidentified solves
    Eigen::Matrix2d cov_ag = Eigen::Matrix2d::Zero();
};

struct EtaEstimate {
    double eta = 0.0;
    double se = 0.0;
};

struct LocationEffects {
    Eigen::VectorXd amenity;       // Abar_j (relative to the outside option)
    Eigen::VectorXd productivity;  // B_j, mean zero
    double lambda = 0.0;
};

/// Per-type preference estimates, eta, and the joint covariance of
/// zeta = [a^1..a^K, g^1..g^K, eta] for downstream parametric draws.
struct StructuralEstimate {
    Eigen::VectorXd a, g, se_a, se_g;
    Eigen::VectorXd ratio, se_ratio;
    double eta = 0.0, se_eta = 0.0;
    Eigen::VectorXd zeta;
    Eigen::MatrixXd sigma_zeta;
    double lw_intensity = 0.0;
    double residual_norm = 0.0;
    int n_systems = 0;  // district systems stacked per type
};

namespace ident {

EstimationTable make_estimation_table(const Dataset& data);

/// Rows whose referendum was held in the given district.
EstimationTable filter_district(const EstimationTable& table, int district);

ElasticityEstimates estimate_elasticities(const EstimationTable& table,
                                          const RddOptions& opts = {});

SystemInputs estimate_system_inputs(const ElasticityEstimates& est, int type_index);

/// The 18-entry coefficient vector of the two-equation system, the linear
/// map from the underlying elasticities, and the induced covariance.
struct ThetaSystem {
    Eigen::VectorXd theta;       // 18
    Eigen::MatrixXd weight_map;  // 18 x 10
    Eigen::MatrixXd sigma;       // 18 x 18
};
ThetaSystem build_theta_system(const SystemInputs& in);

/// Exact solve of the stacked pair of equations
///   theta1  = a (theta2 - theta3 - theta6 + theta7) + g (-theta4 - theta5 + theta8 + theta9)
///   theta10 = a (theta11 - theta12 - theta15 + theta16) + g (-theta13 - theta14 + theta17 + theta18)
Eigen::Vector2d solve_preferences_theta(const Eigen::VectorXd& theta);

/// Closed-form 2 x 18 Jacobian of the solve map.
Eigen::MatrixXd preference_jacobian(const Eigen::VectorXd& theta);

struct DeltaSe {
    double se_a = 0.0, se_g = 0.0, se_ratio = 0.0;
    Eigen::Matrix2d cov_ag;
};
DeltaSe delta_method_se(const Eigen::VectorXd& theta, const Eigen::MatrixXd& sigma_theta);

PreferenceSolution solve_preferences(const SystemInputs& in);
/// Least-squares stack of several systems (overidentified case).
PreferenceSolution solve_preferences(const std::vector<SystemInputs>& ins);

EtaEstimate solve_eta(double theta_H, double theta_P, double var_H, double var_P,
                      double cov_HP, double floor = 1e-8);

/// Invert the logit shares for amenities, back out productivities from
/// market clearing, and normalize mean(B) = 0 via lambda.
LocationEffects calibrate_location_effects(const Eigen::MatrixXd& pop,
                                           const Eigen::VectorXd& price,
                                           const Eigen::VectorXd& tax,
                                           const Eigen::VectorXd& spending,
                                           const Eigen::VectorXd& housing,
                                           const std::vector<HouseholdType>& types,
                                           double chi, double eta);

/// End-to-end identification on one dataset.
StructuralEstimate identify(const Dataset& data, const RddOptions& opts = {});

}  // namespace ident
}  // namespace rdx
