#pragma once

#include <vector>

#include "rdx/dgp.hpp"
#include "rdx/ident.hpp"
#include "rdx/rng.hpp"

namespace rdx {

struct NonInvertibleHessian : DomainError {
    NonInvertibleHessian() : DomainError("likelihood Hessian is not invertible") {}
};
struct InsufficientDraws : DomainError {
    InsufficientDraws() : DomainError("need at least two outer draws") {}
};

/// One (referendum, type) turnout cell.
struct TurnoutCell {
    int referendum = 0;
    int type = 0;
    long voters = 0;       // observed voter count
    long electorate = 0;   // population count
    double benefit = 0.0;  // |v(dlogG) - v(0)| under the supplied zeta
    double dlogG = 0.0;
};

/// Parameter layout for the turnout cost model. With a common sigma0 the
/// vector is [mu0^1..mu0^K, mu1^1..mu1^K, log sigma0]; per-type sigma0
/// appends one log-scale entry per type instead.
struct TurnoutLayout {
    int n_types = 0;
    bool common_sigma0 = true;
    int dim() const { return common_sigma0 ? 2 * n_types + 1 : 3 * n_types; }
    double mu0(const Eigen::VectorXd& v, int k) const { return v[k]; }
    double mu1(const Eigen::VectorXd& v, int k) const { return v[n_types + k]; }
    double sigma0(const Eigen::VectorXd& v, int k) const {
        return std::exp(common_sigma0 ? v[2 * n_types] : v[2 * n_types + k]);
    }
};

struct TurnoutFit {
    TurnoutLayout layout;
    Eigen::VectorXd theta;   // internal coordinates (sigma0 on the log scale)
    Eigen::MatrixXd cov;     // inverse negative Hessian in internal coordinates
    double loglik = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    // Convenience accessors on the natural scale.
    double mu0(int k) const { return layout.mu0(theta, k); }
    double mu1(int k) const { return layout.mu1(theta, k); }
    double sigma0(int k) const { return layout.sigma0(theta, k); }
};

/// Rubin-rule combination across outer parametric draws.
struct TurnoutEstimate {
    Eigen::VectorXd theta;      // mean of the outer draws
    Eigen::MatrixXd within;     // mean of the per-draw covariances
    Eigen::MatrixXd between;    // sample covariance of the draws
    Eigen::MatrixXd total;      // within + (1 + 1/m) between
};

namespace mle {

/// Binomial log-likelihood up to the additive combinatorial constant;
/// probabilities are clamped to [eps, 1-eps] with eps = 1e-12.
double turnout_log_likelihood(const Eigen::VectorXd& theta, const TurnoutLayout& layout,
                              const std::vector<TurnoutCell>& data);

/// Analytic gradient of turnout_log_likelihood.
Eigen::VectorXd turnout_log_likelihood_gradient(const Eigen::VectorXd& theta,
                                                const TurnoutLayout& layout,
                                                const std::vector<TurnoutCell>& data);

/// Quasi-Newton (BFGS) maximization from a deterministic method-of-moments
/// start; covariance from the inverse negative numerical Hessian.
TurnoutFit fit_turnout(const std::vector<TurnoutCell>& data, int n_types,
                       bool common_sigma0 = true);

/// Build turnout cells from a simulated dataset, computing the benefit
/// terms from the supplied normalized preferences (zeta).
std::vector<TurnoutCell> build_turnout_cells(const Dataset& data,
                                             const StructuralEstimate& zeta,
                                             Anticipation mode = Anticipation::Myopic);
/// Same, but with the benefit computed from the economy's own types
/// (useful for oracle checks with the true parameters).
std::vector<TurnoutCell> build_turnout_cells_true(const Dataset& data);

TurnoutEstimate rubin_combine(const std::vector<Eigen::VectorXd>& draws,
                              const std::vector<Eigen::MatrixXd>& covariances);

/// Draw zeta ~ N(zeta_hat, Sigma_zeta) rejecting draws that violate
/// positivity of the preference parameters and eta; the rejection count
/// is accumulated into `rejections`.
Eigen::VectorXd draw_zeta(const StructuralEstimate& est, Rng& rng, int& rejections);

/// Rebuild a StructuralEstimate view holding a drawn zeta vector.
StructuralEstimate with_zeta(const StructuralEstimate& base, const Eigen::VectorXd& zeta);

}  // namespace mle
}  // namespace rdx
