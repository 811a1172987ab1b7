#pragma once

#include <vector>

#include <Eigen/Core>

#include "rdx/types.hpp"

namespace rdx {

struct InsufficientData : DomainError {
    explicit InsufficientData(const std::string& what) : DomainError(what) {}
};
struct SingularDesign : DomainError {
    SingularDesign() : DomainError("local polynomial design matrix is singular") {}
};
struct WeakFirstStage : DomainError {
    WeakFirstStage() : DomainError("first-stage jump is below the configured floor") {}
};
struct NonSymmetricInput : DomainError {
    NonSymmetricInput() : DomainError("covariance input must be symmetric") {}
};
struct DimensionMismatch : DomainError {
    explicit DimensionMismatch(const std::string& what) : DomainError(what) {}
};

/// One estimation sample: running variable centered at a zero cutoff,
/// outcome on the log scale, known first stage D*dlogG, and a cluster id
/// per observation (the referendum identifier).
struct RddSample {
    Eigen::VectorXd running;
    Eigen::VectorXd outcome;
    Eigen::VectorXd first_stage;
    std::vector<int> cluster;

    int size() const { return static_cast<int>(running.size()); }
};

struct RddEstimate {
    double estimate = 0.0;        // conventional local linear
    double bias_corrected = 0.0;  // minus the plug-in curvature bias
    double std_error = 0.0;
    double bandwidth = 0.0;
    int n_left = 0;
    int n_right = 0;
};

enum class Side { Left, Right };

struct RddOptions {
    int min_side_obs = 50;            // data floor for the bandwidth selector
    int min_effective_obs = 30;       // per-side floor on observations inside h
    double bandwidth_guard_mult = 1.0;  // upper guard: mult * max|S|
    int nn_neighbors = 3;             // j* for the nearest-neighbor variance
    double weak_first_stage_floor = 1e-8;
    double pilot_mult = 1.5;          // pilot bandwidth for bias correction
};

namespace rdd {

struct LocalFit {
    double intercept = 0.0;
    double slope = 0.0;
    double curvature = 0.0;  // filled for degree 2 only (2 * quadratic coef)
    int n_effective = 0;
};

/// Weighted least squares on one side of the cutoff with the triangular
/// kernel k_h(S) = (1 - |S|/h)/h. Degree 1 or 2. The left side is
/// S in [-h, 0), the right side S in [0, h].
LocalFit local_linear_fit(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                          Side side, double h, int degree);

/// Intercept estimator weights: theta_hat = sum_i w_i * Y_i over the side.
Eigen::VectorXd intercept_weights(const Eigen::VectorXd& running, Side side, double h,
                                  int degree);

/// MSE-optimal plug-in bandwidth for the local linear RD estimator with a
/// triangular kernel: pilot variance and density at the cutoff, global
/// polynomial curvature pilots, regularization terms, and the standard
/// kernel constant. Degenerate inputs hit the configured upper guard.
double ik_bandwidth(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                    const RddOptions& opts = {});

/// Sharp RD: right minus left local-linear intercepts at the IK bandwidth,
/// a plug-in bias correction from one-sided local-quadratic curvature at a
/// pilot bandwidth, and a nearest-neighbor residual variance.
RddEstimate sharp_rd(const Eigen::VectorXd& running, const Eigen::VectorXd& outcome,
                     const RddOptions& opts = {});

/// Fuzzy RD with a known first stage: the sharp jump in the outcome
/// divided by the right-limit intercept of D*dlogG (the left limit is
/// zero by construction); delta-method standard error.
RddEstimate fuzzy_rd_known_first_stage(const RddSample& sample, const RddOptions& opts = {});

/// One-sided local-linear limits of an observable level at the cutoff,
/// each at the IK bandwidth of that outcome.
struct BoundaryLimits {
    double left = 0.0;
    double right = 0.0;
    double midpoint() const { return 0.5 * (left + right); }
};
BoundaryLimits boundary_limits(const Eigen::VectorXd& running, const Eigen::VectorXd& level,
                               const RddOptions& opts = {});

/// Residualize an outcome on category indicators within the window
/// |S| < h (demeaning by category), leaving other rows untouched.
Eigen::VectorXd residualize_on_indicators(const Eigen::VectorXd& running,
                                          const Eigen::VectorXd& outcome,
                                          const std::vector<int>& category, double h);

/// Joint estimate of two fuzzy coefficients from the stacked, fully
/// interacted local-linear IV system with cluster-robust covariance.
struct PairCovariance {
    double beta_a = 0.0;
    double beta_b = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    double cov_ab = 0.0;
};
PairCovariance pairwise_covariance(const RddSample& a, double h_a, const RddSample& b,
                                   double h_b);

/// Ledoit-Wolf shrinkage of the correlation matrix toward the identity;
/// variances are preserved. n_obs is the sample size behind the
/// covariance estimates (used for the optimal intensity).
struct ShrunkCovariance {
    Eigen::MatrixXd cov;
    double intensity = 0.0;  // delta* in [0, 1]
};
ShrunkCovariance shrink_correlation(const Eigen::MatrixXd& sigma, int n_obs);

}  // namespace rdd
}  // namespace rdx
