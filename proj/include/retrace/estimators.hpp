#pragma once

#include <vector>

#include "retrace/ensemble.hpp"

namespace retrace {

struct FitResult {
    Mat A_hat;
    Mat H_hat;
    double log_likelihood = 0.0;
    long n_increments = 0;
    /// H_hat came out rank-deficient; the likelihood was evaluated at the
    /// PSD-floored version (H_hat itself is reported unfloored).
    bool degenerate_residuals = false;
    /// Observed-data log-likelihood per iteration (em_fit only; the final
    /// entry is evaluated at the returned parameters).
    std::vector<double> em_loglik_trace;
};

/// Log-likelihood of all pooled increments under the Euler transition
/// dX ~ N(A X dt, H dt). H is PSD-floored if needed so the value is finite.
double increment_loglik(const Ensemble& e, const Mat& A, const Mat& H);

/// Closed-form Gaussian MLE over pooled increments:
///   A_hat = (1/dt) (sum dX x^T)(sum x x^T)^{-1}
///   H_hat = (1/(N_inc dt)) sum r r^T,  r = dX - A_hat x dt.
/// Throws SingularGramError when the pooled Gram matrix is singular.
FitResult mle_fit(const Ensemble& e);

/// Same drift estimate (identical normal equations); the noise estimate is
/// constrained to a diagonal matrix.
FitResult ols_fit(const Ensemble& e);

/// EM for the linear-Gaussian state-space model
///   x_{t+1} = (I + A dt) x_t + w,  w ~ N(0, H dt)
///   y_t     = x_t + v,             v ~ N(0, R)
/// with R known. Initialized from mle_fit on the observed data; each
/// iteration runs a Kalman filter + RTS smoother and re-solves the
/// closed-form M-step from smoothed moments. Throws
/// NonMonotoneLikelihoodError if the observed-data likelihood decreases
/// beyond numerical slack.
FitResult em_fit(const Ensemble& e, const Mat& R, int iters);

}  // namespace retrace
