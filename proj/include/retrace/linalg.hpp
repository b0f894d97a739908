#pragma once

#include "retrace/common.hpp"

namespace retrace {

/// Eigenvalue floor applied when a (noise-corrected) covariance loses
/// positive definiteness.
inline constexpr double kPsdFloor = 1e-8;

enum class Definiteness { PositiveDefinite, PositiveSemiDefinite, Indefinite };

bool is_symmetric(const Mat& S, double rel_tol = 1e-12);

/// (S + S^T)/2
Mat symmetrize(const Mat& S);

Definiteness classify_definiteness(const Mat& S, double tol = 1e-10);

/// Solves A*Sigma + Sigma*A^T + H = 0 for the stationary covariance of
/// dX = A X dt + G dW with H = G G^T. Dense Kronecker vectorization; A
/// must be Hurwitz and H PSD.
///
/// Throws NonHurwitzError if any eigenvalue real part >= -1e-10, and
/// SolveFailureError if the vectorized system is numerically singular or
/// the residual exceeds 1e-10 * max(1, ||H||_F).
Mat solve_lyapunov(const Mat& A, const Mat& H);

/// Clips eigenvalues of a symmetric matrix below at `floor`. Idempotent;
/// leaves matrices with all eigenvalues >= floor unchanged.
Mat project_psd(const Mat& S, double floor = kPsdFloor);

/// Symmetric factor L with L L^T = cov (eigendecomposition route; handles
/// singular PSD inputs). Throws FactorizationFailureError when cov has a
/// substantially negative eigenvalue.
Mat psd_factor(const Mat& cov);

/// n samples from N(mean, cov), one per row.
Mat sample_gaussian(const Vec& mean, const Mat& cov, int n, RngSeed seed);

}  // namespace retrace
