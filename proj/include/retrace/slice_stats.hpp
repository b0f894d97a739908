#pragma once

#include <optional>
#include <vector>

#include "retrace/ensemble.hpp"

namespace retrace {

/// Gaussian fit to the cross-trajectory marginal at one time index.
struct SliceGaussian {
    int t_index = 0;
    Vec mean;
    Mat cov;        // after noise correction and PSD floor
    Mat raw_cov;    // unbiased sample covariance, pre-correction
    int n_samples = 0;
    Mat precision;  // cov^{-1}
    double cond = 1.0;  // eigenvalue condition number of cov
};

/// Computes the precision and condition number for a given covariance.
SliceGaussian make_slice_gaussian(int t_index, Vec mean, Mat cov, Mat raw_cov, int n_samples);

/// Per-index sample mean and unbiased covariance across trajectories.
/// When R is given the marginal covariance is debiased as Shat - R before
/// the PSD floor (measurement noise inflates the observed covariance).
/// Throws InsufficientSamplesError when N < 2.
std::vector<SliceGaussian> fit_slices(const Ensemble& e,
                                      const std::optional<Mat>& R = std::nullopt);

/// Empirical score of the fitted Gaussian: -cov^{-1} (x - mean).
/// Throws SingularCovarianceError when the covariance condition number
/// exceeds 1e12.
Vec score(const SliceGaussian& g, const Vec& x);

}  // namespace retrace
