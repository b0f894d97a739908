#include "retrace/slice_stats.hpp"

#include <Eigen/Eigenvalues>
#include <limits>
#include <utility>

#include "retrace/errors.hpp"
#include "retrace/linalg.hpp"

namespace retrace {

SliceGaussian make_slice_gaussian(int t_index, Vec mean, Mat cov, Mat raw_cov, int n_samples) {
    SliceGaussian g;
    g.t_index = t_index;
    g.mean = std::move(mean);
    g.cov = std::move(cov);
    g.raw_cov = std::move(raw_cov);
    g.n_samples = n_samples;
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(g.cov));
    if (es.info() != Eigen::Success)
        throw FactorizationFailureError("eigendecomposition failed for slice covariance");
    const Vec& ev = es.eigenvalues();
    if (ev.minCoeff() <= 0.0) {
        g.cond = std::numeric_limits<double>::infinity();
        g.precision = Mat::Zero(g.cov.rows(), g.cov.cols());
    } else {
        g.cond = ev.maxCoeff() / ev.minCoeff();
        g.precision =
            es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    }
    return g;
}

std::vector<SliceGaussian> fit_slices(const Ensemble& e, const std::optional<Mat>& R) {
    validate(e);
    const int N = e.n_traj();
    const int T = e.n_steps();
    const int d = e.dim();
    if (N < 2) throw InsufficientSamplesError("slice fit needs at least two trajectories");
    if (R && (R->rows() != d || R->cols() != d))
        throw ValidationError("noise covariance shape does not match the ensemble");

    std::vector<SliceGaussian> slices;
    slices.reserve(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t) {
        Vec mu = Vec::Zero(d);
        for (int j = 0; j < N; ++j) mu += e.data[static_cast<size_t>(j)].row(t).transpose();
        mu /= N;
        Mat S = Mat::Zero(d, d);
        for (int j = 0; j < N; ++j) {
            const Vec c = e.data[static_cast<size_t>(j)].row(t).transpose() - mu;
            S += c * c.transpose();
        }
        S /= (N - 1);
        const Mat corrected = R ? Mat(S - *R) : S;
        slices.push_back(make_slice_gaussian(t, mu, project_psd(corrected), S, N));
    }
    return slices;
}

Vec score(const SliceGaussian& g, const Vec& x) {
    if (!(g.cond <= 1e12))
        throw SingularCovarianceError("slice covariance is numerically singular");
    return -(g.precision * (x - g.mean));
}

}  // namespace retrace
