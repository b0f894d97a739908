#include "retrace/linalg.hpp"

#include <Eigen/Eigenvalues>

#include "retrace/errors.hpp"

namespace retrace {

bool is_symmetric(const Mat& S, double rel_tol) {
    if (S.rows() != S.cols()) return false;
    const double scale = std::max(1.0, S.norm());
    return (S - S.transpose()).norm() <= rel_tol * scale;
}

Mat symmetrize(const Mat& S) { return 0.5 * (S + S.transpose()); }

Definiteness classify_definiteness(const Mat& S, double tol) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw FactorizationFailureError("eigendecomposition failed in classify_definiteness");
    const Vec& ev = es.eigenvalues();
    const double scale = std::max(1.0, std::abs(ev.cwiseAbs().maxCoeff()));
    if (ev.minCoeff() > tol * scale) return Definiteness::PositiveDefinite;
    if (ev.minCoeff() >= -tol * scale) return Definiteness::PositiveSemiDefinite;
    return Definiteness::Indefinite;
}

Mat solve_lyapunov(const Mat& A, const Mat& H) {
    const int d = static_cast<int>(A.rows());
    if (A.cols() != d || H.rows() != d || H.cols() != d)
        throw SolveFailureError("solve_lyapunov: A and H must be square with equal size");

    Eigen::EigenSolver<Mat> es(A);
    if (es.info() != Eigen::Success)
        throw SolveFailureError("solve_lyapunov: eigendecomposition of A failed");
    if (es.eigenvalues().real().maxCoeff() >= -1e-10)
        throw NonHurwitzError("solve_lyapunov: A is not Hurwitz");

    // vec(A Sigma + Sigma A^T) = (I (x) A + A (x) I) vec(Sigma)
    Mat K = Mat::Zero(d * d, d * d);
    const Mat I = Mat::Identity(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            K.block(i * d, j * d, d, d) += I(i, j) * A;  // I (x) A
            K.block(i * d, j * d, d, d) += A(i, j) * I;  // A (x) I
        }

    Vec h(d * d);
    for (int j = 0; j < d; ++j) h.segment(j * d, d) = H.col(j);

    Eigen::FullPivLU<Mat> lu(K);
    if (!lu.isInvertible())
        throw SolveFailureError("solve_lyapunov: vectorized operator is singular");
    Vec s = lu.solve(-h);

    Mat Sigma(d, d);
    for (int j = 0; j < d; ++j) Sigma.col(j) = s.segment(j * d, d);
    Sigma = symmetrize(Sigma);

    const double residual = (A * Sigma + Sigma * A.transpose() + H).norm();
    if (residual > 1e-10 * std::max(1.0, H.norm()))
        throw SolveFailureError("solve_lyapunov: residual too large");
    return Sigma;
}

Mat project_psd(const Mat& S, double floor) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(S));
    if (es.info() != Eigen::Success)
        throw FactorizationFailureError("eigendecomposition failed in project_psd");
    Vec ev = es.eigenvalues().cwiseMax(floor);
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Mat psd_factor(const Mat& cov) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(cov));
    if (es.info() != Eigen::Success)
        throw FactorizationFailureError("eigendecomposition failed in psd_factor");
    Vec ev = es.eigenvalues();
    const double scale = std::max(1.0, std::abs(ev.cwiseAbs().maxCoeff()));
    if (ev.minCoeff() < -1e-9 * scale)
        throw FactorizationFailureError("psd_factor: matrix has a negative eigenvalue");
    return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

Mat sample_gaussian(const Vec& mean, const Mat& cov, int n, RngSeed seed) {
    const int d = static_cast<int>(mean.size());
    const Mat L = psd_factor(cov);
    Rng rng(seed);
    Mat out(n, d);
    for (int i = 0; i < n; ++i) out.row(i) = (mean + L * rng.normal_vec(d)).transpose();
    return out;
}

}  // namespace retrace
