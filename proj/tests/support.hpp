#pragma once

// Shared fixtures for the test suite: independent mini-solvers used as
// oracles (deliberately not the library code paths) and small random
// matrix factories.

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "retrace/common.hpp"

namespace testsupport {

/// Plain Gauss elimination with partial pivoting. Used wherever a test
/// needs a linear solve that does not share code with the library.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> M,
                                       std::vector<double> b) {
    const int n = static_cast<int>(b.size());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(M[r][col]) > std::abs(M[pivot][col])) pivot = r;
        std::swap(M[col], M[pivot]);
        std::swap(b[col], b[pivot]);
        if (std::abs(M[col][col]) < 1e-14) throw std::runtime_error("oracle solve: singular");
        for (int r = col + 1; r < n; ++r) {
            const double f = M[r][col] / M[col][col];
            for (int c = col; c < n; ++c) M[r][c] -= f * M[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < n; ++c) acc -= M[r][c] * x[c];
        x[r] = acc / M[r][r];
    }
    return x;
}

/// Stationary covariance by elimination on the vectorized equation
/// (I ox A + A ox I) vec(S) = -vec(H), column-major vec.
inline retrace::Mat lyapunov_oracle(const retrace::Mat& A, const retrace::Mat& H) {
    const int d = static_cast<int>(A.rows());
    const int n = d * d;
    std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
    std::vector<double> rhs(n);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) {
            const int row = j * d + i;
            rhs[row] = -H(i, j);
            for (int k = 0; k < d; ++k) M[row][j * d + k] += A(i, k);
            for (int l = 0; l < d; ++l) M[row][l * d + i] += A(j, l);
        }
    const auto x = gauss_solve(std::move(M), std::move(rhs));
    retrace::Mat S(d, d);
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < d; ++i) S(i, j) = x[j * d + i];
    return S;
}

/// Random orthogonal factor (QR of a Gaussian draw).
inline retrace::Mat random_orthogonal(int d, retrace::Rng& rng) {
    const retrace::Mat Z = rng.normal_mat(d, d);
    retrace::Mat Q = Eigen::HouseholderQR<retrace::Mat>(Z).householderQ();
    return Q;
}

/// Symmetric positive definite with eigenvalues in [lo, hi].
inline retrace::Mat random_spd(int d, double lo, double hi, retrace::Rng& rng) {
    const retrace::Mat Q = random_orthogonal(d, rng);
    retrace::Vec lam(d);
    for (int i = 0; i < d; ++i) lam[i] = rng.uniform(lo, hi);
    return Q * lam.asDiagonal() * Q.transpose();
}

/// Hurwitz drift: negative definite symmetric part plus a random rotation.
inline retrace::Mat random_stable(int d, retrace::Rng& rng) {
    const retrace::Mat S = random_spd(d, 0.3, 2.0, rng);
    retrace::Mat K = rng.normal_mat(d, d);
    K = 0.5 * (K - K.transpose());
    return -S + K;
}

inline double max_abs(const retrace::Mat& M) { return M.cwiseAbs().maxCoeff(); }

}  // namespace testsupport
