#include "retrace/estimators.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include "retrace/errors.hpp"
#include "retrace/linalg.hpp"

namespace retrace {

namespace {

struct PooledMoments {
    Mat Sxx;  // sum x x^T over increments' left endpoints
    Mat Sdx;  // sum dx x^T
    long n_increments = 0;
};

PooledMoments pool_moments(const Ensemble& e) {
    validate(e);
    const int d = e.dim();
    const int T = e.n_steps();
    PooledMoments m;
    m.Sxx = Mat::Zero(d, d);
    m.Sdx = Mat::Zero(d, d);
    for (const Mat& traj : e.data) {
        for (int t = 0; t + 1 < T; ++t) {
            const Vec x = traj.row(t).transpose();
            const Vec dx = (traj.row(t + 1) - traj.row(t)).transpose();
            m.Sxx += x * x.transpose();
            m.Sdx += dx * x.transpose();
        }
    }
    m.n_increments = static_cast<long>(e.n_traj()) * (T - 1);
    return m;
}

Mat drift_estimate(const PooledMoments& m, double dt) {
    Eigen::FullPivLU<Mat> lu(m.Sxx);
    if (!lu.isInvertible())
        throw SingularGramError("pooled Gram matrix is singular; drift is unidentifiable");
    // A = (1/dt) Sdx Sxx^{-1}  <=>  Sxx^T A^T = Sdx^T / dt
    return Mat(lu.solve(m.Sdx.transpose()).transpose()) / dt;
}

Mat residual_second_moment(const Ensemble& e, const Mat& A) {
    const int d = e.dim();
    const int T = e.n_steps();
    Mat S = Mat::Zero(d, d);
    for (const Mat& traj : e.data) {
        for (int t = 0; t + 1 < T; ++t) {
            const Vec x = traj.row(t).transpose();
            const Vec r = (traj.row(t + 1) - traj.row(t)).transpose() - A * x * e.dt;
            S += r * r.transpose();
        }
    }
    return symmetrize(S);
}

bool rank_deficient(const Mat& H) {
    Eigen::SelfAdjointEigenSolver<Mat> es(H, Eigen::EigenvaluesOnly);
    const Vec& ev = es.eigenvalues();
    return ev.minCoeff() <= 1e-12 * std::max(1.0, ev.maxCoeff());
}

FitResult finish_fit(const Ensemble& e, Mat A, Mat H, long n_increments) {
    FitResult fit;
    fit.A_hat = std::move(A);
    fit.H_hat = std::move(H);
    fit.n_increments = n_increments;
    fit.degenerate_residuals = rank_deficient(fit.H_hat);
    fit.log_likelihood = increment_loglik(e, fit.A_hat, fit.H_hat);
    return fit;
}

}  // namespace

double increment_loglik(const Ensemble& e, const Mat& A, const Mat& H) {
    validate(e);
    const int d = e.dim();
    const int T = e.n_steps();
    const double dt = e.dt;
    const Mat Hf = project_psd(H);

    Eigen::SelfAdjointEigenSolver<Mat> es(Hf);
    if (es.info() != Eigen::Success)
        throw FactorizationFailureError("eigendecomposition of H failed in increment_loglik");
    const Vec& ev = es.eigenvalues();
    const double log_det = ev.array().log().sum();
    const Mat Hinv =
        es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();

    double quad = 0.0;
    for (const Mat& traj : e.data) {
        for (int t = 0; t + 1 < T; ++t) {
            const Vec x = traj.row(t).transpose();
            const Vec r = (traj.row(t + 1) - traj.row(t)).transpose() - A * x * dt;
            quad += r.dot(Hinv * r);
        }
    }
    const double n = static_cast<double>(e.n_traj()) * (T - 1);
    return -0.5 * d * n * std::log(2.0 * std::numbers::pi * dt) - 0.5 * n * log_det -
           quad / (2.0 * dt);
}

FitResult mle_fit(const Ensemble& e) {
    const PooledMoments m = pool_moments(e);
    Mat A = drift_estimate(m, e.dt);
    Mat H = residual_second_moment(e, A) / (static_cast<double>(m.n_increments) * e.dt);
    return finish_fit(e, std::move(A), std::move(H), m.n_increments);
}

FitResult ols_fit(const Ensemble& e) {
    const PooledMoments m = pool_moments(e);
    Mat A = drift_estimate(m, e.dt);
    Mat H =
        Mat(residual_second_moment(e, A).diagonal().asDiagonal()) /
        (static_cast<double>(m.n_increments) * e.dt);
    return finish_fit(e, std::move(A), std::move(H), m.n_increments);
}

namespace {

struct SmoothedMoments {
    Mat S00;  // sum over pairs of E[x_t x_t^T]
    Mat S11;  // sum of E[x_{t+1} x_{t+1}^T]
    Mat S10;  // sum of E[x_{t+1} x_t^T]
    double loglik = 0.0;
};

/// Kalman filter + RTS smoother for one EM pass under transition
/// (F = I + A dt, Q = H dt) and identity observation with noise R.
/// The first observation pins the prior: m = y_0, P = R, no update at t=0.
SmoothedMoments e_step(const Ensemble& e, const Mat& A, const Mat& H, const Mat& R) {
    const int d = e.dim();
    const int T = e.n_steps();
    const Mat I = Mat::Identity(d, d);
    const Mat F = I + A * e.dt;
    const Mat Q = symmetrize(H * e.dt);

    SmoothedMoments out;
    out.S00 = Mat::Zero(d, d);
    out.S11 = Mat::Zero(d, d);
    out.S10 = Mat::Zero(d, d);
    const double log2pi = std::log(2.0 * std::numbers::pi);

    std::vector<Vec> mf(static_cast<size_t>(T));        // filtered means
    std::vector<Mat> Pf(static_cast<size_t>(T));        // filtered covariances
    std::vector<Vec> mp(static_cast<size_t>(T));        // one-step predictions
    std::vector<Mat> Pp(static_cast<size_t>(T));
    std::vector<Vec> ms(static_cast<size_t>(T));        // smoothed means
    std::vector<Mat> Ps(static_cast<size_t>(T));
    std::vector<Mat> Cs(static_cast<size_t>(T));        // smoother gains

    for (const Mat& traj : e.data) {
        mf[0] = traj.row(0).transpose();
        Pf[0] = R;
        for (int t = 1; t < T; ++t) {
            mp[t] = F * mf[t - 1];
            Pp[t] = symmetrize(F * Pf[t - 1] * F.transpose() + Q);
            const Mat S = symmetrize(Pp[t] + R);
            Eigen::LDLT<Mat> ldlt(S);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
                throw SolveFailureError("innovation covariance is not positive definite");
            const Vec innov = traj.row(t).transpose() - mp[t];
            const Vec Sinv_innov = ldlt.solve(innov);
            const Mat K = ldlt.solve(Pp[t]).transpose();  // Pp S^{-1}, S symmetric
            mf[t] = mp[t] + K * innov;
            const Mat IK = I - K;
            Pf[t] = symmetrize(IK * Pp[t] * IK.transpose() + K * R * K.transpose());
            const double log_det = ldlt.vectorD().array().log().sum();
            out.loglik += -0.5 * (d * log2pi + log_det + innov.dot(Sinv_innov));
        }

        ms[static_cast<size_t>(T - 1)] = mf[static_cast<size_t>(T - 1)];
        Ps[static_cast<size_t>(T - 1)] = Pf[static_cast<size_t>(T - 1)];
        for (int t = T - 2; t >= 0; --t) {
            Eigen::LDLT<Mat> ldlt(Pp[t + 1]);
            if (ldlt.info() != Eigen::Success)
                throw SolveFailureError("predicted covariance factorization failed");
            // C = Pf F^T Pp^{-1}; solve Pp C^T = F Pf
            const Mat C = ldlt.solve(F * Pf[t]).transpose();
            Cs[static_cast<size_t>(t)] = C;
            ms[static_cast<size_t>(t)] = mf[t] + C * (ms[static_cast<size_t>(t + 1)] - mp[t + 1]);
            Ps[static_cast<size_t>(t)] = symmetrize(
                Pf[t] + C * (Ps[static_cast<size_t>(t + 1)] - Pp[t + 1]) * C.transpose());
        }

        for (int t = 0; t + 1 < T; ++t) {
            const Vec& m0 = ms[static_cast<size_t>(t)];
            const Vec& m1 = ms[static_cast<size_t>(t + 1)];
            out.S00 += Ps[static_cast<size_t>(t)] + m0 * m0.transpose();
            out.S11 += Ps[static_cast<size_t>(t + 1)] + m1 * m1.transpose();
            // smoothed lag-one covariance: Cov(x_{t+1}, x_t | Y) = Ps_{t+1} C_t^T
            out.S10 += Ps[static_cast<size_t>(t + 1)] * Cs[static_cast<size_t>(t)].transpose() +
                       m1 * m0.transpose();
        }
    }
    return out;
}

}  // namespace

FitResult em_fit(const Ensemble& e, const Mat& R, int iters) {
    validate(e);
    if (e.kind != EnsembleKind::Observed)
        throw ValidationError("em_fit expects an observed ensemble");
    const int d = e.dim();
    if (R.rows() != d || R.cols() != d)
        throw ValidationError("noise covariance shape does not match the ensemble");
    if (iters < 1) throw ValidationError("em_fit needs at least one iteration");

    FitResult init = mle_fit(e);
    Mat A = init.A_hat;
    Mat H = project_psd(init.H_hat);
    const long n_inc = init.n_increments;

    std::vector<double> trace;
    trace.reserve(static_cast<size_t>(iters) + 1);
    for (int k = 0; k < iters; ++k) {
        const SmoothedMoments sm = e_step(e, A, H, R);
        trace.push_back(sm.loglik);
        Eigen::FullPivLU<Mat> lu(sm.S00);
        if (!lu.isInvertible())
            throw SingularGramError("smoothed Gram matrix is singular in the M-step");
        const Mat F = Mat(lu.solve(sm.S10.transpose()).transpose());
        const Mat Q = symmetrize(sm.S11 - sm.S10 * F.transpose() - F * sm.S10.transpose() +
                                 F * sm.S00 * F.transpose()) /
                      static_cast<double>(n_inc);
        A = (F - Mat::Identity(d, d)) / e.dt;
        H = project_psd(Q / e.dt);
    }
    trace.push_back(e_step(e, A, H, R).loglik);

    for (size_t k = 0; k + 1 < trace.size(); ++k) {
        const double slack = 1e-8 * std::max(1.0, std::abs(trace[k]));
        if (trace[k + 1] < trace[k] - slack)
            throw NonMonotoneLikelihoodError("observed-data likelihood decreased across an EM step");
    }

    FitResult fit;
    fit.A_hat = A;
    fit.H_hat = H;
    fit.n_increments = n_inc;
    fit.degenerate_residuals = rank_deficient(H);
    fit.log_likelihood = trace.back();
    fit.em_loglik_trace = std::move(trace);
    return fit;
}

}  // namespace retrace
