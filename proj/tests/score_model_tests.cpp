#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "retrace/errors.hpp"
#include "retrace/linalg.hpp"
#include "retrace/slice_stats.hpp"
#include "support.hpp"

using namespace retrace;
using namespace testsupport;

namespace {

/// Log-density of N(mean, cov) up to its constant, evaluated without the
/// library's precision matrix: the quadratic form comes from an
/// elimination solve of cov * y = x - mean.
double log_density_oracle(const Mat& cov, const Vec& mean, const Vec& x) {
    const int d = static_cast<int>(mean.size());
    std::vector<std::vector<double>> M(d, std::vector<double>(d));
    std::vector<double> rhs(d);
    for (int i = 0; i < d; ++i) {
        rhs[i] = x[i] - mean[i];
        for (int j = 0; j < d; ++j) M[i][j] = cov(i, j);
    }
    const auto y = gauss_solve(std::move(M), std::move(rhs));
    double q = 0.0;
    for (int i = 0; i < d; ++i) q += (x[i] - mean[i]) * y[i];
    return -0.5 * q;
}

Ensemble from_samples(const Mat& samples_t0, const Mat& samples_t1, double dt = 0.01) {
    Ensemble e;
    e.dt = dt;
    const int n = static_cast<int>(samples_t0.rows());
    for (int j = 0; j < n; ++j) {
        Mat traj(2, samples_t0.cols());
        traj.row(0) = samples_t0.row(j);
        traj.row(1) = samples_t1.row(j);
        e.data.push_back(traj);
    }
    return e;
}

}  // namespace

TEST_SUITE("score_model") {

TEST_CASE("slice fit matches a naive per-slice mean and covariance") {
    Rng rng(RngSeed{41});
    Ensemble e;
    e.dt = 0.1;
    for (int j = 0; j < 7; ++j) e.data.push_back(rng.normal_mat(3, 2));

    const auto slices = fit_slices(e);
    REQUIRE(slices.size() == 3);
    for (int t = 0; t < 3; ++t) {
        Vec mu = Vec::Zero(2);
        for (int j = 0; j < 7; ++j) mu += e.data[j].row(t).transpose();
        mu /= 7.0;
        Mat S = Mat::Zero(2, 2);
        for (int j = 0; j < 7; ++j) {
            const Vec c = e.data[j].row(t).transpose() - mu;
            S += c * c.transpose();
        }
        S /= 6.0;
        CHECK(slices[t].t_index == t);
        CHECK(slices[t].n_samples == 7);
        CHECK(max_abs(slices[t].mean - mu) < 1e-14);
        CHECK(max_abs(slices[t].raw_cov - S) < 1e-14);
        CHECK(max_abs(slices[t].cov - slices[t].raw_cov) < 1e-12);  // no correction requested
    }
}

TEST_CASE("noise correction subtracts R before the floor") {
    Rng rng(RngSeed{42});
    Ensemble e;
    e.dt = 0.1;
    for (int j = 0; j < 50; ++j) e.data.push_back(rng.normal_mat(2, 2));
    const Mat R = 0.1 * Mat::Identity(2, 2);
    const auto plain = fit_slices(e);
    const auto corrected = fit_slices(e, R);
    for (int t = 0; t < 2; ++t) {
        CHECK(max_abs(corrected[t].raw_cov - plain[t].raw_cov) == 0.0);
        CHECK(max_abs(corrected[t].cov - project_psd(plain[t].raw_cov - R)) < 1e-12);
    }
}

TEST_CASE("aggressive correction lands on the covariance floor") {
    Rng rng(RngSeed{43});
    Ensemble e;
    e.dt = 0.1;
    for (int j = 0; j < 30; ++j) e.data.push_back(rng.normal_mat(2, 1));
    const Mat R = 100.0 * Mat::Identity(1, 1);
    const auto slices = fit_slices(e, R);
    CHECK(slices[0].cov(0, 0) == doctest::Approx(kPsdFloor));
}

TEST_CASE("identical trajectories floor the covariance") {
    Ensemble e;
    e.dt = 0.1;
    Mat traj(2, 2);
    traj << 1.0, 2.0, 3.0, 4.0;
    for (int j = 0; j < 5; ++j) e.data.push_back(traj);
    const auto slices = fit_slices(e);
    CHECK(max_abs(slices[0].raw_cov) == 0.0);
    CHECK(max_abs(slices[0].cov - kPsdFloor * Mat::Identity(2, 2)) < 1e-20);
    CHECK(slices[0].cond == doctest::Approx(1.0));
}

TEST_CASE("slice fit is consistent on a known Gaussian") {
    const int n = 50000;
    Mat cov(2, 2);
    cov << 2.0, 0.6, 0.6, 1.0;
    Vec mean(2);
    mean << 1.0, -3.0;
    const Mat x0 = sample_gaussian(mean, cov, n, RngSeed{44});
    const Mat x1 = sample_gaussian(mean, cov, n, RngSeed{45});
    const auto slices = fit_slices(from_samples(x0, x1));
    for (const auto& g : slices) {
        CHECK(max_abs(g.mean - mean) < 0.04);
        CHECK(max_abs(g.cov - cov) < 0.05);
    }
}

TEST_CASE("score of a diagonal Gaussian by hand") {
    Vec mean(2);
    mean << 1.0, -2.0;
    Mat cov(2, 2);
    cov << 1.0, 0.0, 0.0, 4.0;
    const auto g = make_slice_gaussian(0, mean, cov, cov, 100);
    Vec x(2);
    x << 2.0, 0.0;
    const Vec s = score(g, x);
    CHECK(s[0] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(score(g, mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("score equals the gradient of the log-density") {
    // Central differences are exact for quadratics, so the finite
    // difference of the elimination-based log-density is an independent
    // oracle for the score at tight tolerance.
    Rng rng(RngSeed{46});
    const double h = 1e-5;
    for (int rep = 0; rep < 10; ++rep) {
        const int d = 2 + rng.below(3);
        const Mat cov = random_spd(d, 0.5, 3.0, rng);
        const Vec mean = rng.normal_vec(d);
        const auto g = make_slice_gaussian(0, mean, cov, cov, 100);
        for (int pt = 0; pt < 10; ++pt) {
            const Vec x = mean + rng.normal_vec(d);
            const Vec s = score(g, x);
            for (int i = 0; i < d; ++i) {
                Vec xp = x, xm = x;
                xp[i] += h;
                xm[i] -= h;
                const double fd =
                    (log_density_oracle(cov, mean, xp) - log_density_oracle(cov, mean, xm)) /
                    (2.0 * h);
                CHECK(std::abs(s[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
            }
        }
    }
}

TEST_CASE("score flags a numerically singular covariance") {
    Mat cov(2, 2);
    cov << 1.0, 0.0, 0.0, 1e-15;
    const auto g = make_slice_gaussian(0, Vec::Zero(2), cov, cov, 100);
    CHECK(g.cond > 1e12);
    CHECK_THROWS_AS(score(g, Vec::Ones(2)), SingularCovarianceError);

    const auto zero = make_slice_gaussian(0, Vec::Zero(2), Mat::Zero(2, 2), Mat::Zero(2, 2), 100);
    CHECK(std::isinf(zero.cond));
    CHECK_THROWS_AS(score(zero, Vec::Ones(2)), SingularCovarianceError);
}

TEST_CASE("collinear samples stay usable thanks to the floor") {
    // Points on a line have a rank-1 sample covariance. After flooring,
    // the condition number is large but finite and scoring still works.
    Ensemble e;
    e.dt = 0.1;
    for (int j = 0; j < 10; ++j) {
        Mat traj(2, 2);
        traj << static_cast<double>(j), 2.0 * j, static_cast<double>(j), 2.0 * j;
        e.data.push_back(traj);
    }
    const auto slices = fit_slices(e);
    CHECK(slices[0].cond < 1e12);
    CHECK(std::isfinite(score(slices[0], Vec::Ones(2)).norm()));
}

TEST_CASE("slice fit input validation") {
    Ensemble single;
    single.dt = 0.1;
    single.data.push_back(Mat::Zero(3, 2));
    CHECK_THROWS_AS(fit_slices(single), InsufficientSamplesError);

    Ensemble ok;
    ok.dt = 0.1;
    ok.data.push_back(Mat::Zero(3, 2));
    ok.data.push_back(Mat::Ones(3, 2));
    CHECK_THROWS_AS(fit_slices(ok, Mat::Identity(3, 3)), ValidationError);
}

}  // TEST_SUITE
