#include <doctest.h>

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <set>

#include "retrace/errors.hpp"
#include "retrace/linalg.hpp"
#include "retrace/sde.hpp"
#include "support.hpp"

using namespace retrace;
using namespace testsupport;

namespace {

Mat slice_covariance(const Ensemble& e, int t) {
    const int n = e.n_traj();
    const int d = e.dim();
    Vec mean = Vec::Zero(d);
    for (int j = 0; j < n; ++j) mean += e.data[j].row(t).transpose();
    mean /= n;
    Mat cov = Mat::Zero(d, d);
    for (int j = 0; j < n; ++j) {
        const Vec c = e.data[j].row(t).transpose() - mean;
        cov += c * c.transpose();
    }
    return cov / (n - 1);
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("make_params squares the diffusion") {
    Rng rng(RngSeed{31});
    const Mat G = rng.normal_mat(3, 2);
    const auto p = make_params(-Mat::Identity(3, 3), G, 0.01);
    CHECK(max_abs(p.H - G * G.transpose()) == 0.0);
    CHECK_THROWS_AS(make_params(-Mat::Identity(3, 3), G, 0.0), ValidationError);
    CHECK_THROWS_AS(make_params(-Mat::Identity(2, 2), G, 0.01), ValidationError);
}

TEST_CASE("irreversibility of a planar rotation against hand values") {
    // A = -I + rotation, H = I. The stationary covariance is I/2 (check by
    // substitution), the flux is A/2, and the score works out to sqrt(2).
    Mat A(2, 2);
    A << -1.0, 1.0, -1.0, -1.0;
    const Mat H = Mat::Identity(2, 2);
    CHECK(max_abs(solve_lyapunov(A, H) - 0.5 * Mat::Identity(2, 2)) < 1e-12);
    CHECK(irreversibility_score(A, H) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("irreversibility score is invariant under joint rescaling") {
    Rng rng(RngSeed{32});
    for (int rep = 0; rep < 10; ++rep) {
        const Mat A = random_stable(4, rng);
        const Mat H = random_spd(4, 0.3, 2.0, rng);
        const double s = irreversibility_score(A, H);
        CHECK(irreversibility_score(3.7 * A, 3.7 * H) == doctest::Approx(s).epsilon(1e-9));
    }
}

TEST_CASE("gradient systems score zero") {
    GenSpec spec;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = make_reversible_params(4, RngSeed{seed}, spec, 0.01);
        CHECK(max_abs(p.A - p.A.transpose()) < 1e-12);
        CHECK(max_abs(p.G - Mat::Identity(4, 4)) == 0.0);
        CHECK(irreversibility_score(p.A, p.H) < 1e-10);
    }
}

TEST_CASE("generated systems respect the requested bands") {
    GenSpec spec;
    for (std::uint64_t seed = 40; seed < 52; ++seed) {
        const int d = 2 + static_cast<int>(seed % 5);
        const auto p = make_irreversible_params(d, RngSeed{seed}, spec, 0.01);

        const Eigen::VectorXcd ev = Eigen::EigenSolver<Mat>(p.A).eigenvalues();
        CHECK(ev.real().maxCoeff() <= -spec.lambda_min + 1e-9);
        CHECK(ev.real().minCoeff() >= -spec.lambda_max - 1e-9);

        const Vec sv = Eigen::JacobiSVD<Mat>(p.G).singularValues();
        CHECK(sv.maxCoeff() <= spec.g_sv_max + 1e-9);
        CHECK(sv.minCoeff() >= spec.g_sv_min - 1e-9);

        CHECK(irreversibility_score(p.A, p.H) > spec.min_irreversibility);
        CHECK(is_symmetric(p.H, 1e-10));
    }
}

TEST_CASE("generator is deterministic in the seed") {
    GenSpec spec;
    const auto a = make_irreversible_params(5, RngSeed{77}, spec, 0.01);
    const auto b = make_irreversible_params(5, RngSeed{77}, spec, 0.01);
    CHECK(max_abs(a.A - b.A) == 0.0);
    CHECK(max_abs(a.G - b.G) == 0.0);
}

TEST_CASE("identity diffusion kind returns G = I") {
    GenSpec spec;
    spec.g_kind = DiffusionKind::Identity;
    spec.require_irreversible = false;
    const auto p = make_irreversible_params(3, RngSeed{1}, spec, 0.01);
    CHECK(max_abs(p.G - Mat::Identity(3, 3)) == 0.0);
}

TEST_CASE("irreversibility requirement can exhaust the attempt budget") {
    // With no rotation and G = I every draw is a gradient system, so the
    // rejection loop can never succeed.
    GenSpec spec;
    spec.rotation_strength = 0.0;
    spec.g_kind = DiffusionKind::Identity;
    spec.max_attempts = 5;
    CHECK_THROWS_AS(make_irreversible_params(3, RngSeed{2}, spec, 0.01), GenerationFailureError);
}

TEST_CASE("zero drift and diffusion freeze the state") {
    const auto p = make_params(Mat::Zero(2, 2), Mat::Zero(2, 2), 0.01);
    const Ensemble e = simulate(p, 3, 5, InitSpec::standard_gaussian(2), RngSeed{3});
    CHECK(e.kind == EnsembleKind::Latent);
    CHECK(e.dt == 0.01);
    for (int j = 0; j < 3; ++j)
        for (int t = 1; t < 5; ++t)
            CHECK(max_abs(e.data[j].row(t) - e.data[j].row(0)) == 0.0);
}

TEST_CASE("simulate validates its inputs") {
    const auto p = make_params(-Mat::Identity(2, 2), Mat::Identity(2, 2), 0.01);
    CHECK_THROWS_AS(simulate(p, 0, 5, InitSpec::standard_gaussian(2), RngSeed{4}), ValidationError);
    CHECK_THROWS_AS(simulate(p, 3, 1, InitSpec::standard_gaussian(2), RngSeed{4}), ValidationError);
    CHECK_THROWS_AS(simulate(p, 3, 5, InitSpec::standard_gaussian(3), RngSeed{4}), ValidationError);
    const auto unstable = make_params(Mat::Identity(2, 2), Mat::Identity(2, 2), 0.01);
    CHECK_THROWS_AS(simulate(unstable, 3, 5, InitSpec::stationary(), RngSeed{4}), NonHurwitzError);
}

TEST_CASE("scalar lag-1 autocovariance matches the discrete chain") {
    // dx = -x dt + dW, x0 drawn from the stationary law N(0, 1/2). One
    // Euler step multiplies the state by (1 - dt), so
    // E[x0 x1] = (1 - dt) * 1/2 = 0.495 at dt = 0.01.
    Mat A(1, 1), G(1, 1);
    A << -1.0;
    G << 1.0;
    const auto p = make_params(A, G, 0.01);
    const int n = 50000;
    const Ensemble e = simulate(p, n, 2, InitSpec::stationary(), RngSeed{5});
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += e.data[j](0, 0) * e.data[j](1, 0);
    acc /= n;
    CHECK(acc == doctest::Approx(0.495).epsilon(0.02));
}

TEST_CASE("stationary initialization stays stationary") {
    Mat A(2, 2);
    A << -1.0, 1.0, -1.0, -1.0;
    const auto p = make_params(A, Mat::Identity(2, 2), 0.005);
    const Ensemble e = simulate(p, 40000, 20, InitSpec::stationary(), RngSeed{6});
    const Mat target = 0.5 * Mat::Identity(2, 2);
    CHECK(max_abs(slice_covariance(e, 0) - target) < 0.03);
    CHECK(max_abs(slice_covariance(e, 19) - target) < 0.03);
}

TEST_CASE("observation noise adds variance and flips the kind") {
    Mat A(1, 1), G(1, 1);
    A << -1.0;
    G << 1.0;
    const auto p = make_params(A, G, 0.01);
    const Ensemble latent = simulate(p, 20000, 3, InitSpec::stationary(), RngSeed{7});
    const double sigma = 0.5;
    const Ensemble obs = add_observation_noise(latent, ObservationNoise::isotropic(sigma, 1),
                                               RngSeed{8});
    CHECK(obs.kind == EnsembleKind::Observed);
    double mean = 0.0, var = 0.0;
    int count = 0;
    for (int j = 0; j < latent.n_traj(); ++j)
        for (int t = 0; t < 3; ++t) {
            const double diff = obs.data[j](t, 0) - latent.data[j](t, 0);
            mean += diff;
            var += diff * diff;
            ++count;
        }
    mean /= count;
    var = var / count - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.03));
}

TEST_CASE("zero observation noise is a pure relabeling") {
    const auto p = make_params(-Mat::Identity(2, 2), Mat::Identity(2, 2), 0.01);
    const Ensemble latent = simulate(p, 5, 4, InitSpec::stationary(), RngSeed{9});
    const Ensemble obs = add_observation_noise(latent, ObservationNoise::isotropic(0.0, 2),
                                               RngSeed{10});
    CHECK(obs.kind == EnsembleKind::Observed);
    for (int j = 0; j < 5; ++j) CHECK(max_abs(obs.data[j] - latent.data[j]) == 0.0);
    CHECK_THROWS_AS(add_observation_noise(obs, ObservationNoise::isotropic(0.1, 2), RngSeed{11}),
                    ValidationError);
}

TEST_CASE("observation noise streams are independent per trajectory") {
    const auto p = make_params(-Mat::Identity(1, 1), Mat::Identity(1, 1), 0.01);
    const Ensemble latent = simulate(p, 2, 50, InitSpec::stationary(), RngSeed{12});
    const Ensemble obs = add_observation_noise(latent, ObservationNoise::isotropic(1.0, 1),
                                               RngSeed{13});
    const Mat n0 = obs.data[0] - latent.data[0];
    const Mat n1 = obs.data[1] - latent.data[1];
    CHECK(max_abs(n0 - n1) > 1e-3);
}

TEST_CASE("random_permutation draws valid and varied orderings") {
    Rng rng(RngSeed{14});
    std::set<std::vector<int>> seen;
    for (int rep = 0; rep < 1000; ++rep) {
        const auto perm = random_permutation(3, rng);
        CHECK(is_permutation(perm));
        seen.insert(perm);
    }
    CHECK(seen.size() == 6);  // all of S_3 shows up
}

TEST_CASE("corrupt_order is apply_permutation with a recorded truth") {
    const auto p = make_params(-Mat::Identity(2, 2), Mat::Identity(2, 2), 0.01);
    const Ensemble e = simulate(p, 4, 7, InitSpec::stationary(), RngSeed{15});

    SUBCASE("shared mode") {
        const auto [shuffled, truth] = corrupt_order(e, PermMode::Shared, RngSeed{16});
        CHECK(truth.mode == PermMode::Shared);
        CHECK(truth.n_perms() == 1);
        const Ensemble replay = apply_permutation(e, truth);
        for (int j = 0; j < 4; ++j) CHECK(max_abs(shuffled.data[j] - replay.data[j]) == 0.0);
        const Ensemble restored = apply_permutation(shuffled, invert(truth));
        for (int j = 0; j < 4; ++j) CHECK(max_abs(restored.data[j] - e.data[j]) == 0.0);
    }

    SUBCASE("per-trajectory mode") {
        const auto [shuffled, truth] = corrupt_order(e, PermMode::PerTrajectory, RngSeed{17});
        CHECK(truth.mode == PermMode::PerTrajectory);
        CHECK(truth.n_perms() == 4);
        bool any_distinct = false;
        for (int j = 1; j < 4; ++j) any_distinct |= (truth.perm_for(j) != truth.perm_for(0));
        CHECK(any_distinct);
        const Ensemble restored = apply_permutation(shuffled, invert(truth));
        for (int j = 0; j < 4; ++j) CHECK(max_abs(restored.data[j] - e.data[j]) == 0.0);
    }
}

TEST_CASE("corrupt_order preserves each trajectory's multiset of rows") {
    const auto p = make_params(-Mat::Identity(3, 3), Mat::Identity(3, 3), 0.01);
    const Ensemble e = simulate(p, 3, 9, InitSpec::stationary(), RngSeed{18});
    const auto [shuffled, truth] = corrupt_order(e, PermMode::PerTrajectory, RngSeed{19});
    for (int j = 0; j < 3; ++j) {
        std::multiset<double> before, after;
        for (int t = 0; t < 9; ++t) {
            before.insert(e.data[j](t, 0));
            after.insert(shuffled.data[j](t, 0));
        }
        CHECK(before == after);
    }
}

TEST_CASE("simulate is deterministic in the seed") {
    GenSpec spec;
    const auto p = make_irreversible_params(3, RngSeed{20}, spec, 0.01);
    const Ensemble a = simulate(p, 4, 6, InitSpec::stationary(), RngSeed{21});
    const Ensemble b = simulate(p, 4, 6, InitSpec::stationary(), RngSeed{21});
    const Ensemble c = simulate(p, 4, 6, InitSpec::stationary(), RngSeed{22});
    for (int j = 0; j < 4; ++j) CHECK(max_abs(a.data[j] - b.data[j]) == 0.0);
    CHECK(max_abs(a.data[0] - c.data[0]) > 0.0);
}

}  // TEST_SUITE
