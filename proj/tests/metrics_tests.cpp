#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "retrace/errors.hpp"
#include "retrace/metrics.hpp"
#include "retrace/sde.hpp"
#include "support.hpp"

using namespace retrace;
using namespace testsupport;

namespace {

PermutationRecord shared(std::vector<int> perm) {
    PermutationRecord r;
    r.mode = PermMode::Shared;
    r.perms = {std::move(perm)};
    return r;
}

PermutationRecord per_traj(std::vector<std::vector<int>> perms) {
    PermutationRecord r;
    r.mode = PermMode::PerTrajectory;
    r.perms = std::move(perms);
    return r;
}

long naive_inversions(const std::vector<int>& perm) {
    long inv = 0;
    for (size_t i = 0; i < perm.size(); ++i)
        for (size_t j = i + 1; j < perm.size(); ++j) inv += perm[i] > perm[j];
    return inv;
}

/// O(T^2) concordant/discordant count over position pairs.
double naive_tau(const std::vector<int>& a, const std::vector<int>& b) {
    const size_t T = a.size();
    long discordant = 0;
    for (size_t k = 0; k < T; ++k)
        for (size_t l = k + 1; l < T; ++l)
            discordant += (a[k] - a[l]) * (b[k] - b[l]) < 0;
    return 1.0 - 4.0 * static_cast<double>(discordant) /
                     (static_cast<double>(T) * static_cast<double>(T - 1));
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("accuracy of simple arrangements") {
    CHECK(ordering_accuracy(shared({0, 1, 2, 3}), shared({0, 1, 2, 3})) == 1.0);
    CHECK(ordering_accuracy(shared({0, 1, 2, 3}), shared({3, 2, 1, 0})) == 0.0);
    CHECK(ordering_accuracy(shared({0, 1, 2, 3}), shared({1, 0, 2, 3})) == 0.5);
}

TEST_CASE("accuracy averages per trajectory first") {
    const auto truth = per_traj({{0, 1, 2, 3}, {0, 1, 2, 3}});
    const auto hyp = per_traj({{0, 1, 2, 3}, {3, 2, 1, 0}});
    const auto per = per_trajectory_accuracy(truth, hyp);
    REQUIRE(per.size() == 2);
    CHECK(per[0] == 1.0);
    CHECK(per[1] == 0.0);
    CHECK(ordering_accuracy(truth, hyp) == 0.5);
}

TEST_CASE("a shared record broadcasts against per-trajectory hypotheses") {
    const auto truth = shared({0, 1, 2, 3});
    const auto hyp = per_traj({{0, 1, 2, 3}, {3, 2, 1, 0}, {0, 1, 3, 2}});
    CHECK(ordering_accuracy(truth, hyp) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(per_trajectory_accuracy(truth, hyp).size() == 3);
}

TEST_CASE("record shape mismatches are rejected") {
    CHECK_THROWS_AS(ordering_accuracy(shared({0, 1, 2}), shared({0, 1, 2, 3})),
                    ShapeMismatchError);
    CHECK_THROWS_AS(ordering_accuracy(per_traj({{0, 1}, {0, 1}}), per_traj({{0, 1}})),
                    ShapeMismatchError);
    CHECK_THROWS_AS(ordering_accuracy(PermutationRecord{}, shared({0, 1})), ShapeMismatchError);
    CHECK_THROWS_AS(kendall_tau(shared({0}), shared({0})), ShapeMismatchError);
}

TEST_CASE("parameter error on known matrices") {
    const Mat a = Mat::Identity(2, 2);
    CHECK(param_mae(a, a) == 0.0);
    CHECK(param_mae(a, (a.array() + 0.5).matrix()) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK_THROWS_AS(param_mae(Mat::Zero(2, 3), Mat::Zero(3, 2)), ShapeMismatchError);
}

TEST_CASE("parameter error equals a naive double loop") {
    Rng rng(RngSeed{160});
    for (int rep = 0; rep < 20; ++rep) {
        const Mat x = rng.normal_mat(4, 4);
        const Mat y = rng.normal_mat(4, 4);
        double acc = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) acc += std::abs(x(i, j) - y(i, j));
        acc /= 16.0;
        CHECK(std::abs(param_mae(x, y) - acc) <= 1e-15);
    }
}

TEST_CASE("parameter error obeys the triangle inequality") {
    Rng rng(RngSeed{161});
    for (int rep = 0; rep < 50; ++rep) {
        const Mat x = rng.normal_mat(3, 3);
        const Mat y = rng.normal_mat(3, 3);
        const Mat z = rng.normal_mat(3, 3);
        CHECK(param_mae(x, z) <= param_mae(x, y) + param_mae(y, z) + 1e-12);
    }
}

TEST_CASE("rank statistic endpoints") {
    CHECK(kendall_tau(shared({0, 1, 2, 3, 4}), shared({0, 1, 2, 3, 4})) == 1.0);
    CHECK(kendall_tau(shared({0, 1, 2, 3, 4}), shared({4, 3, 2, 1, 0})) == -1.0);
}

TEST_CASE("rank statistic equals the quadratic pair count") {
    Rng rng(RngSeed{162});
    for (int rep = 0; rep < 50; ++rep) {
        const int T = 2 + rng.below(12);
        const auto a = random_permutation(T, rng);
        const auto b = random_permutation(T, rng);
        CHECK(kendall_tau(shared(a), shared(b)) == naive_tau(a, b));
    }
}

TEST_CASE("metrics ignore a common position relabeling") {
    Rng rng(RngSeed{163});
    for (int rep = 0; rep < 30; ++rep) {
        const int T = 5 + rng.below(6);
        const auto truth = shared(random_permutation(T, rng));
        const auto hyp = shared(random_permutation(T, rng));
        const auto relabel = shared(random_permutation(T, rng));
        const auto truth2 = compose(truth, relabel);
        const auto hyp2 = compose(hyp, relabel);
        CHECK(ordering_accuracy(truth, hyp) == ordering_accuracy(truth2, hyp2));
        CHECK(kendall_tau(truth, hyp) == kendall_tau(truth2, hyp2));
    }
}

TEST_CASE("inversion counting") {
    CHECK(count_inversions({0, 1, 2}) == 0);
    CHECK(count_inversions({2, 1, 0}) == 3);
    CHECK(count_inversions({1, 0, 2}) == 1);
    Rng rng(RngSeed{164});
    for (int rep = 0; rep < 30; ++rep) {
        const int T = 1 + rng.below(40);
        const auto perm = random_permutation(T, rng);
        CHECK(count_inversions(perm) == naive_inversions(perm));
    }
}

TEST_CASE("timing a callable") {
    const auto [value, elapsed] = timed([] { return 42; });
    CHECK(value == 42);
    CHECK(elapsed >= 0.0);
    CHECK(elapsed < 0.01);

    volatile double sink = 0.0;
    const auto work = [&] {
        double acc = 0.0;
        for (int i = 0; i < 100000; ++i) acc += std::sqrt(static_cast<double>(i));
        sink = acc;
        return acc;
    };
    const auto [one, t_one] = timed(work);
    const auto [two, t_two] = timed([&] {
        work();
        return work();
    });
    CHECK(one == two);
    CHECK(std::abs(t_two - 2.0 * t_one) < 0.005);
}

}  // TEST_SUITE
