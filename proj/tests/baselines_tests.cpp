#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "retrace/baselines.hpp"
#include "retrace/errors.hpp"
#include "retrace/sde.hpp"
#include "support.hpp"

using namespace retrace;
using namespace testsupport;

namespace {

Mat line_points(std::initializer_list<double> values) {
    Mat X(static_cast<int>(values.size()), 1);
    int t = 0;
    for (double v : values) X(t++, 0) = v;
    return X;
}

bool is_value_order_or_reverse(const std::vector<int>& order, const Mat& X) {
    std::vector<int> by_value(order.size());
    for (size_t i = 0; i < by_value.size(); ++i) by_value[i] = static_cast<int>(i);
    std::sort(by_value.begin(), by_value.end(),
              [&](int a, int b) { return X(a, 0) < X(b, 0); });
    std::vector<int> reversed(by_value.rbegin(), by_value.rend());
    return order == by_value || order == reversed;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("mst on collinear points walks the line") {
    const Mat X = line_points({3.0, 0.0, 1.0, 2.0});
    CHECK(is_value_order_or_reverse(mst_order(X), X));
    CHECK(is_value_order_or_reverse(mst_order(X, RootRule::IndexZero), X));
}

TEST_CASE("mst with an index-zero root and sorted values is the identity") {
    const Mat X = line_points({0.0, 1.0, 2.0, 3.0, 4.0});
    const std::vector<int> expect{0, 1, 2, 3, 4};
    CHECK(mst_order(X, RootRule::IndexZero) == expect);
}

TEST_CASE("mst on two points is deterministic") {
    const Mat X = line_points({1.0, 5.0});
    CHECK(mst_order(X).size() == 2);
    CHECK(mst_order(X) == mst_order(X));
    CHECK(mst_order(X, RootRule::IndexZero)[0] == 0);

    const Mat same = line_points({2.0, 2.0});
    CHECK(mst_order(same) == std::vector<int>{0, 1});  // ties break by index
}

TEST_CASE("mst recovers a curve sampled in order") {
    // Consecutive samples are each other's nearest neighbors, so the MST
    // is the sampling path and the traversal must walk it end to end.
    Mat X(8, 2);
    for (int t = 0; t < 8; ++t) {
        X(t, 0) = static_cast<double>(t);
        X(t, 1) = 0.1 * t * t;
    }
    const auto order = mst_order(X);
    const std::vector<int> identity{0, 1, 2, 3, 4, 5, 6, 7};
    const std::vector<int> reversed{7, 6, 5, 4, 3, 2, 1, 0};
    CHECK((order == identity || order == reversed));
}

TEST_CASE("mst ordering survives translations and rotations") {
    Rng rng(RngSeed{150});
    for (int rep = 0; rep < 10; ++rep) {
        const Mat X = rng.normal_mat(8, 3);
        const Mat Q = random_orthogonal(3, rng);
        const Vec shift = rng.normal_vec(3);
        Mat Y = X * Q.transpose();
        Y.rowwise() += shift.transpose();
        CHECK(mst_order(X) == mst_order(Y));
    }
}

TEST_CASE("mst input validation") {
    CHECK_THROWS_AS(mst_order(line_points({1.0})), ValidationError);
    Mat bad = line_points({0.0, 1.0, 2.0});
    bad(1, 0) = std::nan("");
    CHECK_THROWS_AS(mst_order(bad), ValidationError);
}

TEST_CASE("dpt pseudotime is monotone on an even 1-D grid") {
    Mat X(10, 1);
    for (int t = 0; t < 10; ++t) X(t, 0) = static_cast<double>(t);
    BaselineConfig cfg;
    cfg.method = BaselineMethod::Dpt;
    cfg.dpt_n_eigs = 5;
    const auto order = dpt_order(X, cfg);
    const std::vector<int> identity{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const std::vector<int> reversed{9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
    CHECK((order == identity || order == reversed));

    cfg.root_rule = RootRule::IndexZero;
    CHECK(dpt_order(X, cfg) == identity);
}

TEST_CASE("dpt collapses identical points to the identity") {
    Mat X = Mat::Ones(5, 2);
    BaselineConfig cfg;
    cfg.dpt_n_eigs = 2;
    CHECK(dpt_order(X, cfg) == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("dpt returns a bijection on random input") {
    Rng rng(RngSeed{151});
    BaselineConfig cfg;
    cfg.dpt_n_eigs = 3;
    for (int rep = 0; rep < 1000; ++rep) {
        const Mat X = rng.normal_mat(8, 2);
        const auto order = dpt_order(X, cfg);
        CHECK(is_permutation(order));
    }
}

TEST_CASE("dpt ordering survives translations") {
    Rng rng(RngSeed{152});
    BaselineConfig cfg;
    cfg.dpt_n_eigs = 3;
    for (int rep = 0; rep < 10; ++rep) {
        const Mat X = rng.normal_mat(7, 2);
        Mat Y = X;
        Y.rowwise() += rng.normal_vec(2).transpose();
        CHECK(dpt_order(X, cfg) == dpt_order(Y, cfg));
    }
}

TEST_CASE("dpt input validation") {
    BaselineConfig cfg;
    cfg.dpt_n_eigs = 1;
    CHECK_THROWS_AS(dpt_order(line_points({0.0, 1.0}), cfg), ValidationError);
    cfg.dpt_n_eigs = 4;
    CHECK_THROWS_AS(dpt_order(line_points({0.0, 1.0, 2.0, 3.0}), cfg), ValidationError);
}

TEST_CASE("baseline pipeline orders per trajectory and refits") {
    GenSpec spec;
    spec.min_irreversibility = 0.1;
    const auto p = make_irreversible_params(3, RngSeed{153}, spec, 0.01);
    const InitSpec init = InitSpec::gaussian(Vec::Zero(3), 2.5 * Mat::Identity(3, 3));
    const Ensemble clean = simulate(p, 40, 12, init, RngSeed{154});
    const auto [shuffled, truth] = corrupt_order(clean, PermMode::Shared, RngSeed{155});

    for (BaselineMethod method : {BaselineMethod::Mst, BaselineMethod::Dpt}) {
        BaselineConfig cfg;
        cfg.method = method;
        const auto [record, fit] = baseline_pipeline(shuffled, cfg);
        CHECK(record.mode == PermMode::PerTrajectory);
        REQUIRE(record.n_perms() == 40);
        for (int j = 0; j < 40; ++j) CHECK(is_permutation(record.perm_for(j)));

        // the reported fit is exactly the estimate on the reordered data
        const FitResult refit = mle_fit(apply_permutation(shuffled, record));
        CHECK(max_abs(fit.A_hat - refit.A_hat) == 0.0);
        CHECK(max_abs(fit.H_hat - refit.H_hat) == 0.0);

        const auto [record2, fit2] = baseline_pipeline(shuffled, cfg);
        for (int j = 0; j < 40; ++j) CHECK(record2.perm_for(j) == record.perm_for(j));
    }
}

}  // TEST_SUITE
