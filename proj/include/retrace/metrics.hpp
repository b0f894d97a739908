#pragma once

#include <chrono>
#include <utility>
#include <vector>

#include "retrace/ensemble.hpp"

namespace retrace {

struct EvalReport {
    double ordering_accuracy = 0.0;
    double mae_A = 0.0;
    double mae_H = 0.0;
    double kendall_tau = 0.0;
    double mean_iter_runtime_s = 0.0;
    std::vector<double> per_trajectory_accuracy;
};

/// Fraction of positions whose entries agree, averaged per trajectory and
/// then across trajectories. Exact-position match: a full reversal scores
/// zero. To grade a recovery, pass the inverse of the corruption record as
/// truth (perfect recovery means hypothesis = corruption^{-1}).
double ordering_accuracy(const PermutationRecord& truth, const PermutationRecord& hypothesis);

/// As above but per trajectory.
std::vector<double> per_trajectory_accuracy(const PermutationRecord& truth,
                                            const PermutationRecord& hypothesis);

/// Mean absolute elementwise difference.
double param_mae(const Mat& truth, const Mat& est);

/// Concordant-minus-discordant rank statistic between two orderings over
/// position pairs, averaged across trajectories: 1 at equality, -1 at full
/// reversal. Counts inversions by merge sort.
double kendall_tau(const PermutationRecord& truth, const PermutationRecord& hypothesis);

/// Inversion count of a single permutation, exposed for rank diagnostics.
long count_inversions(std::vector<int> perm);

/// Wall-clock time of a callable on the monotonic clock.
template <typename F>
auto timed(F&& f) -> std::pair<decltype(f()), double> {
    const auto start = std::chrono::steady_clock::now();
    auto out = f();
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    return {std::move(out), elapsed.count()};
}

}  // namespace retrace
