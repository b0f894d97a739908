#include "retrace/metrics.hpp"

#include <algorithm>

#include "retrace/errors.hpp"

namespace retrace {

namespace {

int paired_count(const PermutationRecord& a, const PermutationRecord& b) {
    if (a.perms.empty() || b.perms.empty())
        throw ShapeMismatchError("empty permutation record");
    if (a.perm_for(0).size() != b.perm_for(0).size())
        throw ShapeMismatchError("records disagree in sequence length");
    if (a.mode == PermMode::PerTrajectory && b.mode == PermMode::PerTrajectory &&
        a.n_perms() != b.n_perms())
        throw ShapeMismatchError("records disagree in trajectory count");
    return std::max(a.n_perms(), b.n_perms());
}

}  // namespace

std::vector<double> per_trajectory_accuracy(const PermutationRecord& truth,
                                            const PermutationRecord& hypothesis) {
    const int n = paired_count(truth, hypothesis);
    std::vector<double> acc(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        const std::vector<int>& a = truth.perm_for(j);
        const std::vector<int>& b = hypothesis.perm_for(j);
        int hits = 0;
        for (size_t k = 0; k < a.size(); ++k) hits += a[k] == b[k];
        acc[static_cast<size_t>(j)] = static_cast<double>(hits) / static_cast<double>(a.size());
    }
    return acc;
}

double ordering_accuracy(const PermutationRecord& truth, const PermutationRecord& hypothesis) {
    const std::vector<double> acc = per_trajectory_accuracy(truth, hypothesis);
    double sum = 0.0;
    for (double a : acc) sum += a;
    return sum / static_cast<double>(acc.size());
}

double param_mae(const Mat& truth, const Mat& est) {
    if (truth.rows() != est.rows() || truth.cols() != est.cols())
        throw ShapeMismatchError("matrices disagree in shape");
    return (truth - est).cwiseAbs().mean();
}

long count_inversions(std::vector<int> perm) {
    // bottom-up merge sort counting crossed pairs
    const size_t n = perm.size();
    std::vector<int> buf(n);
    long inversions = 0;
    for (size_t width = 1; width < n; width *= 2) {
        for (size_t lo = 0; lo + width < n; lo += 2 * width) {
            const size_t mid = lo + width;
            const size_t hi = std::min(lo + 2 * width, n);
            size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (perm[i] <= perm[j]) {
                    buf[k++] = perm[i++];
                } else {
                    inversions += static_cast<long>(mid - i);
                    buf[k++] = perm[j++];
                }
            }
            while (i < mid) buf[k++] = perm[i++];
            while (j < hi) buf[k++] = perm[j++];
            std::copy(buf.begin() + static_cast<long>(lo), buf.begin() + static_cast<long>(hi),
                      perm.begin() + static_cast<long>(lo));
        }
    }
    return inversions;
}

double kendall_tau(const PermutationRecord& truth, const PermutationRecord& hypothesis) {
    const int n = paired_count(truth, hypothesis);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
        const std::vector<int>& a = truth.perm_for(j);
        const std::vector<int>& b = hypothesis.perm_for(j);
        const size_t T = a.size();
        if (T < 2) throw ShapeMismatchError("kendall_tau needs at least two positions");
        // relabel so truth becomes the identity, then count inversions
        std::vector<int> c(T);
        for (size_t k = 0; k < T; ++k) c[static_cast<size_t>(a[k])] = b[k];
        const double d = static_cast<double>(count_inversions(std::move(c)));
        sum += 1.0 - 4.0 * d / (static_cast<double>(T) * static_cast<double>(T - 1));
    }
    return sum / static_cast<double>(n);
}

}  // namespace retrace
