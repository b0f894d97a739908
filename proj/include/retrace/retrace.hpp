#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "retrace/ensemble.hpp"
#include "retrace/estimators.hpp"
#include "retrace/slice_stats.hpp"

namespace retrace {

/// Direction of the pairwise swap rule. Literal: swap when the error of the
/// earlier slot is smaller (TwoTerm) or when exchanging the pair lowers the
/// total error (Exchange). Reversed: the opposite. The shipped default is
/// the direction validated by the ordering benchmarks (see README,
/// "comparator calibration").
enum class SwapDirection { Literal, Reversed };

/// Shape of the pairwise decision. TwoTerm compares the two slots' errors
/// of the current arrangement only; Exchange evaluates the drift-score
/// error of both possible orderings of the pair and compares totals.
enum class PairRule { TwoTerm, Exchange };

enum class EstimatorKind { Mle, Ols, Em };

/// What a single swap moves. EnsembleSlices treats the dataset as T slices
/// of N states sharing one ordering (the pair error sums over all
/// trajectories, so comparator noise shrinks like 1/sqrt(N));
/// PerTrajectory sorts each trajectory independently.
enum class SortGranularity { EnsembleSlices, PerTrajectory };

struct RetraceConfig {
    int max_outer_iters = 10;
    SwapDirection swap_direction = SwapDirection::Literal;
    PairRule pair_rule = PairRule::Exchange;
    SortGranularity sort_granularity = SortGranularity::EnsembleSlices;
    /// Elementwise absolute value in the empirical drift. The default is
    /// the signed variant: the calibration benchmark (see README) shows the
    /// absolute value erases the direction signal the exchange rule needs.
    bool drift_abs = false;
    /// Score each endpoint under its own slot's Gaussian (default); off is
    /// the ablation that evaluates both endpoints under the earlier slot.
    bool slice_matched_score = true;
    bool refit_slices_each_iter = true;
    /// Time step for standalone pair-error evaluation; <= 0 means take it
    /// from the ensemble.
    double dt = 0.0;
    /// Inner iteration count when the estimator is Em.
    int em_iters = 5;
};

struct RetraceResult {
    PermutationRecord ordering;  // hypothesis: position -> input time index
    FitResult fit;               // matches the returned ordering
    int outer_iters_used = 0;
    bool converged = false;  // a full sweep made zero swaps
    /// Sum over trajectories and adjacent pairs of the earlier slot's
    /// drift-score error after each outer iteration's sweep.
    std::vector<double> pairwise_error_trace;
};

/// Drift-score discrepancy of an adjacent pair under both readings:
///   bhat  = (x_s - x_t)/dt, elementwise |.| when drift_abs
///   err_t = ||bhat - H score(g_t, x_t)||^2
///   err_s = ||bhat - H score(g_s, x_s)||^2
std::pair<double, double> pair_errors(const Vec& x_t, const Vec& x_s, const SliceGaussian& g_t,
                                      const SliceGaussian& g_s, const Mat& H, double dt,
                                      const RetraceConfig& cfg);

/// Pair error aggregated over a whole slice pair: Xt and Xs hold one state
/// per row (all trajectories at the two slots), and the squared norms sum
/// across rows.
std::pair<double, double> ensemble_pair_errors(const Mat& Xt, const Mat& Xs,
                                               const SliceGaussian& g_t, const SliceGaussian& g_s,
                                               const Mat& H, double dt, const RetraceConfig& cfg);

/// One shrinking-bound bubble sweep over a single trajectory: for
/// end = T-1 down to 1, scan adjacent pairs and swap when the configured
/// comparator fires (ties never swap). `traj` holds the input arrangement;
/// `perm` maps position -> row of traj. Returns the updated hypothesis and
/// the number of swaps performed.
std::pair<std::vector<int>, int> sort_pass(const Mat& traj, std::vector<int> perm,
                                           const std::vector<SliceGaussian>& slices, const Mat& H,
                                           double dt, const RetraceConfig& cfg);

/// The same sweep over ensemble slices: slice_data[k] holds all
/// trajectories' states at slot k (one row per trajectory) and is
/// reordered in place alongside the returned hypothesis.
std::pair<std::vector<int>, int> ensemble_sort_pass(std::vector<Mat>& slice_data,
                                                    std::vector<int> perm,
                                                    const std::vector<SliceGaussian>& slices,
                                                    const Mat& H, double dt,
                                                    const RetraceConfig& cfg);

/// Alternates parameter estimation on the current ordering hypothesis with
/// per-trajectory drift-score sweeps, stopping early once a full outer
/// iteration makes no swaps. R, when given, debiases slice covariances and
/// feeds the Em estimator.
RetraceResult retrace(const Ensemble& e, const std::optional<Mat>& R, const RetraceConfig& cfg,
                      EstimatorKind estimator);

}  // namespace retrace
