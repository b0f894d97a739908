#include "retrace/retrace.hpp"

#include <cmath>

#include "retrace/errors.hpp"
#include "retrace/linalg.hpp"

namespace retrace {

std::pair<double, double> pair_errors(const Vec& x_t, const Vec& x_s, const SliceGaussian& g_t,
                                      const SliceGaussian& g_s, const Mat& H, double dt,
                                      const RetraceConfig& cfg) {
    if (dt <= 0.0) throw ValidationError("pair_errors needs dt > 0");
    Vec bhat = (x_s - x_t) / dt;
    if (cfg.drift_abs) bhat = bhat.cwiseAbs();
    const double err_t = (bhat - H * score(g_t, x_t)).squaredNorm();
    const double err_s = (bhat - H * score(cfg.slice_matched_score ? g_s : g_t, x_s)).squaredNorm();
    return {err_t, err_s};
}

std::pair<double, double> ensemble_pair_errors(const Mat& Xt, const Mat& Xs,
                                               const SliceGaussian& g_t, const SliceGaussian& g_s,
                                               const Mat& H, double dt, const RetraceConfig& cfg) {
    if (dt <= 0.0) throw ValidationError("pair errors need dt > 0");
    if (!(g_t.cond <= 1e12) || !(g_s.cond <= 1e12))
        throw SingularCovarianceError("slice covariance is numerically singular");
    Mat B = (Xs - Xt) / dt;
    if (cfg.drift_abs) B = B.cwiseAbs();
    const SliceGaussian& g_for_s = cfg.slice_matched_score ? g_s : g_t;
    // row j of H score(g, x_j) is -(x_j - mu)^T (P H), P and H symmetric
    const double err_t =
        (B + (Xt.rowwise() - g_t.mean.transpose()) * (g_t.precision * H)).squaredNorm();
    const double err_s =
        (B + (Xs.rowwise() - g_for_s.mean.transpose()) * (g_for_s.precision * H)).squaredNorm();
    return {err_t, err_s};
}

namespace {

/// Applies the configured rule and direction to the pair decision.
/// `errs(swapped)` evaluates (err_t, err_s) for the pair in its current or
/// exchanged arrangement; ties never swap.
template <typename ErrFn>
bool comparator_fires(ErrFn&& errs, const RetraceConfig& cfg) {
    double lhs, rhs;
    if (cfg.pair_rule == PairRule::TwoTerm) {
        const auto [err_t, err_s] = errs(false);
        lhs = err_t;
        rhs = err_s;
    } else {
        const auto [cur_t, cur_s] = errs(false);
        const auto [swp_t, swp_s] = errs(true);
        lhs = swp_t + swp_s;
        rhs = cur_t + cur_s;
    }
    return cfg.swap_direction == SwapDirection::Literal ? lhs < rhs : lhs > rhs;
}

}  // namespace

std::pair<std::vector<int>, int> sort_pass(const Mat& traj, std::vector<int> perm,
                                           const std::vector<SliceGaussian>& slices, const Mat& H,
                                           double dt, const RetraceConfig& cfg) {
    const int T = static_cast<int>(perm.size());
    if (traj.rows() != T || static_cast<int>(slices.size()) != T)
        throw ValidationError("sort_pass inputs disagree in length");

    Mat arranged(T, traj.cols());
    for (int k = 0; k < T; ++k) arranged.row(k) = traj.row(perm[static_cast<size_t>(k)]);

    int n_swaps = 0;
    for (int end = T - 1; end != 0; --end) {
        for (int t = 0; t < end; ++t) {
            const int s = t + 1;
            const bool swap = comparator_fires(
                [&](bool swapped) {
                    const auto& first = swapped ? arranged.row(s) : arranged.row(t);
                    const auto& second = swapped ? arranged.row(t) : arranged.row(s);
                    return pair_errors(first.transpose(), second.transpose(),
                                       slices[static_cast<size_t>(t)],
                                       slices[static_cast<size_t>(s)], H, dt, cfg);
                },
                cfg);
            if (swap) {
                arranged.row(t).swap(arranged.row(s));
                std::swap(perm[static_cast<size_t>(t)], perm[static_cast<size_t>(s)]);
                ++n_swaps;
            }
        }
    }
    return {std::move(perm), n_swaps};
}

std::pair<std::vector<int>, int> ensemble_sort_pass(std::vector<Mat>& slice_data,
                                                    std::vector<int> perm,
                                                    const std::vector<SliceGaussian>& slices,
                                                    const Mat& H, double dt,
                                                    const RetraceConfig& cfg) {
    const int T = static_cast<int>(perm.size());
    if (static_cast<int>(slice_data.size()) != T || static_cast<int>(slices.size()) != T)
        throw ValidationError("ensemble_sort_pass inputs disagree in length");

    int n_swaps = 0;
    for (int end = T - 1; end != 0; --end) {
        for (int t = 0; t < end; ++t) {
            const int s = t + 1;
            const bool swap = comparator_fires(
                [&](bool swapped) {
                    const Mat& first =
                        swapped ? slice_data[static_cast<size_t>(s)] : slice_data[static_cast<size_t>(t)];
                    const Mat& second =
                        swapped ? slice_data[static_cast<size_t>(t)] : slice_data[static_cast<size_t>(s)];
                    return ensemble_pair_errors(first, second, slices[static_cast<size_t>(t)],
                                                slices[static_cast<size_t>(s)], H, dt, cfg);
                },
                cfg);
            if (swap) {
                slice_data[static_cast<size_t>(t)].swap(slice_data[static_cast<size_t>(s)]);
                std::swap(perm[static_cast<size_t>(t)], perm[static_cast<size_t>(s)]);
                ++n_swaps;
            }
        }
    }
    return {std::move(perm), n_swaps};
}

namespace {

FitResult run_estimator(const Ensemble& e, const std::optional<Mat>& R,
                        const RetraceConfig& cfg, EstimatorKind estimator) {
    switch (estimator) {
        case EstimatorKind::Mle:
            return mle_fit(e);
        case EstimatorKind::Ols:
            return ols_fit(e);
        case EstimatorKind::Em: {
            const Mat Rm = R ? *R : Mat(Mat::Zero(e.dim(), e.dim()));
            return em_fit(e, Rm, cfg.em_iters);
        }
    }
    throw ValidationError("unknown estimator");
}

double total_pair_error(const Ensemble& arranged, const std::vector<SliceGaussian>& slices,
                        const Mat& H, double dt, const RetraceConfig& cfg) {
    double total = 0.0;
    const int T = arranged.n_steps();
    for (const Mat& traj : arranged.data)
        for (int t = 0; t + 1 < T; ++t)
            total += pair_errors(traj.row(t).transpose(), traj.row(t + 1).transpose(),
                                 slices[static_cast<size_t>(t)],
                                 slices[static_cast<size_t>(t + 1)], H, dt, cfg)
                         .first;
    return total;
}

}  // namespace

RetraceResult retrace(const Ensemble& e, const std::optional<Mat>& R, const RetraceConfig& cfg,
                      EstimatorKind estimator) {
    validate(e);
    if (cfg.max_outer_iters < 1) throw ValidationError("max_outer_iters must be at least 1");
    const int T = e.n_steps();
    const int N = e.n_traj();
    if (N < 2) throw InsufficientSamplesError("retrace needs at least two trajectories");
    const double dt = cfg.dt > 0.0 ? cfg.dt : e.dt;

    const bool slice_level = cfg.sort_granularity == SortGranularity::EnsembleSlices;
    RetraceResult out;
    out.ordering =
        identity_record(T, slice_level ? PermMode::Shared : PermMode::PerTrajectory, N);

    std::vector<SliceGaussian> slices;
    bool last_pass_swapped = false;
    for (int k = 0; k < cfg.max_outer_iters; ++k) {
        const Ensemble arranged = apply_permutation(e, out.ordering);
        out.fit = run_estimator(arranged, R, cfg, estimator);
        if (slices.empty() || cfg.refit_slices_each_iter) slices = fit_slices(arranged, R);

        int total_swaps = 0;
        if (slice_level) {
            std::vector<Mat> slice_data(static_cast<size_t>(T), Mat(N, e.dim()));
            for (int t = 0; t < T; ++t)
                for (int j = 0; j < N; ++j)
                    slice_data[static_cast<size_t>(t)].row(j) =
                        arranged.data[static_cast<size_t>(j)].row(t);
            auto [perm, n_swaps] = ensemble_sort_pass(slice_data, out.ordering.perms[0], slices,
                                                      out.fit.H_hat, dt, cfg);
            out.ordering.perms[0] = std::move(perm);
            total_swaps = n_swaps;
        } else {
            for (int j = 0; j < N; ++j) {
                auto [perm, n_swaps] = sort_pass(e.data[static_cast<size_t>(j)],
                                                 out.ordering.perms[static_cast<size_t>(j)],
                                                 slices, out.fit.H_hat, dt, cfg);
                out.ordering.perms[static_cast<size_t>(j)] = std::move(perm);
                total_swaps += n_swaps;
            }
        }
        out.outer_iters_used = k + 1;
        out.pairwise_error_trace.push_back(
            total_pair_error(apply_permutation(e, out.ordering), slices, out.fit.H_hat, dt, cfg));
        last_pass_swapped = total_swaps != 0;
        if (!last_pass_swapped) {
            out.converged = true;
            break;
        }
    }
    if (last_pass_swapped)  // parameters must describe the ordering we return
        out.fit = run_estimator(apply_permutation(e, out.ordering), R, cfg, estimator);
    return out;
}

}  // namespace retrace
