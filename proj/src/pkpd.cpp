#include "retrace/pkpd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "retrace/errors.hpp"
#include "retrace/estimators.hpp"

namespace retrace {

namespace {

constexpr double kVolumeFloor = 1e-6;  // mm^3, positivity clamp for latent paths

double lognormal_around(double base, double bsv, Rng& rng) {
    if (bsv == 0.0) return base;
    const double s2 = std::log1p(bsv * bsv);
    return base * std::exp(std::sqrt(s2) * rng.normal() - 0.5 * s2);
}

struct ArmDose {
    double chemo = 0.0;
    int radio = 0;
};

ArmDose fixed_dose(Regime r, const PKPDParams& p) {
    if (r == Regime::AlwaysTreat) return {p.max_chemo, 1};
    return {0.0, 0};
}

/// One Euler transition of the latent volume; clamps at the floor.
double step_volume(double x, const ArmDose& dose, const PKPDParams& p, double z,
                   CohortDiagnostics* diag) {
    const double next =
        x + pkpd_drift(x, dose.chemo, dose.radio, p) * p.dt() + p.sigma_tumor * std::sqrt(p.dt()) * z;
    if (diag != nullptr) {
        ++diag->steps;
        if (next < kVolumeFloor) ++diag->floor_hits;
    }
    return std::max(next, kVolumeFloor);
}

std::vector<PKPDSubject> simulate_cohort_impl(int n_subjects, const PKPDParams& base,
                                              const std::vector<Regime>& arms, RngSeed seed,
                                              CohortDiagnostics* diag) {
    validate(base);
    if (n_subjects < 1) throw ValidationError("n_subjects must be >= 1");

    // Baseline draws first so the policy can standardize against the cohort.
    std::vector<double> x0(static_cast<std::size_t>(n_subjects));
    for (int i = 0; i < n_subjects; ++i) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 0));
        const double diam = 13.0 + 2.0 * rng.uniform();
        x0[static_cast<std::size_t>(i)] = volume_from_diameter(diam);
    }
    CohortStats stats;
    stats.mean = std::accumulate(x0.begin(), x0.end(), 0.0) / n_subjects;
    double ss = 0.0;
    for (double v : x0) ss += (v - stats.mean) * (v - stats.mean);
    stats.sd = n_subjects > 1 ? std::sqrt(ss / (n_subjects - 1)) : 0.0;

    std::vector<PKPDSubject> cohort(static_cast<std::size_t>(n_subjects));
    for (int i = 0; i < n_subjects; ++i) {
        PKPDSubject& s = cohort[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i), 1));
        s.params = base;
        s.params.rho = lognormal_around(base.rho, base.bsv, rng);
        s.params.K = lognormal_around(base.K, base.bsv, rng);
        s.params.beta_c = lognormal_around(base.beta_c, base.bsv, rng);
        s.params.alpha_r = lognormal_around(base.alpha_r, base.bsv, rng);
        s.params.beta_r = lognormal_around(base.beta_r, base.bsv, rng);
        s.params.sigma_tumor = lognormal_around(base.sigma_tumor, base.bsv, rng);
        s.x0 = x0[static_cast<std::size_t>(i)];
        s.arm = arms[static_cast<std::size_t>(i)];

        const int T = base.n_steps;
        s.chemo.resize(static_cast<std::size_t>(T));
        s.radio.resize(static_cast<std::size_t>(T));
        s.factual_latent.assign(static_cast<std::size_t>(T) + 1, s.x0);
        s.counterfactual_path.assign(static_cast<std::size_t>(T) + 1, s.x0);
        const ArmDose cf_dose = fixed_dose(flipped(s.arm), s.params);
        for (int t = 0; t < T; ++t) {
            ArmDose dose;
            if (s.arm == Regime::Policy)
                dose = [&] {
                    const auto [c, d] = treatment_policy(
                        s.factual_latent[static_cast<std::size_t>(t)], stats, s.params.gamma,
                        s.params.max_chemo, rng);
                    return ArmDose{c, d};
                }();
            else
                dose = fixed_dose(s.arm, s.params);
            s.chemo[static_cast<std::size_t>(t)] = dose.chemo;
            s.radio[static_cast<std::size_t>(t)] = dose.radio;
            const double z = rng.normal();  // one increment drives both arms
            s.factual_latent[static_cast<std::size_t>(t) + 1] =
                step_volume(s.factual_latent[static_cast<std::size_t>(t)], dose, s.params, z, diag);
            s.counterfactual_path[static_cast<std::size_t>(t) + 1] = step_volume(
                s.counterfactual_path[static_cast<std::size_t>(t)], cf_dose, s.params, z, diag);
        }
        s.factual_path = s.factual_latent;
        for (double& v : s.factual_path) v += base.sigma_obs * rng.normal();
    }
    return cohort;
}

Ensemble log_volume_ensemble(const std::vector<PKPDSubject>& cohort,
                             const std::vector<int>& subjects, double dt) {
    Ensemble e;
    e.dt = dt;
    e.kind = EnsembleKind::Observed;
    e.data.reserve(subjects.size());
    for (int idx : subjects) {
        const auto& path = cohort[static_cast<std::size_t>(idx)].factual_path;
        Mat m(static_cast<Eigen::Index>(path.size()), 1);
        for (std::size_t t = 0; t < path.size(); ++t)
            m(static_cast<Eigen::Index>(t), 0) = std::log(std::max(path[t], kVolumeFloor));
        e.data.push_back(std::move(m));
    }
    return e;
}

/// Column of ones next to the state turns the affine log-volume drift
/// a0 + a1 y into a linear fit the closed-form estimator can do.
Ensemble augment_with_ones(const Ensemble& e) {
    Ensemble aug;
    aug.dt = e.dt;
    aug.kind = e.kind;
    aug.data.reserve(e.data.size());
    for (const Mat& m : e.data) {
        Mat z(m.rows(), 2);
        z.col(0).setOnes();
        z.col(1) = m.col(0);
        aug.data.push_back(std::move(z));
    }
    return aug;
}

struct AffineFit {
    double a0 = 0.0;
    double a1 = 0.0;
    double h = 0.0;
};

AffineFit affine_log_fit(const Ensemble& ordered) {
    const FitResult fit = mle_fit(augment_with_ones(ordered));
    return {fit.A_hat(1, 0), fit.A_hat(1, 1), std::max(fit.H_hat(1, 1), 0.0)};
}

/// Identity source list with slots [w0, w0 + |wperm|) remapped by window
/// offsets wperm.
std::vector<int> splice_window(int n_slices, int w0, const std::vector<int>& wperm) {
    std::vector<int> full(static_cast<std::size_t>(n_slices));
    std::iota(full.begin(), full.end(), 0);
    for (std::size_t k = 0; k < wperm.size(); ++k)
        full[static_cast<std::size_t>(w0) + k] = w0 + wperm[k];
    return full;
}

void check_window(const Ensemble& e, int w0, int window) {
    validate(e);
    if (e.dim() != 1) throw ValidationError("window recovery expects 1-D log-volume slices");
    if (window < 2 || window > 6) throw ValidationError("window must be in [2, 6]");
    if (w0 < 0 || w0 + window > e.n_steps()) throw ValidationError("window exceeds the time grid");
}

/// Squared transition residuals under (a0, a1), restricted to the
/// transitions a window arrangement can change.
double window_sse(const Ensemble& e, int w0, int window, const std::vector<int>& wperm,
                  const AffineFit& fit) {
    const int lo = std::max(0, w0 - 1);
    const int hi = std::min(e.n_steps() - 2, w0 + window - 1);
    const auto value = [&](const Mat& m, int t) {
        const int src = t >= w0 && t < w0 + window ? w0 + wperm[static_cast<std::size_t>(t - w0)] : t;
        return m(src, 0);
    };
    double sse = 0.0;
    for (const Mat& m : e.data)
        for (int t = lo; t <= hi; ++t) {
            const double y = value(m, t);
            const double r = value(m, t + 1) - y - (fit.a0 + fit.a1 * y) * e.dt;
            sse += r * r;
        }
    return sse;
}

/// Per-subject MST or DPT ordering of the withheld window, spliced into
/// the identity elsewhere.
PermutationRecord baseline_window_ordering(const Ensemble& corrupted, int w0, int window,
                                           const BaselineConfig& base_cfg, PkpdPipeline which) {
    BaselineConfig bc = base_cfg;
    bc.method = which == PkpdPipeline::Mst ? BaselineMethod::Mst : BaselineMethod::Dpt;
    bc.dpt_n_eigs = std::min(bc.dpt_n_eigs, window - 1);
    PermutationRecord rec;
    rec.mode = PermMode::PerTrajectory;
    rec.perms.reserve(corrupted.data.size());
    for (const Mat& m : corrupted.data) {
        const Mat win = m.middleRows(w0, window);
        const std::vector<int> order = bc.method == BaselineMethod::Mst
                                           ? mst_order(win, bc.root_rule)
                                           : dpt_order(win, bc);
        rec.perms.push_back(splice_window(corrupted.n_steps(), w0, order));
    }
    return rec;
}

}  // namespace

void validate(const PKPDParams& p) {
    std::string bad;
    const auto need = [&](bool ok, const char* name) {
        if (!ok) {
            if (!bad.empty()) bad += ", ";
            bad += name;
        }
    };
    need(p.rho > 0.0, "rho");
    need(p.K > 0.0, "K");
    need(p.beta_c > 0.0, "beta_c");
    need(p.alpha_r > 0.0, "alpha_r");
    need(p.beta_r > 0.0, "beta_r");
    need(p.sigma_tumor > 0.0, "sigma_tumor");
    need(p.sigma_obs > 0.0, "sigma_obs");
    need(p.gamma >= 0.0, "gamma");
    need(p.bsv >= 0.0 && p.bsv < 1.0, "bsv");
    need(p.t_horizon > 0.0, "t_horizon");
    need(p.n_steps >= 1, "n_steps");
    need(p.max_chemo > 0.0, "max_chemo");
    if (!bad.empty()) throw ValidationError("invalid PKPDParams fields: " + bad);
}

Regime flipped(Regime r) {
    if (r == Regime::NeverTreat) return Regime::AlwaysTreat;
    return Regime::NeverTreat;  // always-treat and policy courses both flip to untreated
}

double pkpd_drift(double x, double chemo, int radio, const PKPDParams& p) {
    if (x <= 0.0) throw NonPositiveVolumeError("pkpd_drift requires positive volume");
    const double radio_term = p.alpha_r * radio + p.beta_r * radio * radio;
    return (p.rho * std::log(p.K / x) - p.beta_c * chemo - radio_term) * x;
}

double volume_from_diameter(double diam_mm) {
    if (diam_mm <= 0.0) throw NonPositiveVolumeError("diameter must be positive");
    const double r = diam_mm / 2.0;
    return 4.0 / 3.0 * M_PI * r * r * r;
}

std::pair<double, int> treatment_policy(double x, const CohortStats& stats, double gamma,
                                        double max_chemo, Rng& rng) {
    const double z = stats.sd > 0.0 ? (x - stats.mean) / stats.sd : 0.0;
    const double p = 1.0 / (1.0 + std::exp(-gamma * z));
    const int d = rng.bernoulli(p) ? 1 : 0;
    return {max_chemo * p, d};
}

std::vector<PKPDSubject> simulate_cohort(int n_subjects, const PKPDParams& base, Regime regime,
                                         RngSeed seed, CohortDiagnostics* diag) {
    return simulate_cohort_impl(n_subjects, base,
                                std::vector<Regime>(static_cast<std::size_t>(n_subjects), regime),
                                seed, diag);
}

std::vector<PKPDSubject> simulate_two_arm_cohort(int n_subjects, const PKPDParams& base,
                                                 RngSeed seed, CohortDiagnostics* diag) {
    if (n_subjects < 2) throw ValidationError("two-arm cohort needs at least 2 subjects");
    std::vector<Regime> arms(static_cast<std::size_t>(n_subjects), Regime::NeverTreat);
    for (int i = 0; i < n_subjects / 2; ++i) arms[static_cast<std::size_t>(i)] = Regime::AlwaysTreat;
    return simulate_cohort_impl(n_subjects, base, arms, seed, diag);
}

double true_ite(const PKPDSubject& s, int t_star, int n_paths, RngSeed seed) {
    if (t_star < 1 || t_star > s.params.n_steps) throw ValidationError("t_star out of range");
    if (n_paths < 2 || n_paths % 2 != 0) throw ValidationError("n_paths must be even and >= 2");
    const ArmDose treat = fixed_dose(Regime::AlwaysTreat, s.params);
    const ArmDose none = fixed_dose(Regime::NeverTreat, s.params);
    Rng rng(seed);
    double sum_treat = 0.0, sum_none = 0.0;
    std::vector<double> z(static_cast<std::size_t>(t_star));
    for (int pair = 0; pair < n_paths / 2; ++pair) {
        for (double& v : z) v = rng.normal();
        for (double sign : {1.0, -1.0}) {
            double xt = s.x0, xn = s.x0;
            for (int t = 0; t < t_star; ++t) {
                const double inc = sign * z[static_cast<std::size_t>(t)];
                xt = step_volume(xt, treat, s.params, inc, nullptr);
                xn = step_volume(xn, none, s.params, inc, nullptr);
            }
            sum_treat += xt;
            sum_none += xn;
        }
    }
    return (sum_treat - sum_none) / n_paths;
}

EffectReport effect_report(const std::vector<PKPDSubject>& cohort, const PkpdPipelineConfig& cfg,
                           RngSeed seed) {
    if (cohort.empty()) throw ValidationError("empty cohort");
    const PKPDParams& base = cohort.front().params;
    const int T = base.n_steps;
    const int t_star = cfg.t_star < 0 ? T : cfg.t_star;
    if (t_star < 1 || t_star > T) throw ValidationError("t_star out of range");
    if (cfg.mc_paths < 2 || cfg.mc_paths % 2 != 0)
        throw ValidationError("mc_paths must be even and >= 2");

    std::vector<int> treated, untreated;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (cohort[i].arm == Regime::AlwaysTreat)
            treated.push_back(static_cast<int>(i));
        else if (cohort[i].arm == Regime::NeverTreat)
            untreated.push_back(static_cast<int>(i));
        else
            throw ValidationError("effect_report requires alternating-free two-arm cohorts");
    }
    if (treated.empty() || untreated.empty())
        throw ValidationError("effect_report needs both arms present");

    // Withhold the window per arm, recover, and fit the affine log-volume
    // drift on the result. Baselines for the Monte Carlo start from the
    // recovered slice 0, so a pipeline that misplaces it pays for that too.
    AffineFit fits[2];
    std::vector<double> y0(cohort.size());
    const std::vector<int>* groups[2] = {&treated, &untreated};
    for (int g = 0; g < 2; ++g) {
        Ensemble arm = log_volume_ensemble(cohort, *groups[g], base.dt());
        if (cfg.pipeline != PkpdPipeline::TrueOrder) {
            check_window(arm, cfg.window_start, cfg.window);
            Rng rng(derive_seed(seed, 101, static_cast<std::uint64_t>(g)));
            std::vector<int> shuffle(static_cast<std::size_t>(cfg.window));
            std::iota(shuffle.begin(), shuffle.end(), 0);
            for (int k = cfg.window - 1; k > 0; --k)
                std::swap(shuffle[static_cast<std::size_t>(k)],
                          shuffle[static_cast<std::size_t>(rng.below(k + 1))]);
            PermutationRecord corrupt;
            corrupt.mode = PermMode::Shared;
            corrupt.perms = {splice_window(arm.n_steps(), cfg.window_start, shuffle)};
            const Ensemble corrupted = apply_permutation(arm, corrupt);
            const PermutationRecord rec =
                cfg.pipeline == PkpdPipeline::Retrace
                    ? recover_window_ordering(corrupted, cfg.window_start, cfg.window,
                                              cfg.refit_iters)
                    : baseline_window_ordering(corrupted, cfg.window_start, cfg.window,
                                               cfg.baseline, cfg.pipeline);
            arm = apply_permutation(corrupted, rec);
        }
        fits[g] = affine_log_fit(arm);
        for (std::size_t j = 0; j < groups[g]->size(); ++j)
            y0[static_cast<std::size_t>((*groups[g])[j])] = arm.data[j](0, 0);
    }

    // Monte Carlo both arms from every subject's recorded baseline.
    EffectReport report;
    report.ite.resize(cohort.size());
    double teb_sum = 0.0, sq_sum = 0.0;
    const double dt = base.dt();
    std::vector<double> z(static_cast<std::size_t>(t_star));
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const PKPDSubject& s = cohort[i];
        Rng rng(derive_seed(seed, 202, static_cast<std::uint64_t>(i)));
        double mean_x[2] = {0.0, 0.0};
        for (int pair = 0; pair < cfg.mc_paths / 2; ++pair) {
            for (double& v : z) v = rng.normal();
            for (double sign : {1.0, -1.0}) {
                double y[2] = {y0[i], y0[i]};
                for (int t = 0; t < t_star; ++t) {
                    const double inc = sign * z[static_cast<std::size_t>(t)];
                    for (int g = 0; g < 2; ++g)
                        y[g] += (fits[g].a0 + fits[g].a1 * y[g]) * dt +
                                std::sqrt(fits[g].h * dt) * inc;
                }
                mean_x[0] += std::exp(y[0]);
                mean_x[1] += std::exp(y[1]);
            }
        }
        mean_x[0] /= cfg.mc_paths;
        mean_x[1] /= cfg.mc_paths;

        report.ite[i] = mean_x[0] - mean_x[1];
        const double truth =
            true_ite(s, t_star, cfg.mc_paths, derive_seed(seed, 303, static_cast<std::uint64_t>(i)));
        teb_sum += report.ite[i] - truth;
        const double cf_hat = s.arm == Regime::AlwaysTreat ? mean_x[1] : mean_x[0];
        const double cf_true = s.counterfactual_path[static_cast<std::size_t>(t_star)];
        sq_sum += (cf_hat - cf_true) * (cf_hat - cf_true);
    }
    report.ate = std::accumulate(report.ite.begin(), report.ite.end(), 0.0) /
                 static_cast<double>(report.ite.size());
    report.teb = teb_sum / static_cast<double>(cohort.size());
    report.cf_rmse = std::sqrt(sq_sum / static_cast<double>(cohort.size()));
    return report;
}

PermutationRecord recover_window_ordering(const Ensemble& log_volumes, int window_start,
                                          int window, int refit_iters) {
    check_window(log_volumes, window_start, window);
    if (refit_iters < 1) throw ValidationError("refit_iters must be >= 1");
    std::vector<int> current(static_cast<std::size_t>(window));
    std::iota(current.begin(), current.end(), 0);
    PermutationRecord rec;
    rec.mode = PermMode::Shared;
    rec.perms = {splice_window(log_volumes.n_steps(), window_start, current)};
    for (int round = 0; round < refit_iters; ++round) {
        const AffineFit fit = affine_log_fit(apply_permutation(log_volumes, rec));
        std::vector<int> cand(static_cast<std::size_t>(window));
        std::iota(cand.begin(), cand.end(), 0);
        std::vector<int> best = cand;
        double best_sse = std::numeric_limits<double>::infinity();
        do {
            const double sse = window_sse(log_volumes, window_start, window, cand, fit);
            if (sse < best_sse) {
                best_sse = sse;
                best = cand;
            }
        } while (std::next_permutation(cand.begin(), cand.end()));
        if (best == current) break;
        current = best;
        rec.perms[0] = splice_window(log_volumes.n_steps(), window_start, current);
    }
    return rec;
}

std::vector<int> best_window_permutation(const Ensemble& log_volumes, int window_start,
                                         int window) {
    check_window(log_volumes, window_start, window);
    std::vector<int> cand(static_cast<std::size_t>(window));
    std::iota(cand.begin(), cand.end(), 0);
    std::vector<int> best = cand;
    double best_ll = -std::numeric_limits<double>::infinity();
    PermutationRecord rec;
    rec.mode = PermMode::Shared;
    do {
        rec.perms = {splice_window(log_volumes.n_steps(), window_start, cand)};
        const FitResult fit = mle_fit(augment_with_ones(apply_permutation(log_volumes, rec)));
        if (fit.log_likelihood > best_ll) {
            best_ll = fit.log_likelihood;
            best = cand;
        }
    } while (std::next_permutation(cand.begin(), cand.end()));
    return best;
}

}  // namespace retrace
