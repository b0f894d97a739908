#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "retrace/baselines.hpp"
#include "retrace/common.hpp"

namespace retrace {

/// Stochastic tumor-growth benchmark: Gompertz-type drift with chemotherapy
/// and radiotherapy terms, subject-level parameter variability, confounded
/// treatment assignment, and counterfactual evaluation of ordering pipelines.

struct PKPDParams {
    double rho = 0.1;            // growth rate, 1/time
    double K = 14137.166941;     // carrying capacity, mm^3 (30 mm sphere)
    double beta_c = 0.3;         // chemo kill rate, 1/(dose * time)
    double alpha_r = 0.08;       // radio linear coefficient
    double beta_r = 0.04;        // radio quadratic coefficient
    double sigma_tumor = 20.0;   // process noise, mm^3 / sqrt(time)
    double sigma_obs = 0.01;     // recording noise, mm^3
    double gamma = 2.0;          // confounding strength of the policy
    double bsv = 0.05;           // relative between-subject variability
    double t_horizon = 15.0;     // total simulated time
    int n_steps = 60;            // Euler transitions (dt = t_horizon/n_steps)
    double max_chemo = 1.0;      // normalized dose ceiling

    double dt() const { return t_horizon / n_steps; }
};

/// Throws ValidationError listing every violated field constraint.
void validate(const PKPDParams& p);

enum class Regime { Policy, AlwaysTreat, NeverTreat };

/// Factual arm flipped: always <-> never; a policy arm's counterfactual is
/// the untreated course.
Regime flipped(Regime r);

struct PKPDSubject {
    PKPDParams params;  // subject realization (lognormal around the base)
    double x0 = 0.0;    // initial volume, mm^3
    Regime arm = Regime::NeverTreat;
    std::vector<double> chemo;  // factual doses, length n_steps
    std::vector<int> radio;     // factual indicators, length n_steps
    /// Recorded factual volumes (latent + recording noise), length n_steps+1
    /// including x0. This is what estimation pipelines see.
    std::vector<double> factual_path;
    /// Latent factual volumes, same length; kept for coupling diagnostics.
    std::vector<double> factual_latent;
    /// Latent counterfactual volumes under the flipped arm with the same
    /// Wiener increments; ground truth for counterfactual error.
    std::vector<double> counterfactual_path;
};

struct CohortDiagnostics {
    std::int64_t floor_hits = 0;  // latent steps clamped at the positivity floor
    std::int64_t steps = 0;
};

struct CohortStats {
    double mean = 0.0;
    double sd = 0.0;
};

struct EffectReport {
    std::vector<double> ite;  // per subject, volume difference at t_star
    double ate = 0.0;         // mean(ite)
    double teb = 0.0;         // mean(ite - true ite)
    double cf_rmse = 0.0;     // vs the realized counterfactual at t_star
};

enum class PkpdPipeline { TrueOrder, Retrace, Mst, Dpt };

/// (rho log(K/x) - beta_c C - (alpha_r d + beta_r d^2)) x
double pkpd_drift(double x, double chemo, int radio, const PKPDParams& p);

/// Sphere volume (4/3) pi (diam/2)^3 in mm^3.
double volume_from_diameter(double diam_mm);

/// Confounded assignment: p = sigmoid(gamma * (x - mean)/sd); the radio
/// indicator is Bernoulli(p) and the chemo dose is max_chemo * p. gamma = 0
/// reduces to randomization. sd <= 0 degenerates to p = 1/2.
std::pair<double, int> treatment_policy(double x, const CohortStats& stats, double gamma,
                                        double max_chemo, Rng& rng);

/// Draws n_subjects subjects (lognormal parameters, Uniform[13,15] mm initial
/// diameter), assigns the factual arm, and simulates factual and
/// counterfactual latent paths with shared increments plus the recorded
/// factual path. regime = Policy draws per-step assignments from
/// treatment_policy against the cohort's baseline volume statistics.
/// Deterministic in seed; subjects use derived per-subject streams.
std::vector<PKPDSubject> simulate_cohort(int n_subjects, const PKPDParams& base, Regime regime,
                                         RngSeed seed, CohortDiagnostics* diag = nullptr);

/// Cohort split for effect studies: first half always treated, second half
/// never treated.
std::vector<PKPDSubject> simulate_two_arm_cohort(int n_subjects, const PKPDParams& base,
                                                 RngSeed seed, CohortDiagnostics* diag = nullptr);

/// Per-subject ground-truth effect: Monte Carlo expectation of the volume at
/// t_star under each arm using the subject's exact parameters and the
/// discrete transition model (n_paths paths, antithetic pairing, increments
/// shared across arms).
double true_ite(const PKPDSubject& s, int t_star, int n_paths, RngSeed seed);

struct PkpdPipelineConfig {
    PkpdPipeline pipeline = PkpdPipeline::TrueOrder;
    int t_star = -1;       // < 0 means the final step
    int mc_paths = 1024;   // per arm, antithetic (must be even)
    int window = 6;        // withheld slice count, in [2, 6]
    int window_start = 0;  // first withheld slice
    int refit_iters = 3;   // fit/search alternations in the Retrace recovery
    BaselineConfig baseline;
};

/// End-to-end counterfactual study on a two-arm cohort. Unless TrueOrder,
/// the recorded slices in [window_start, window_start + window) lose their
/// order (one shuffle per arm, shared across that arm's subjects) and the
/// pipeline reassembles them: Retrace by exhaustive transition-likelihood
/// search under the fitted dynamics, Mst/Dpt per subject on the withheld
/// slices. An affine log-volume drift is then fit per arm on the recovered
/// ordering, both arms are Monte-Carlo simulated from every subject's
/// recovered baseline, and ITE/ATE/TEB plus counterfactual RMSE are scored
/// against ground truth. Keeping the window short makes the exhaustive
/// search exact; a full-length shuffle would put it out of reach.
EffectReport effect_report(const std::vector<PKPDSubject>& cohort, const PkpdPipelineConfig& cfg,
                           RngSeed seed);

/// Retrace recovery for a withheld window of 1-D log-volume slices: picks
/// the arrangement of slices [window_start, window_start + window) that
/// minimizes the squared transition residuals under the current affine
/// fit, refitting on the winner until the arrangement is stable (at most
/// refit_iters rounds). Returns a full-length shared ordering. window <= 6.
PermutationRecord recover_window_ordering(const Ensemble& log_volumes, int window_start,
                                          int window, int refit_iters = 3);

/// Brute-force oracle for the same task: refits the affine log-volume
/// dynamics for every candidate window permutation and returns the
/// likelihood-best one (as source indices relative to window_start).
std::vector<int> best_window_permutation(const Ensemble& log_volumes, int window_start,
                                         int window);

}  // namespace retrace
