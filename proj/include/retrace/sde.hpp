#pragma once

#include "retrace/ensemble.hpp"

namespace retrace {

/// dX = A X dt + G dW with noise covariance rate H = G G^T.
struct LinearSDEParams {
    Mat A;
    Mat G;
    Mat H;
    double dt = 0.01;
};

LinearSDEParams make_params(const Mat& A, const Mat& G, double dt);

enum class DiffusionKind { Identity, RandomOrthogonalScaled };

/// Controls for the random-system generator.
struct GenSpec {
    double lambda_min = 0.2;   // eigenvalue real-part band of -A
    double lambda_max = 2.0;
    double rotation_strength = 1.0;  // scale of the antisymmetric part of A
    DiffusionKind g_kind = DiffusionKind::RandomOrthogonalScaled;
    double g_sv_min = 0.7;  // singular value band of G
    double g_sv_max = 1.3;
    bool require_irreversible = true;
    double min_irreversibility = 1e-6;
    int max_attempts = 100;
};

/// Initial law of X_0: either an explicit Gaussian or the stationary law
/// N(0, Sigma_inf) of the generated system.
struct InitSpec {
    enum class Kind { Stationary, Gaussian } kind = Kind::Stationary;
    Vec mean;
    Mat cov;

    static InitSpec stationary() { return InitSpec{}; }
    static InitSpec gaussian(Vec mean, Mat cov);
    static InitSpec standard_gaussian(int d);
};

struct ObservationNoise {
    double sigma_eps = 0.0;
    Mat R;  // sigma_eps^2 * I

    static ObservationNoise isotropic(double sigma_eps, int d);
};

/// Normalized asymmetry of the stationary flux: ||A S - S A^T||_F / ||A S||_F
/// with S = solve_lyapunov(A, H). Zero exactly when the stationary law
/// satisfies detailed balance (the process is statistically reversible),
/// strictly positive otherwise. Invariant under (A, H) -> (cA, cH).
double irreversibility_score(const Mat& A, const Mat& H);

/// Draws A = -Q L Q^T + K (L in the eigenvalue band, K antisymmetric) and a
/// random G until the Hurwitz and irreversibility requirements hold.
/// Throws GenerationFailureError after spec.max_attempts rejections.
LinearSDEParams make_irreversible_params(int d, RngSeed seed, const GenSpec& spec, double dt);

/// A symmetric negative definite with eigenvalues in the band, G = I: a
/// gradient system, reversible by construction.
LinearSDEParams make_reversible_params(int d, RngSeed seed, const GenSpec& spec, double dt);

/// Euler-Maruyama: X_{i+1} = X_i + A X_i dt + G dW, dW ~ N(0, dt I).
Ensemble simulate(const LinearSDEParams& params, int n_traj, int n_steps, const InitSpec& init,
                  RngSeed seed);

/// Y = X + eps, eps iid N(0, R); noise stream independent of the state
/// stream. sigma_eps = 0 returns the data unchanged (but kind=observed).
Ensemble add_observation_noise(const Ensemble& e, const ObservationNoise& noise, RngSeed seed);

/// Uniform random permutation of {0, ..., n-1} (Fisher-Yates).
std::vector<int> random_permutation(int n, Rng& rng);

/// Shuffles time slices uniformly, one permutation shared by all
/// trajectories or one drawn per trajectory. Returns the shuffled ensemble
/// and the ground-truth record used.
std::pair<Ensemble, PermutationRecord> corrupt_order(const Ensemble& e, PermMode mode,
                                                     RngSeed seed);

}  // namespace retrace
