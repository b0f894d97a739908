#include "retrace/sde.hpp"

#include <Eigen/QR>
#include <cmath>
#include <utility>

#include "retrace/errors.hpp"
#include "retrace/linalg.hpp"

namespace retrace {

LinearSDEParams make_params(const Mat& A, const Mat& G, double dt) {
    if (dt <= 0.0) throw ValidationError("dt must be positive");
    if (A.rows() != A.cols() || G.rows() != A.rows())
        throw ValidationError("drift and diffusion shapes disagree");
    return LinearSDEParams{A, G, G * G.transpose(), dt};
}

InitSpec InitSpec::gaussian(Vec mean, Mat cov) {
    InitSpec s;
    s.kind = Kind::Gaussian;
    s.mean = std::move(mean);
    s.cov = std::move(cov);
    return s;
}

InitSpec InitSpec::standard_gaussian(int d) {
    return gaussian(Vec::Zero(d), Mat::Identity(d, d));
}

ObservationNoise ObservationNoise::isotropic(double sigma_eps, int d) {
    if (sigma_eps < 0.0) throw ValidationError("sigma_eps must be nonnegative");
    return ObservationNoise{sigma_eps, sigma_eps * sigma_eps * Mat::Identity(d, d)};
}

double irreversibility_score(const Mat& A, const Mat& H) {
    const Mat S = solve_lyapunov(A, H);
    const Mat flux = A * S;
    const double den = flux.norm();
    if (den == 0.0) return 0.0;
    return (flux - flux.transpose()).norm() / den;
}

namespace {

Mat random_orthogonal(int d, Rng& rng) {
    Mat B = rng.normal_mat(d, d);
    Eigen::HouseholderQR<Mat> qr(B);
    Mat Q = qr.householderQ() * Mat::Identity(d, d);
    Mat R = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    for (int i = 0; i < d; ++i)
        if (R(i, i) < 0.0) Q.col(i) = -Q.col(i);
    return Q;
}

/// Symmetric PD matrix with eigenvalues uniform in the band.
Mat random_spd(int d, double lo, double hi, Rng& rng) {
    const Mat Q = random_orthogonal(d, rng);
    Vec lambda(d);
    for (int i = 0; i < d; ++i) lambda[i] = rng.uniform(lo, hi);
    return Q * lambda.asDiagonal() * Q.transpose();
}

Mat random_diffusion(int d, const GenSpec& spec, Rng& rng) {
    if (spec.g_kind == DiffusionKind::Identity) return Mat::Identity(d, d);
    const Mat U = random_orthogonal(d, rng);
    const Mat V = random_orthogonal(d, rng);
    Vec sv(d);
    for (int i = 0; i < d; ++i) sv[i] = rng.uniform(spec.g_sv_min, spec.g_sv_max);
    return U * sv.asDiagonal() * V.transpose();
}

}  // namespace

LinearSDEParams make_irreversible_params(int d, RngSeed seed, const GenSpec& spec, double dt) {
    if (d < 1) throw ValidationError("dimension must be at least 1");
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        const Mat P = random_spd(d, spec.lambda_min, spec.lambda_max, rng);
        const Mat B = rng.normal_mat(d, d);
        // Symmetric part of A is exactly -P, so the real parts of the
        // spectrum stay inside [-lambda_max, -lambda_min] (Bendixson).
        const Mat A = -P + spec.rotation_strength * 0.5 * (B - B.transpose());
        const Mat G = random_diffusion(d, spec, rng);
        LinearSDEParams params = make_params(A, G, dt);
        if (!spec.require_irreversible) return params;
        if (irreversibility_score(params.A, params.H) > spec.min_irreversibility) return params;
    }
    throw GenerationFailureError("no irreversible system found within the attempt budget");
}

LinearSDEParams make_reversible_params(int d, RngSeed seed, const GenSpec& spec, double dt) {
    if (d < 1) throw ValidationError("dimension must be at least 1");
    Rng rng(derive_seed(seed, 0));
    const Mat P = random_spd(d, spec.lambda_min, spec.lambda_max, rng);
    return make_params(-P, Mat::Identity(d, d), dt);
}

Ensemble simulate(const LinearSDEParams& params, int n_traj, int n_steps, const InitSpec& init,
                  RngSeed seed) {
    const int d = static_cast<int>(params.A.rows());
    const int m = static_cast<int>(params.G.cols());
    if (n_traj < 1 || n_steps < 2)
        throw ValidationError("simulate needs n_traj >= 1 and n_steps >= 2");

    Vec mu0;
    Mat cov0;
    if (init.kind == InitSpec::Kind::Stationary) {
        mu0 = Vec::Zero(d);
        cov0 = solve_lyapunov(params.A, params.H);
    } else {
        mu0 = init.mean;
        cov0 = init.cov;
        if (mu0.size() != d || cov0.rows() != d || cov0.cols() != d)
            throw ValidationError("initial law dimension does not match the system");
    }
    const Mat L0 = psd_factor(cov0);
    const double sqrt_dt = std::sqrt(params.dt);

    Ensemble e;
    e.dt = params.dt;
    e.kind = EnsembleKind::Latent;
    e.data.resize(static_cast<size_t>(n_traj));
    for (int j = 0; j < n_traj; ++j) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        Mat traj(n_steps, d);
        Vec x = mu0 + L0 * rng.normal_vec(d);
        traj.row(0) = x.transpose();
        for (int i = 1; i < n_steps; ++i) {
            x += params.A * x * params.dt + params.G * (sqrt_dt * rng.normal_vec(m));
            traj.row(i) = x.transpose();
        }
        e.data[static_cast<size_t>(j)] = std::move(traj);
    }
    return e;
}

Ensemble add_observation_noise(const Ensemble& e, const ObservationNoise& noise, RngSeed seed) {
    validate(e);
    if (e.kind != EnsembleKind::Latent)
        throw ValidationError("observation noise applies to latent ensembles");
    Ensemble out = e;
    out.kind = EnsembleKind::Observed;
    if (noise.sigma_eps == 0.0) return out;
    const int T = e.n_steps();
    const int d = e.dim();
    for (int j = 0; j < e.n_traj(); ++j) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
        for (int t = 0; t < T; ++t)
            out.data[static_cast<size_t>(j)].row(t) +=
                noise.sigma_eps * rng.normal_vec(d).transpose();
    }
    return out;
}

std::vector<int> random_permutation(int n, Rng& rng) {
    std::vector<int> perm(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) perm[static_cast<size_t>(k)] = k;
    for (int k = n - 1; k > 0; --k) std::swap(perm[static_cast<size_t>(k)],
                                              perm[static_cast<size_t>(rng.below(k + 1))]);
    return perm;
}

std::pair<Ensemble, PermutationRecord> corrupt_order(const Ensemble& e, PermMode mode,
                                                     RngSeed seed) {
    validate(e);
    const int T = e.n_steps();
    PermutationRecord record;
    record.mode = mode;
    if (mode == PermMode::Shared) {
        Rng rng(derive_seed(seed, 0));
        record.perms.push_back(random_permutation(T, rng));
    } else {
        record.perms.reserve(static_cast<size_t>(e.n_traj()));
        for (int j = 0; j < e.n_traj(); ++j) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
            record.perms.push_back(random_permutation(T, rng));
        }
    }
    return {apply_permutation(e, record), record};
}

}  // namespace retrace
