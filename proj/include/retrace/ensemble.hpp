#pragma once

#include <vector>

#include "retrace/common.hpp"

namespace retrace {

/// latent: raw SDE states. observed: after measurement noise.
enum class EnsembleKind { Latent, Observed };

/// N independent trajectories observed on a shared time grid. Each
/// trajectory is a T x d matrix (row t = state at time index t).
struct Ensemble {
    std::vector<Mat> data;
    double dt = 0.0;
    EnsembleKind kind = EnsembleKind::Latent;

    int n_traj() const { return static_cast<int>(data.size()); }
    int n_steps() const { return data.empty() ? 0 : static_cast<int>(data[0].rows()); }
    int dim() const { return data.empty() ? 0 : static_cast<int>(data[0].cols()); }
};

/// Throws ValidationError unless all trajectories share one shape, entries
/// are finite, dt > 0 and T >= 2.
void validate(const Ensemble& e);

enum class PermMode { Shared, PerTrajectory };

/// Time orderings, ground-truth or hypothesized. perm_for(j)[k] is the
/// source time index whose slice sits at position k of trajectory j.
struct PermutationRecord {
    PermMode mode = PermMode::Shared;
    std::vector<std::vector<int>> perms;  // one entry, or one per trajectory

    const std::vector<int>& perm_for(int traj) const {
        return mode == PermMode::Shared ? perms.front() : perms[static_cast<size_t>(traj)];
    }
    int n_perms() const { return static_cast<int>(perms.size()); }
};

PermutationRecord identity_record(int n_steps, PermMode mode, int n_traj);

bool is_permutation(const std::vector<int>& perm);

/// inv[perm[k]] = k, per trajectory.
PermutationRecord invert(const PermutationRecord& r);

/// (a o b)[k] = a[b[k]]: apply b first, then a. Records must agree in
/// length; mixed modes broadcast the shared record.
PermutationRecord compose(const PermutationRecord& a, const PermutationRecord& b);

/// Reorders time slices: out[j].row(k) = e[j].row(r.perm_for(j)[k]).
/// State values are never modified, only positions.
Ensemble apply_permutation(const Ensemble& e, const PermutationRecord& r);

}  // namespace retrace
