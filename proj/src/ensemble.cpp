#include "retrace/ensemble.hpp"

#include <algorithm>

#include "retrace/errors.hpp"

namespace retrace {

void validate(const Ensemble& e) {
    if (e.data.empty()) throw ValidationError("ensemble has no trajectories");
    if (e.dt <= 0.0) throw ValidationError("ensemble dt must be positive");
    const Eigen::Index T = e.data[0].rows();
    const Eigen::Index d = e.data[0].cols();
    if (T < 2) throw ValidationError("ensemble needs at least two time steps");
    for (const Mat& traj : e.data) {
        if (traj.rows() != T || traj.cols() != d)
            throw ValidationError("trajectories disagree in shape");
        if (!traj.allFinite()) throw ValidationError("ensemble contains a non-finite entry");
    }
}

PermutationRecord identity_record(int n_steps, PermMode mode, int n_traj) {
    std::vector<int> id(static_cast<size_t>(n_steps));
    for (int k = 0; k < n_steps; ++k) id[static_cast<size_t>(k)] = k;
    PermutationRecord r;
    r.mode = mode;
    r.perms.assign(mode == PermMode::Shared ? 1 : static_cast<size_t>(n_traj), id);
    return r;
}

bool is_permutation(const std::vector<int>& perm) {
    std::vector<bool> seen(perm.size(), false);
    for (int v : perm) {
        if (v < 0 || v >= static_cast<int>(perm.size()) || seen[static_cast<size_t>(v)])
            return false;
        seen[static_cast<size_t>(v)] = true;
    }
    return true;
}

namespace {

std::vector<int> invert_one(const std::vector<int>& perm) {
    std::vector<int> inv(perm.size());
    for (int k = 0; k < static_cast<int>(perm.size()); ++k)
        inv[static_cast<size_t>(perm[static_cast<size_t>(k)])] = k;
    return inv;
}

std::vector<int> compose_one(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size())
        throw ValidationError("permutation lengths disagree in compose");
    std::vector<int> out(a.size());
    for (size_t k = 0; k < a.size(); ++k)
        out[k] = a[static_cast<size_t>(b[k])];
    return out;
}

}  // namespace

PermutationRecord invert(const PermutationRecord& r) {
    PermutationRecord out;
    out.mode = r.mode;
    out.perms.reserve(r.perms.size());
    for (const auto& p : r.perms) out.perms.push_back(invert_one(p));
    return out;
}

PermutationRecord compose(const PermutationRecord& a, const PermutationRecord& b) {
    PermutationRecord out;
    if (a.mode == PermMode::Shared && b.mode == PermMode::Shared) {
        out.mode = PermMode::Shared;
        out.perms.push_back(compose_one(a.perms.front(), b.perms.front()));
        return out;
    }
    out.mode = PermMode::PerTrajectory;
    const int n = std::max(a.n_perms(), b.n_perms());
    out.perms.reserve(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) out.perms.push_back(compose_one(a.perm_for(j), b.perm_for(j)));
    return out;
}

Ensemble apply_permutation(const Ensemble& e, const PermutationRecord& r) {
    validate(e);
    const int T = e.n_steps();
    if (r.mode == PermMode::PerTrajectory && r.n_perms() != e.n_traj())
        throw ValidationError("per-trajectory record size does not match ensemble");
    Ensemble out = e;
    for (int j = 0; j < e.n_traj(); ++j) {
        const std::vector<int>& perm = r.perm_for(j);
        if (static_cast<int>(perm.size()) != T || !is_permutation(perm))
            throw ValidationError("record entry is not a permutation of the time grid");
        for (int k = 0; k < T; ++k)
            out.data[static_cast<size_t>(j)].row(k) =
                e.data[static_cast<size_t>(j)].row(perm[static_cast<size_t>(k)]);
    }
    return out;
}

}  // namespace retrace
