#include "retrace/baselines.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "retrace/errors.hpp"
#include "retrace/slice_stats.hpp"

namespace retrace {

namespace {

Mat pairwise_distances(const Mat& slices) {
    const int T = static_cast<int>(slices.rows());
    Mat D(T, T);
    for (int i = 0; i < T; ++i) {
        D(i, i) = 0.0;
        for (int j = i + 1; j < T; ++j) {
            const double d = (slices.row(i) - slices.row(j)).norm();
            D(i, j) = d;
            D(j, i) = d;
        }
    }
    if (!D.allFinite()) throw ValidationError("pairwise distances are not finite");
    return D;
}

/// Prim's algorithm on the complete graph; ties break toward the smaller
/// candidate vertex through the scan order. Returns adjacency lists.
std::vector<std::vector<int>> euclidean_mst(const Mat& D) {
    const int T = static_cast<int>(D.rows());
    std::vector<bool> in_tree(static_cast<size_t>(T), false);
    std::vector<double> best(static_cast<size_t>(T), std::numeric_limits<double>::infinity());
    std::vector<int> parent(static_cast<size_t>(T), -1);
    std::vector<std::vector<int>> adj(static_cast<size_t>(T));
    best[0] = 0.0;
    for (int added = 0; added < T; ++added) {
        int u = -1;
        for (int v = 0; v < T; ++v)
            if (!in_tree[static_cast<size_t>(v)] &&
                (u == -1 || best[static_cast<size_t>(v)] < best[static_cast<size_t>(u)]))
                u = v;
        in_tree[static_cast<size_t>(u)] = true;
        if (parent[static_cast<size_t>(u)] >= 0) {
            adj[static_cast<size_t>(u)].push_back(parent[static_cast<size_t>(u)]);
            adj[static_cast<size_t>(parent[static_cast<size_t>(u)])].push_back(u);
        }
        for (int v = 0; v < T; ++v)
            if (!in_tree[static_cast<size_t>(v)] && D(u, v) < best[static_cast<size_t>(v)]) {
                best[static_cast<size_t>(v)] = D(u, v);
                parent[static_cast<size_t>(v)] = u;
            }
    }
    for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
    return adj;
}

/// Farthest vertex from `from` by weighted path distance in the tree;
/// ties resolve to the smaller index.
std::pair<int, double> tree_sweep(const std::vector<std::vector<int>>& adj, const Mat& D,
                                  int from) {
    const int T = static_cast<int>(adj.size());
    std::vector<double> dist(static_cast<size_t>(T), -1.0);
    std::vector<int> stack{from};
    dist[static_cast<size_t>(from)] = 0.0;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[static_cast<size_t>(u)])
            if (dist[static_cast<size_t>(v)] < 0.0) {
                dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + D(u, v);
                stack.push_back(v);
            }
    }
    int arg = 0;
    for (int v = 1; v < T; ++v)
        if (dist[static_cast<size_t>(v)] > dist[static_cast<size_t>(arg)]) arg = v;
    return {arg, dist[static_cast<size_t>(arg)]};
}

}  // namespace

std::vector<int> mst_order(const Mat& slices, RootRule root_rule) {
    const int T = static_cast<int>(slices.rows());
    if (T < 2) throw ValidationError("mst_order needs at least two points");
    const Mat D = pairwise_distances(slices);
    const std::vector<std::vector<int>> adj = euclidean_mst(D);

    int root = 0;
    if (root_rule == RootRule::MaxEccentricity) {
        // double sweep: an endpoint of the weighted diameter
        const int far = tree_sweep(adj, D, 0).first;
        const int other = tree_sweep(adj, D, far).first;
        root = std::min(far, other);
    }

    std::vector<int> order;
    order.reserve(static_cast<size_t>(T));
    std::vector<bool> seen(static_cast<size_t>(T), false);
    std::vector<int> stack{root};
    while (!stack.empty()) {  // preorder; push reversed so small indices pop first
        const int u = stack.back();
        stack.pop_back();
        if (seen[static_cast<size_t>(u)]) continue;
        seen[static_cast<size_t>(u)] = true;
        order.push_back(u);
        const auto& nbrs = adj[static_cast<size_t>(u)];
        for (auto it = nbrs.rbegin(); it != nbrs.rend(); ++it)
            if (!seen[static_cast<size_t>(*it)]) stack.push_back(*it);
    }
    return order;
}

std::vector<int> dpt_order(const Mat& slices, const BaselineConfig& cfg) {
    const int T = static_cast<int>(slices.rows());
    if (T < 3) throw ValidationError("dpt_order needs at least three points");
    if (cfg.dpt_n_eigs >= T) throw ValidationError("dpt_n_eigs must be below the point count");
    const Mat D = pairwise_distances(slices);

    double sigma = cfg.dpt_bandwidth;
    if (sigma <= 0.0) {
        std::vector<double> offdiag;
        offdiag.reserve(static_cast<size_t>(T * (T - 1) / 2));
        for (int i = 0; i < T; ++i)
            for (int j = i + 1; j < T; ++j) offdiag.push_back(D(i, j));
        std::nth_element(offdiag.begin(), offdiag.begin() + static_cast<long>(offdiag.size() / 2),
                         offdiag.end());
        sigma = offdiag[offdiag.size() / 2];
    }
    std::vector<int> identity(static_cast<size_t>(T));
    std::iota(identity.begin(), identity.end(), 0);
    if (sigma <= 0.0) return identity;  // all points coincide

    const Mat K = (-D.array().square() / (2.0 * sigma * sigma)).exp().matrix();
    const Vec deg = K.rowwise().sum();
    const Vec dinv_sqrt = deg.cwiseSqrt().cwiseInverse();
    // symmetric conjugate of the row-normalized transition matrix: shares
    // its eigenvalues; right eigenvectors recovered as D^{-1/2} u
    const Mat S = dinv_sqrt.asDiagonal() * K * dinv_sqrt.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(S);
    if (es.info() != Eigen::Success)
        throw EigDecompositionFailureError("diffusion kernel eigendecomposition failed");

    // eigenvalues ascend; skip the trivial top pair, keep the next n_eigs
    const int n_eigs = cfg.dpt_n_eigs;
    Mat coords(T, n_eigs);
    for (int i = 0; i < n_eigs; ++i) {
        const int idx = T - 2 - i;
        const double lambda = es.eigenvalues()[idx];
        const double w = lambda / std::max(1.0 - lambda, 1e-12);
        coords.col(i) = w * dinv_sqrt.asDiagonal() * es.eigenvectors().col(idx);
    }

    int root = 0;
    if (cfg.root_rule == RootRule::MaxEccentricity) {
        double best = -1.0;
        for (int i = 0; i < T; ++i) {
            double ecc = 0.0;
            for (int j = 0; j < T; ++j)
                ecc = std::max(ecc, (coords.row(i) - coords.row(j)).squaredNorm());
            if (ecc > best + 1e-15) {
                best = ecc;
                root = i;
            }
        }
    }

    std::vector<int> order = identity;
    std::vector<double> dist(static_cast<size_t>(T));
    for (int i = 0; i < T; ++i)
        dist[static_cast<size_t>(i)] = (coords.row(i) - coords.row(root)).squaredNorm();
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return dist[static_cast<size_t>(a)] < dist[static_cast<size_t>(b)];
    });
    return order;
}

std::pair<PermutationRecord, FitResult> baseline_pipeline(const Ensemble& e,
                                                          const BaselineConfig& cfg) {
    validate(e);
    PermutationRecord record;
    record.mode = PermMode::PerTrajectory;
    record.perms.reserve(static_cast<size_t>(e.n_traj()));
    for (const Mat& traj : e.data)
        record.perms.push_back(cfg.method == BaselineMethod::Mst
                                   ? mst_order(traj, cfg.root_rule)
                                   : dpt_order(traj, cfg));
    return {record, mle_fit(apply_permutation(e, record))};
}

}  // namespace retrace
