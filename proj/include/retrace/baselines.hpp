#pragma once

#include <utility>
#include <vector>

#include "retrace/ensemble.hpp"
#include "retrace/estimators.hpp"

namespace retrace {

enum class BaselineMethod { Mst, Dpt };
enum class RootRule { MaxEccentricity, IndexZero };

struct BaselineConfig {
    BaselineMethod method = BaselineMethod::Mst;
    /// Gaussian kernel bandwidth; <= 0 selects the median pairwise
    /// distance heuristic.
    double dpt_bandwidth = 0.0;
    int dpt_n_eigs = 10;
    RootRule root_rule = RootRule::MaxEccentricity;
};

/// Orders T points by depth-first traversal of the Euclidean minimum
/// spanning tree. The root is an endpoint of the tree's weighted longest
/// path (or point 0 under IndexZero); neighbor visits and all ties break
/// by ascending index. `slices` holds one point per row.
std::vector<int> mst_order(const Mat& slices, RootRule root_rule = RootRule::MaxEccentricity);

/// Orders T points by increasing diffusion distance from a root: Gaussian
/// kernel, row-normalized transition matrix, distances accumulated over
/// the top nontrivial eigenpairs with weights lambda/(1-lambda). Identical
/// points collapse to the identity ordering.
std::vector<int> dpt_order(const Mat& slices, const BaselineConfig& cfg);

/// Applies the configured ordering independently to every trajectory of a
/// corrupted ensemble, then fits the linear SDE on the result.
std::pair<PermutationRecord, FitResult> baseline_pipeline(const Ensemble& e,
                                                          const BaselineConfig& cfg);

}  // namespace retrace
