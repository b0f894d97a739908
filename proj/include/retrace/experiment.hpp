#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "retrace/config.hpp"
#include "retrace/pkpd.hpp"

namespace retrace {

/// One (method, seed, sigma) cell of a recovery benchmark.
struct ResultRow {
    MethodKind method = MethodKind::RetraceMle;
    std::uint64_t seed = 0;
    double sigma_eps = 0.0;
    double accuracy = 0.0;
    double mae_A = 0.0;
    double mae_H = 0.0;
    double kendall_tau = 0.0;
    double iter_runtime_s = 0.0;
    bool converged = false;
    int outer_iters = 0;
};

/// One (pipeline, seed) cell of the counterfactual study.
struct PkpdRow {
    PkpdPipeline pipeline = PkpdPipeline::TrueOrder;
    std::uint64_t seed = 0;
    double ate = 0.0;
    double teb = 0.0;
    double cf_rmse = 0.0;
    double runtime_s = 0.0;
};

struct ExperimentArtifacts {
    std::vector<ResultRow> rows;
    std::vector<PkpdRow> pkpd_rows;
    std::vector<std::string> failures;  // one diagnostic line per failed cell
    std::vector<std::string> files;     // artifact paths written
};

std::string to_token(PkpdPipeline p);

/// Simulate, corrupt, recover, refit, grade: the whole pipeline for one
/// grid cell. Pure function of its arguments, so the grid can run on any
/// number of workers without changing a digit of the output.
ResultRow run_row(const ExperimentConfig& cfg, std::uint64_t seed, double sigma_eps,
                  MethodKind method);

/// Runs the configured experiment grid on `threads` workers and writes
/// results.csv, summary.csv (mean and sd per cell group), errors.log when
/// cells fail (the run continues without them), the sweep chart for
/// noise_sweep, and pkpd.csv / pkpd_summary.csv for the counterfactual
/// study. Returns everything it wrote. Timing columns aside, the artifacts
/// are byte-identical across reruns and worker counts.
ExperimentArtifacts run_experiment(const ExperimentConfig& cfg, int threads = 1);

}  // namespace retrace
