// ReTrace command line: simulate linear SDE ensembles, corrupt their time
// order, recover it, fit parameters, and run the packaged benchmarks.
#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "retrace/baselines.hpp"
#include "retrace/config.hpp"
#include "retrace/dataset_io.hpp"
#include "retrace/errors.hpp"
#include "retrace/experiment.hpp"
#include "retrace/metrics.hpp"
#include "retrace/retrace.hpp"
#include "retrace/sde.hpp"

namespace {

using nlohmann::json;
using namespace retrace;

json mat_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

void emit(const json& j, bool as_json) {
    if (as_json) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    for (const auto& [key, value] : j.items()) {
        if (value.is_array() && !value.empty() && value.front().is_array()) {
            std::cout << key << ":\n";
            for (const auto& row : value) {
                std::cout << " ";
                for (const auto& v : row) std::cout << " " << v.get<double>();
                std::cout << "\n";
            }
        } else if (value.is_array()) {
            std::cout << key << ":";
            for (const auto& v : value) std::cout << " " << v.dump();
            std::cout << "\n";
        } else {
            std::cout << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump())
                      << "\n";
        }
    }
}

EstimatorKind estimator_from_token(const std::string& tok) {
    if (tok == "mle") return EstimatorKind::Mle;
    if (tok == "ols") return EstimatorKind::Ols;
    if (tok == "em") return EstimatorKind::Em;
    throw ParseError("unknown estimator '" + tok + "' (mle|ols|em)");
}

/// Grades a hypothesis against the restoring record a container carries.
void add_grades(json& j, const std::optional<PermutationRecord>& restorer,
                const PermutationRecord& hypothesis) {
    if (!restorer) return;
    j["accuracy"] = ordering_accuracy(*restorer, hypothesis);
    j["kendall_tau"] = kendall_tau(*restorer, hypothesis);
}

struct Cli {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool as_json = false;

    ExperimentConfig config() const {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (seed) cfg.seeds = {*seed};
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        validate(cfg);
        return cfg;
    }

    std::uint64_t seed_or(const ExperimentConfig& cfg) const {
        return seed ? *seed : cfg.seeds.front();
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ReTrace: temporal order recovery and SDE fitting for trajectory ensembles"};
    app.require_subcommand(1);

    Cli cli;
    app.add_option("--config", cli.config_path, "key = value experiment config file");
    app.add_option("--seed", cli.seed, "override the config seed list with one seed");
    app.add_option("--out", cli.out_dir, "override the config output directory");
    app.add_option("--threads", cli.threads, "worker threads for grid experiments")
        ->check(CLI::PositiveNumber);
    app.add_flag("--json", cli.as_json, "emit one JSON object instead of text");

    std::string in_file;
    std::string out_file;
    std::string mode_tok = "shared";
    std::string estimator_tok = "mle";
    std::string method_tok = "mst";
    double sigma = 0.0;
    bool reversible = false;

    auto* sim = app.add_subcommand("simulate", "draw an ensemble and save it as a container");
    sim->fallthrough();
    sim->add_option("--out-file", out_file, "container path")->required();
    sim->add_option("--sigma", sigma, "observation noise level added to the states");
    sim->add_flag("--reversible", reversible, "draw a reversible (gradient) system instead");
    sim->callback([&] {
        const ExperimentConfig cfg = cli.config();
        const RngSeed base{cli.seed_or(cfg)};
        const auto params = reversible
                                ? make_reversible_params(cfg.dims, base, cfg.gen, cfg.dt)
                                : make_irreversible_params(cfg.dims, base, cfg.gen, cfg.dt);
        InitSpec init = InitSpec::stationary();
        if (cfg.init_scale > 0.0)
            init = InitSpec::gaussian(Vec::Zero(cfg.dims),
                                      cfg.init_scale * Mat::Identity(cfg.dims, cfg.dims));
        Ensemble e = simulate(params, cfg.n_traj, cfg.n_steps, init, derive_seed(base, 11));
        // --sigma 0 adds nothing but marks the container as measurements,
        // which estimators of the noisy model require.
        if (sim->count("--sigma") > 0)
            e = add_observation_noise(e, ObservationNoise::isotropic(sigma, cfg.dims),
                                      derive_seed(base, 12));
        save_ensemble(out_file, e, std::nullopt, base.value);
        json j{{"command", "simulate"},  {"out_file", out_file},
               {"n_traj", e.n_traj()},   {"n_steps", e.n_steps()},
               {"dim", e.dim()},         {"dt", e.dt},
               {"seed", base.value},     {"sigma_eps", sigma},
               {"irreversibility", irreversibility_score(params.A, params.H)}};
        emit(j, cli.as_json);
    });

    auto* cor = app.add_subcommand("corrupt", "shuffle a container's time slices");
    cor->fallthrough();
    cor->add_option("--in", in_file, "ordered container")->required();
    cor->add_option("--out-file", out_file, "corrupted container path")->required();
    cor->add_option("--mode", mode_tok, "shared|per_trajectory")
        ->check(CLI::IsMember({"shared", "per_trajectory"}));
    cor->callback([&] {
        const LoadedEnsemble loaded = load_ensemble(in_file);
        const RngSeed base{cli.seed ? *cli.seed : loaded.seed};
        const PermMode mode =
            mode_tok == "shared" ? PermMode::Shared : PermMode::PerTrajectory;
        const auto [shuffled, truth] = corrupt_order(loaded.ensemble, mode, derive_seed(base, 13));
        save_ensemble(out_file, shuffled, invert(truth), base.value);
        json j{{"command", "corrupt"},
               {"out_file", out_file},
               {"mode", mode_tok},
               {"seed", base.value},
               {"inversions", count_inversions(truth.perms.front())}};
        emit(j, cli.as_json);
    });

    auto* rec = app.add_subcommand("retrace", "recover a corrupted container's time order");
    rec->fallthrough();
    rec->add_option("--in", in_file, "corrupted container")->required();
    rec->add_option("--out-file", out_file, "save the recovered ensemble here");
    rec->add_option("--estimator", estimator_tok, "mle|ols|em")
        ->check(CLI::IsMember({"mle", "ols", "em"}));
    rec->add_option("--sigma", sigma, "known observation noise level (debiases covariances)");
    rec->callback([&] {
        const ExperimentConfig cfg = cli.config();
        const LoadedEnsemble loaded = load_ensemble(in_file);
        std::optional<Mat> R;
        if (sigma > 0.0)
            R = Mat(sigma * sigma *
                    Mat::Identity(loaded.ensemble.dim(), loaded.ensemble.dim()));
        const RetraceResult res =
            retrace::retrace(loaded.ensemble, R, cfg.retrace, estimator_from_token(estimator_tok));
        json j{{"command", "retrace"},
               {"estimator", estimator_tok},
               {"converged", res.converged},
               {"outer_iters", res.outer_iters_used},
               {"log_likelihood", res.fit.log_likelihood},
               {"A_hat", mat_json(res.fit.A_hat)},
               {"H_hat", mat_json(res.fit.H_hat)}};
        add_grades(j, loaded.perm, res.ordering);
        if (!out_file.empty()) {
            std::optional<PermutationRecord> residual;
            if (loaded.perm) residual = compose(invert(res.ordering), *loaded.perm);
            save_ensemble(out_file, apply_permutation(loaded.ensemble, res.ordering), residual,
                          loaded.seed);
            j["out_file"] = out_file;
        }
        emit(j, cli.as_json);
    });

    auto* base_cmd = app.add_subcommand("baseline", "pseudotime reassembly of a corrupted container");
    base_cmd->fallthrough();
    base_cmd->add_option("--in", in_file, "corrupted container")->required();
    base_cmd->add_option("--out-file", out_file, "save the reassembled ensemble here");
    base_cmd->add_option("--method", method_tok, "mst|dpt")->check(CLI::IsMember({"mst", "dpt"}));
    base_cmd->callback([&] {
        const ExperimentConfig cfg = cli.config();
        const LoadedEnsemble loaded = load_ensemble(in_file);
        BaselineConfig bc = cfg.baseline;
        bc.method = method_tok == "mst" ? BaselineMethod::Mst : BaselineMethod::Dpt;
        const auto [ordering, fit] = baseline_pipeline(loaded.ensemble, bc);
        json j{{"command", "baseline"},
               {"method", method_tok},
               {"log_likelihood", fit.log_likelihood},
               {"A_hat", mat_json(fit.A_hat)},
               {"H_hat", mat_json(fit.H_hat)}};
        add_grades(j, loaded.perm, ordering);
        if (!out_file.empty()) {
            std::optional<PermutationRecord> residual;
            if (loaded.perm) residual = compose(invert(ordering), *loaded.perm);
            save_ensemble(out_file, apply_permutation(loaded.ensemble, ordering), residual,
                          loaded.seed);
            j["out_file"] = out_file;
        }
        emit(j, cli.as_json);
    });

    auto* est = app.add_subcommand("estimate", "fit drift and diffusion on an ordered container");
    est->fallthrough();
    est->add_option("--in", in_file, "ordered container")->required();
    est->add_option("--estimator", estimator_tok, "mle|ols|em")
        ->check(CLI::IsMember({"mle", "ols", "em"}));
    est->add_option("--sigma", sigma, "observation noise level for the em estimator");
    est->callback([&] {
        const ExperimentConfig cfg = cli.config();
        const LoadedEnsemble loaded = load_ensemble(in_file);
        const EstimatorKind kind = estimator_from_token(estimator_tok);
        FitResult fit;
        if (kind == EstimatorKind::Mle) fit = mle_fit(loaded.ensemble);
        else if (kind == EstimatorKind::Ols) fit = ols_fit(loaded.ensemble);
        else {
            const Mat R = sigma * sigma *
                          Mat::Identity(loaded.ensemble.dim(), loaded.ensemble.dim());
            fit = em_fit(loaded.ensemble, R, cfg.retrace.em_iters);
        }
        json j{{"command", "estimate"},
               {"estimator", estimator_tok},
               {"log_likelihood", fit.log_likelihood},
               {"n_increments", fit.n_increments},
               {"A_hat", mat_json(fit.A_hat)},
               {"H_hat", mat_json(fit.H_hat)}};
        emit(j, cli.as_json);
    });

    auto* met = app.add_subcommand("metrics", "disorder metrics of a container");
    met->fallthrough();
    met->add_option("--in", in_file, "container")->required();
    met->callback([&] {
        const LoadedEnsemble loaded = load_ensemble(in_file);
        json j{{"command", "metrics"},
               {"n_traj", loaded.ensemble.n_traj()},
               {"n_steps", loaded.ensemble.n_steps()},
               {"dim", loaded.ensemble.dim()},
               {"dt", loaded.ensemble.dt},
               {"seed", loaded.seed}};
        if (loaded.perm) {
            const auto identity = identity_record(loaded.ensemble.n_steps(), loaded.perm->mode,
                                                  loaded.ensemble.n_traj());
            j["accuracy_vs_original"] = ordering_accuracy(*loaded.perm, identity);
            j["kendall_tau_vs_original"] = kendall_tau(*loaded.perm, identity);
            long inversions = 0;
            for (const auto& p : loaded.perm->perms) inversions += count_inversions(p);
            j["restorer_inversions"] = inversions;
        } else {
            j["note"] = "container carries no ordering record";
        }
        emit(j, cli.as_json);
    });

    auto* conf = app.add_subcommand("config", "print the canonical form of the active config");
    conf->fallthrough();
    conf->callback([&] {
        if (cli.as_json) {
            json j{{"command", "config"}, {"config", serialize_config(cli.config())}};
            std::cout << j.dump(2) << "\n";
            return;
        }
        std::cout << serialize_config(cli.config());
    });

    auto* bench = app.add_subcommand("bench", "run the experiment grid named in the config");
    bench->fallthrough();
    bench->callback([&] {
        const ExperimentConfig cfg = cli.config();
        const ExperimentArtifacts art = run_experiment(cfg, cli.threads);
        json j{{"command", "bench"},
               {"experiment", to_token(cfg.experiment)},
               {"rows", art.rows.size() + art.pkpd_rows.size()},
               {"failures", art.failures.size()},
               {"files", art.files}};
        emit(j, cli.as_json);
    });

    auto* pk = app.add_subcommand("pkpd", "run the counterfactual treatment-effect study");
    pk->fallthrough();
    pk->callback([&] {
        ExperimentConfig cfg = cli.config();
        cfg.experiment = ExperimentKind::Pkpd;
        const ExperimentArtifacts art = run_experiment(cfg, cli.threads);
        json j{{"command", "pkpd"}, {"failures", art.failures.size()}, {"files", art.files}};
        json rows = json::array();
        for (const auto& r : art.pkpd_rows)
            rows.push_back(json{{"pipeline", to_token(r.pipeline)},
                                {"seed", r.seed},
                                {"ate", r.ate},
                                {"teb", r.teb},
                                {"cf_rmse", r.cf_rmse}});
        j["rows"] = std::move(rows);
        emit(j, cli.as_json);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
