#include "retrace/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

#include "retrace/errors.hpp"

namespace retrace {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> items;
    std::string::size_type pos = 0;
    while (pos <= value.size()) {
        const auto comma = value.find(',', pos);
        const std::string item =
            trim(comma == std::string::npos ? value.substr(pos) : value.substr(pos, comma - pos));
        if (!item.empty()) items.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return items;
}

int parse_int(const std::string& v) {
    std::size_t used = 0;
    int out = 0;
    try {
        out = std::stoi(v, &used);
    } catch (const std::exception&) {
        throw ParseError("not an integer: '" + v + "'");
    }
    if (used != v.size()) throw ParseError("not an integer: '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& v) {
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        throw ParseError("not an unsigned integer: '" + v + "'");
    }
    if (used != v.size() || v.front() == '-')
        throw ParseError("not an unsigned integer: '" + v + "'");
    return out;
}

double parse_double(const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ParseError("not a number: '" + v + "'");
    }
    if (used != v.size()) throw ParseError("not a number: '" + v + "'");
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ParseError("not a boolean (true|false): '" + v + "'");
}

std::string fmt_int(long long v) { return std::to_string(v); }

/// Shortest decimal that round-trips, so canonical serialization is both
/// exact and readable.
std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

template <typename T, typename Fmt>
std::string fmt_list(const std::vector<T>& items, Fmt&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i != 0) out += ",";
        out += fmt(items[i]);
    }
    return out;
}

PairRule pair_rule_from_token(const std::string& tok) {
    if (tok == "exchange") return PairRule::Exchange;
    if (tok == "two_term") return PairRule::TwoTerm;
    throw ParseError("unknown pair rule '" + tok + "' (exchange|two_term)");
}

SwapDirection swap_direction_from_token(const std::string& tok) {
    if (tok == "paper") return SwapDirection::Literal;
    if (tok == "reversed") return SwapDirection::Reversed;
    throw ParseError("unknown swap direction '" + tok + "' (paper|reversed)");
}

SortGranularity granularity_from_token(const std::string& tok) {
    if (tok == "ensemble_slices") return SortGranularity::EnsembleSlices;
    if (tok == "per_trajectory") return SortGranularity::PerTrajectory;
    throw ParseError("unknown sort granularity '" + tok + "' (ensemble_slices|per_trajectory)");
}

BaselineMethod baseline_from_token(const std::string& tok) {
    if (tok == "mst") return BaselineMethod::Mst;
    if (tok == "dpt") return BaselineMethod::Dpt;
    throw ParseError("unknown baseline method '" + tok + "' (mst|dpt)");
}

RootRule root_rule_from_token(const std::string& tok) {
    if (tok == "max_eccentricity") return RootRule::MaxEccentricity;
    if (tok == "index_zero") return RootRule::IndexZero;
    throw ParseError("unknown root rule '" + tok + "' (max_eccentricity|index_zero)");
}

struct KeyBinding {
    const char* key;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

/// One table drives both directions, so serialize_config cannot drift from
/// the parser. Order here is the canonical serialization order.
const std::vector<KeyBinding>& key_table() {
    auto int_key = [](const char* key, auto member) {
        return KeyBinding{key,
                          [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_int(v); },
                          [member](const ExperimentConfig& c) { return fmt_int(c.*member); }};
    };
    auto dbl_key = [](const char* key, auto member) {
        return KeyBinding{
            key, [member](ExperimentConfig& c, const std::string& v) { c.*member = parse_double(v); },
            [member](const ExperimentConfig& c) { return fmt_double(c.*member); }};
    };
    auto sub_int = [](const char* key, auto sub, auto member) {
        return KeyBinding{
            key,
            [sub, member](ExperimentConfig& c, const std::string& v) { c.*sub.*member = parse_int(v); },
            [sub, member](const ExperimentConfig& c) { return fmt_int(c.*sub.*member); }};
    };
    auto sub_dbl = [](const char* key, auto sub, auto member) {
        return KeyBinding{key,
                          [sub, member](ExperimentConfig& c, const std::string& v) {
                              c.*sub.*member = parse_double(v);
                          },
                          [sub, member](const ExperimentConfig& c) { return fmt_double(c.*sub.*member); }};
    };
    auto sub_bool = [](const char* key, auto sub, auto member) {
        return KeyBinding{key,
                          [sub, member](ExperimentConfig& c, const std::string& v) {
                              c.*sub.*member = parse_bool(v);
                          },
                          [sub, member](const ExperimentConfig& c) { return fmt_bool(c.*sub.*member); }};
    };

    static const std::vector<KeyBinding> table = {
        {"experiment",
         [](ExperimentConfig& c, const std::string& v) { c.experiment = experiment_from_token(v); },
         [](const ExperimentConfig& c) { return to_token(c.experiment); }},
        {"output_dir", [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; },
         [](const ExperimentConfig& c) { return c.output_dir; }},
        int_key("dims", &ExperimentConfig::dims),
        int_key("n_traj", &ExperimentConfig::n_traj),
        int_key("n_steps", &ExperimentConfig::n_steps),
        dbl_key("dt", &ExperimentConfig::dt),
        dbl_key("init_scale", &ExperimentConfig::init_scale),
        {"noise_sigmas",
         [](ExperimentConfig& c, const std::string& v) {
             c.noise_sigmas.clear();
             for (const auto& item : split_list(v)) c.noise_sigmas.push_back(parse_double(item));
         },
         [](const ExperimentConfig& c) { return fmt_list(c.noise_sigmas, fmt_double); }},
        {"seeds",
         [](ExperimentConfig& c, const std::string& v) {
             c.seeds.clear();
             for (const auto& item : split_list(v)) c.seeds.push_back(parse_u64(item));
         },
         [](const ExperimentConfig& c) {
             return fmt_list(c.seeds, [](std::uint64_t s) { return fmt_int(static_cast<long long>(s)); });
         }},
        {"methods",
         [](ExperimentConfig& c, const std::string& v) {
             c.methods.clear();
             for (const auto& item : split_list(v)) c.methods.push_back(method_from_token(item));
         },
         [](const ExperimentConfig& c) {
             return fmt_list(c.methods, [](MethodKind m) { return to_token(m); });
         }},
        sub_dbl("gen.lambda_min", &ExperimentConfig::gen, &GenSpec::lambda_min),
        sub_dbl("gen.lambda_max", &ExperimentConfig::gen, &GenSpec::lambda_max),
        sub_dbl("gen.rotation_strength", &ExperimentConfig::gen, &GenSpec::rotation_strength),
        sub_dbl("gen.g_sv_min", &ExperimentConfig::gen, &GenSpec::g_sv_min),
        sub_dbl("gen.g_sv_max", &ExperimentConfig::gen, &GenSpec::g_sv_max),
        sub_dbl("gen.min_irreversibility", &ExperimentConfig::gen, &GenSpec::min_irreversibility),
        {"retrace.pair_rule",
         [](ExperimentConfig& c, const std::string& v) { c.retrace.pair_rule = pair_rule_from_token(v); },
         [](const ExperimentConfig& c) { return to_token(c.retrace.pair_rule); }},
        {"retrace.swap_direction",
         [](ExperimentConfig& c, const std::string& v) {
             c.retrace.swap_direction = swap_direction_from_token(v);
         },
         [](const ExperimentConfig& c) { return to_token(c.retrace.swap_direction); }},
        {"retrace.sort_granularity",
         [](ExperimentConfig& c, const std::string& v) {
             c.retrace.sort_granularity = granularity_from_token(v);
         },
         [](const ExperimentConfig& c) { return to_token(c.retrace.sort_granularity); }},
        sub_bool("retrace.drift_abs", &ExperimentConfig::retrace, &RetraceConfig::drift_abs),
        sub_bool("retrace.slice_matched_score", &ExperimentConfig::retrace,
                 &RetraceConfig::slice_matched_score),
        sub_bool("retrace.refit_slices_each_iter", &ExperimentConfig::retrace,
                 &RetraceConfig::refit_slices_each_iter),
        sub_int("retrace.max_outer_iters", &ExperimentConfig::retrace,
                &RetraceConfig::max_outer_iters),
        sub_int("retrace.em_iters", &ExperimentConfig::retrace, &RetraceConfig::em_iters),
        sub_dbl("retrace.dt", &ExperimentConfig::retrace, &RetraceConfig::dt),
        {"baseline.method",
         [](ExperimentConfig& c, const std::string& v) { c.baseline.method = baseline_from_token(v); },
         [](const ExperimentConfig& c) { return to_token(c.baseline.method); }},
        sub_dbl("baseline.dpt_bandwidth", &ExperimentConfig::baseline, &BaselineConfig::dpt_bandwidth),
        sub_int("baseline.dpt_n_eigs", &ExperimentConfig::baseline, &BaselineConfig::dpt_n_eigs),
        {"baseline.root_rule",
         [](ExperimentConfig& c, const std::string& v) { c.baseline.root_rule = root_rule_from_token(v); },
         [](const ExperimentConfig& c) { return to_token(c.baseline.root_rule); }},
        sub_dbl("pkpd.rho", &ExperimentConfig::pkpd, &PKPDParams::rho),
        sub_dbl("pkpd.K", &ExperimentConfig::pkpd, &PKPDParams::K),
        sub_dbl("pkpd.beta_c", &ExperimentConfig::pkpd, &PKPDParams::beta_c),
        sub_dbl("pkpd.alpha_r", &ExperimentConfig::pkpd, &PKPDParams::alpha_r),
        sub_dbl("pkpd.beta_r", &ExperimentConfig::pkpd, &PKPDParams::beta_r),
        sub_dbl("pkpd.sigma_tumor", &ExperimentConfig::pkpd, &PKPDParams::sigma_tumor),
        sub_dbl("pkpd.sigma_obs", &ExperimentConfig::pkpd, &PKPDParams::sigma_obs),
        sub_dbl("pkpd.gamma", &ExperimentConfig::pkpd, &PKPDParams::gamma),
        sub_dbl("pkpd.bsv", &ExperimentConfig::pkpd, &PKPDParams::bsv),
        sub_dbl("pkpd.t_horizon", &ExperimentConfig::pkpd, &PKPDParams::t_horizon),
        sub_int("pkpd.n_steps", &ExperimentConfig::pkpd, &PKPDParams::n_steps),
        sub_dbl("pkpd.max_chemo", &ExperimentConfig::pkpd, &PKPDParams::max_chemo),
        sub_int("pkpd.t_star", &ExperimentConfig::pkpd_study, &PkpdPipelineConfig::t_star),
        sub_int("pkpd.mc_paths", &ExperimentConfig::pkpd_study, &PkpdPipelineConfig::mc_paths),
        sub_int("pkpd.window", &ExperimentConfig::pkpd_study, &PkpdPipelineConfig::window),
        sub_int("pkpd.window_start", &ExperimentConfig::pkpd_study,
                &PkpdPipelineConfig::window_start),
        sub_int("pkpd.refit_iters", &ExperimentConfig::pkpd_study, &PkpdPipelineConfig::refit_iters),
    };
    return table;
}

const KeyBinding* find_key(const std::string& key) {
    for (const auto& binding : key_table())
        if (key == binding.key) return &binding;
    return nullptr;
}

}  // namespace

std::string to_token(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::SingleRun: return "single_run";
        case ExperimentKind::Table1: return "table1";
        case ExperimentKind::NoiseSweep: return "noise_sweep";
        case ExperimentKind::Pkpd: return "pkpd";
    }
    throw ValidationError("unknown experiment kind");
}

std::string to_token(MethodKind m) {
    switch (m) {
        case MethodKind::RetraceMle: return "retrace_mle";
        case MethodKind::RetraceOls: return "retrace_ols";
        case MethodKind::RetraceEm: return "retrace_em";
        case MethodKind::MstMle: return "mst_mle";
        case MethodKind::DptMle: return "dpt_mle";
    }
    throw ValidationError("unknown method kind");
}

std::string to_token(PairRule r) { return r == PairRule::Exchange ? "exchange" : "two_term"; }

std::string to_token(SwapDirection s) {
    return s == SwapDirection::Literal ? "paper" : "reversed";
}

std::string to_token(SortGranularity g) {
    return g == SortGranularity::EnsembleSlices ? "ensemble_slices" : "per_trajectory";
}

std::string to_token(BaselineMethod m) { return m == BaselineMethod::Mst ? "mst" : "dpt"; }

std::string to_token(RootRule r) {
    return r == RootRule::MaxEccentricity ? "max_eccentricity" : "index_zero";
}

ExperimentKind experiment_from_token(const std::string& tok) {
    if (tok == "single_run") return ExperimentKind::SingleRun;
    if (tok == "table1") return ExperimentKind::Table1;
    if (tok == "noise_sweep") return ExperimentKind::NoiseSweep;
    if (tok == "pkpd") return ExperimentKind::Pkpd;
    throw ParseError("unknown experiment '" + tok + "' (single_run|table1|noise_sweep|pkpd)");
}

MethodKind method_from_token(const std::string& tok) {
    if (tok == "retrace_mle") return MethodKind::RetraceMle;
    if (tok == "retrace_ols") return MethodKind::RetraceOls;
    if (tok == "retrace_em") return MethodKind::RetraceEm;
    if (tok == "mst_mle") return MethodKind::MstMle;
    if (tok == "dpt_mle") return MethodKind::DptMle;
    throw ParseError("unknown method '" + tok +
                     "' (retrace_mle|retrace_ols|retrace_em|mst_mle|dpt_mle)");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                             stripped + "'");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        const KeyBinding* binding = find_key(key);
        if (binding == nullptr)
            throw ParseError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        try {
            binding->set(cfg, value);
        } catch (const ParseError& err) {
            throw ParseError("line " + std::to_string(line_no) + ": key '" + key + "': " +
                             err.what());
        }
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& binding : key_table()) {
        out += binding.key;
        out += " = ";
        out += binding.get(cfg);
        out += "\n";
    }
    return out;
}

void validate(const ExperimentConfig& cfg) {
    std::string bad;
    const auto need = [&](bool ok, const std::string& what) {
        if (!ok) {
            if (!bad.empty()) bad += "; ";
            bad += what;
        }
    };
    need(cfg.dims >= 1, "dims must be >= 1");
    need(cfg.n_traj >= 2, "n_traj must be >= 2");
    need(cfg.n_steps >= 2, "n_steps must be >= 2");
    need(cfg.dt > 0.0, "dt must be positive");
    need(!cfg.seeds.empty(), "seeds must be non-empty");
    need(!cfg.methods.empty(), "methods must be non-empty");
    need(cfg.experiment != ExperimentKind::NoiseSweep || !cfg.noise_sigmas.empty(),
         "noise_sweep needs at least one noise_sigmas entry");
    need(!cfg.output_dir.empty(), "output_dir must be non-empty");
    for (double s : cfg.noise_sigmas) need(s >= 0.0, "noise_sigmas entries must be >= 0");
    need(cfg.gen.lambda_min > 0.0 && cfg.gen.lambda_max >= cfg.gen.lambda_min,
         "gen eigenvalue band must satisfy 0 < lambda_min <= lambda_max");
    need(cfg.gen.g_sv_min > 0.0 && cfg.gen.g_sv_max >= cfg.gen.g_sv_min,
         "gen singular value band must satisfy 0 < g_sv_min <= g_sv_max");
    need(cfg.gen.min_irreversibility >= 0.0, "gen.min_irreversibility must be >= 0");
    need(cfg.retrace.max_outer_iters >= 1, "retrace.max_outer_iters must be >= 1");
    need(cfg.retrace.em_iters >= 1, "retrace.em_iters must be >= 1");
    need(cfg.retrace.dt >= 0.0, "retrace.dt must be >= 0");
    need(cfg.baseline.dpt_n_eigs >= 1, "baseline.dpt_n_eigs must be >= 1");
    need(cfg.pkpd_study.mc_paths >= 2 && cfg.pkpd_study.mc_paths % 2 == 0,
         "pkpd.mc_paths must be even and >= 2");
    need(cfg.pkpd_study.window >= 2 && cfg.pkpd_study.window <= 6,
         "pkpd.window must be in [2, 6]");
    need(cfg.pkpd_study.window_start >= 0, "pkpd.window_start must be >= 0");
    need(cfg.pkpd_study.refit_iters >= 1, "pkpd.refit_iters must be >= 1");
    try {
        validate(cfg.pkpd);
    } catch (const ValidationError& err) {
        need(false, err.what());
    }
    if (!bad.empty()) throw ValidationError("invalid config: " + bad);
}

}  // namespace retrace
