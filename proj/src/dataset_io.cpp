#include "retrace/dataset_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "retrace/errors.hpp"

namespace retrace {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container payload is little-endian; add byte swapping for this target");

constexpr const char* kFormatPrefix = "retrace-ensemble v";
constexpr const char* kFormatLine = "retrace-ensemble v1";

std::uint64_t fnv1a(const std::vector<double>& payload) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
    const std::size_t n = payload.size() * sizeof(double);
    std::uint64_t hash = 14695981039346656037ULL;
    for (std::size_t i = 0; i < n; ++i) {
        hash ^= bytes[i];
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string perm_token(const std::optional<PermutationRecord>& perm) {
    if (!perm) return "none";
    return perm->mode == PermMode::Shared ? "shared" : "per_trajectory";
}

int perm_count(const std::optional<PermutationRecord>& perm, int n_traj) {
    if (!perm) return 0;
    return perm->mode == PermMode::Shared ? 1 : n_traj;
}

void check_perm_record(const PermutationRecord& perm, int n_traj, int n_steps) {
    const int expected = perm.mode == PermMode::Shared ? 1 : n_traj;
    if (perm.n_perms() != expected)
        throw ValidationError("permutation record holds " + std::to_string(perm.n_perms()) +
                              " permutations, expected " + std::to_string(expected));
    for (const auto& p : perm.perms) {
        if (static_cast<int>(p.size()) != n_steps || !is_permutation(p))
            throw ValidationError("stored ordering is not a permutation of 0.." +
                                  std::to_string(n_steps - 1));
    }
}

}  // namespace

void save_ensemble(const std::string& path, const Ensemble& e,
                   const std::optional<PermutationRecord>& perm, std::uint64_t seed) {
    validate(e);
    if (perm) check_perm_record(*perm, e.n_traj(), e.n_steps());

    const int n_perm = perm_count(perm, e.n_traj());
    std::vector<double> payload;
    payload.reserve(static_cast<std::size_t>(e.n_traj()) * e.n_steps() * e.dim() +
                    static_cast<std::size_t>(n_perm) * e.n_steps());
    for (const auto& traj : e.data)
        for (int t = 0; t < e.n_steps(); ++t)
            for (int k = 0; k < e.dim(); ++k) payload.push_back(traj(t, k));
    for (int j = 0; j < n_perm; ++j)
        for (int idx : perm->perms[static_cast<std::size_t>(j)])
            payload.push_back(static_cast<double>(idx));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot open '" + path + "' for writing");
    char buf[64];
    out << kFormatLine << "\n";
    out << "n_traj = " << e.n_traj() << "\n";
    out << "n_steps = " << e.n_steps() << "\n";
    out << "dim = " << e.dim() << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", e.dt);
    out << "dt = " << buf << "\n";
    out << "kind = " << (e.kind == EnsembleKind::Latent ? "latent" : "observed") << "\n";
    out << "seed = " << seed << "\n";
    out << "perm = " << perm_token(perm) << "\n";
    out << "payload_bytes = " << payload.size() * sizeof(double) << "\n";
    out << "checksum = " << hex64(fnv1a(payload)) << "\n";
    out << "---\n";
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!out) throw ValidationError("write failed for '" + path + "'");
}

LoadedEnsemble load_ensemble(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError("'" + path + "' is empty");
    line = trim(line);
    if (line.rfind(kFormatPrefix, 0) != 0)
        throw ParseError("'" + path + "' is not an ensemble container");
    if (line != kFormatLine)
        throw VersionMismatchError("unsupported container version '" + line + "', expected '" +
                                   kFormatLine + "'");

    int n_traj = -1;
    int n_steps = -1;
    int dim = -1;
    double dt = 0.0;
    std::string kind_tok;
    std::string perm_tok;
    std::uint64_t seed = 0;
    std::uint64_t payload_bytes = 0;
    std::string checksum_hex;
    bool saw_separator = false;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line == "---") {
            saw_separator = true;
            break;
        }
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("manifest line without '=': '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "n_traj") n_traj = std::stoi(value);
            else if (key == "n_steps") n_steps = std::stoi(value);
            else if (key == "dim") dim = std::stoi(value);
            else if (key == "dt") dt = std::stod(value);
            else if (key == "kind") kind_tok = value;
            else if (key == "seed") seed = std::stoull(value);
            else if (key == "perm") perm_tok = value;
            else if (key == "payload_bytes") payload_bytes = std::stoull(value);
            else if (key == "checksum") checksum_hex = value;
            else throw ParseError("unknown manifest key '" + key + "'");
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError("bad manifest value for '" + key + "': '" + value + "'");
        }
    }
    if (!saw_separator) throw ParseError("manifest/payload separator '---' missing");
    if (n_traj < 0 || n_steps < 0 || dim < 0 || kind_tok.empty() || perm_tok.empty() ||
        checksum_hex.empty())
        throw ParseError("manifest is missing required keys");
    if (kind_tok != "latent" && kind_tok != "observed")
        throw ParseError("unknown ensemble kind '" + kind_tok + "'");
    if (perm_tok != "none" && perm_tok != "shared" && perm_tok != "per_trajectory")
        throw ParseError("unknown perm mode '" + perm_tok + "'");

    const std::size_t n_perm = perm_tok == "none" ? 0
                               : perm_tok == "shared" ? 1
                                                      : static_cast<std::size_t>(n_traj);
    const std::uint64_t expected_bytes =
        (static_cast<std::uint64_t>(n_traj) * n_steps * dim + n_perm * n_steps) * sizeof(double);
    if (payload_bytes != expected_bytes)
        throw ValidationError("manifest payload_bytes = " + std::to_string(payload_bytes) +
                              " disagrees with declared shape (" + std::to_string(expected_bytes) +
                              " bytes)");

    std::vector<double> payload(payload_bytes / sizeof(double));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::uint64_t>(in.gcount()) != payload_bytes)
        throw ChecksumMismatchError("payload truncated: got " + std::to_string(in.gcount()) +
                                    " of " + std::to_string(payload_bytes) + " bytes");
    const std::string actual = hex64(fnv1a(payload));
    if (actual != checksum_hex)
        throw ChecksumMismatchError("payload checksum " + actual + " does not match manifest " +
                                    checksum_hex);

    LoadedEnsemble loaded;
    loaded.seed = seed;
    loaded.ensemble.dt = dt;
    loaded.ensemble.kind = kind_tok == "latent" ? EnsembleKind::Latent : EnsembleKind::Observed;
    loaded.ensemble.data.reserve(static_cast<std::size_t>(n_traj));
    std::size_t at = 0;
    for (int j = 0; j < n_traj; ++j) {
        Mat traj(n_steps, dim);
        for (int t = 0; t < n_steps; ++t)
            for (int k = 0; k < dim; ++k) traj(t, k) = payload[at++];
        loaded.ensemble.data.push_back(std::move(traj));
    }
    if (n_perm > 0) {
        PermutationRecord rec;
        rec.mode = perm_tok == "shared" ? PermMode::Shared : PermMode::PerTrajectory;
        rec.perms.resize(n_perm, std::vector<int>(static_cast<std::size_t>(n_steps)));
        for (auto& p : rec.perms)
            for (int t = 0; t < n_steps; ++t) p[static_cast<std::size_t>(t)] =
                static_cast<int>(payload[at++]);
        check_perm_record(rec, n_traj, n_steps);
        loaded.perm = std::move(rec);
    }
    validate(loaded.ensemble);
    return loaded;
}

}  // namespace retrace
