#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace retrace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Seed for all stochastic components. Same seed + same config gives
/// bit-identical output on one platform.
struct RngSeed {
    std::uint64_t value = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed; every logical stream (trajectory,
/// noise source, subject) gets its own derived seed so results do not
/// depend on evaluation order.
inline RngSeed derive_seed(RngSeed base, std::uint64_t stream) {
    return RngSeed{splitmix64(base.value ^ splitmix64(stream + 0x51ed2701a1d4f9c7ULL))};
}

inline RngSeed derive_seed(RngSeed base, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(base, a), b);
}

class Rng {
  public:
    explicit Rng(RngSeed seed) : gen_(splitmix64(seed.value)) {}

    double normal() { return normal_(gen_); }
    double uniform() { return uniform_(gen_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }

    /// Uniform integer in [0, n).
    int below(int n) { return static_cast<int>(std::uniform_int_distribution<long>(0, n - 1)(gen_)); }

    Vec normal_vec(int d) {
        Vec z(d);
        for (int i = 0; i < d; ++i) z[i] = normal();
        return z;
    }

    Mat normal_mat(int rows, int cols) {
        Mat z(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) z(i, j) = normal();
        return z;
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace retrace
