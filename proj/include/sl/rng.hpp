#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sl {

// SplitMix64 finalizer; decorrelates nearby seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Per-trajectory seed derived from (master seed, trajectory index) only, so
// every policy sharing a master seed sees the same noise stream per trajectory
// (common random numbers) and results do not depend on worker count.
inline std::uint64_t trajectory_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ splitmix64(0x5851f42d4c957f2dULL + index));
}

class GaussianStream {
  public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    double next() { return normal_(engine_); }

    // ΔW ~ N(0, dt·I)
    Eigen::VectorXd brownian_increment(int dim, double dt) {
        Eigen::VectorXd dw(dim);
        fill_brownian(dw, dt);
        return dw;
    }

    void fill_brownian(Eigen::VectorXd& dw, double dt) {
        const double s = std::sqrt(dt);
        for (int i = 0; i < dw.size(); ++i) dw[i] = s * normal_(engine_);
    }

    Eigen::VectorXd standard_normal(int dim) {
        Eigen::VectorXd z(dim);
        for (int i = 0; i < dim; ++i) z[i] = normal_(engine_);
        return z;
    }

    double uniform() { return uniform_(engine_); }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sl
