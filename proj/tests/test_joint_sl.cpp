#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sl/joint_sl.hpp"
#include "sl/rng.hpp"

using namespace sl;

namespace {

DiscreteMeasure random_cloud(int n, int d, std::uint64_t seed, double spread = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Matrix pts(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) pts(i, j) = spread * normal(rng);
    return DiscreteMeasure::uniform(pts);
}

DiscreteMeasure bernoulli_points() {
    Matrix pts(2, 1);
    pts << 0.0, 1.0;
    return DiscreteMeasure::uniform(pts);
}

}  // namespace

TEST_CASE("joint_step: identical measures stay bitwise identical") {
    const auto m = random_cloud(20, 2, 1);
    JointSLState j = joint_init({m, m});
    GaussianStream rng(3);
    const auto policy = JointPolicy::joint_alpha(0.5, 1e-3);
    for (int k = 0; k < 50; ++k) {
        j = joint_step(j, policy, rng.brownian_increment(2, 0.05), 0.05);
        CHECK((j.states[0].log_weights - j.states[1].log_weights).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("joint_step: point masses are fixed points") {
    Vector x(2), y(2);
    x << 0.0, 1.0;
    y << 2.0, -1.0;
    JointSLState j = joint_init({DiscreteMeasure::point_mass(x), DiscreteMeasure::point_mass(y)});
    GaussianStream rng(4);
    const auto policy = JointPolicy::joint_alpha(0.5, 1e-3);
    for (int k = 0; k < 10; ++k) {
        j = joint_step(j, policy, rng.brownian_increment(2, 0.05), 0.05);
    }
    CHECK((j.states[0].moments.mean - x).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((j.states[1].moments.mean - y).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("joint_step: marginals evolve exactly as single-measure steps (k = 3)") {
    const auto m1 = random_cloud(15, 2, 10);
    const auto m2 = random_cloud(12, 2, 11);
    const auto m3 = random_cloud(18, 2, 12);
    const auto policy = JointPolicy::joint_alpha(0.3, 1e-3);
    const ControlPolicy single = ControlPolicy::eldan(0.3, 1e-3);

    JointSLState j = joint_init({m1, m2, m3});
    SLState s1 = sl_init(m1);
    GaussianStream rng(900);
    for (int k = 0; k < 40; ++k) {
        const Vector dw = rng.brownian_increment(2, 0.05);
        j = joint_step(j, policy, dw, 0.05);
        s1 = sl_step(s1, control_of(s1, single), dw, 0.05);
        CHECK((j.states[0].log_weights - s1.log_weights).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("joint_step: extrapolation requires a pair") {
    const auto m = random_cloud(10, 2, 2);
    JointSLState j = joint_init({m, m, m});
    CHECK_THROWS_AS(joint_step(j, JointPolicy::extrapolation(1e-3), Vector::Zero(2), 0.05),
                    InvalidInput);
}

TEST_CASE("sample_coupling: identical measures couple exactly") {
    const auto m = random_cloud(15, 2, 21);
    SimConfig cfg;
    cfg.horizon = 5.0;
    const auto samples = sample_coupling(m, m, JointPolicy::joint_alpha(0.5, 1e-3), cfg, 8, 50);
    for (const auto& s : samples) {
        CHECK((s.a - s.b).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((s.a_point - s.b_point).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("sample_coupling: point-mass pair returns the pair") {
    Vector x(1), y(1);
    x << -2.0;
    y << 3.0;
    SimConfig cfg;
    cfg.horizon = 1.0;
    const auto samples = sample_coupling(DiscreteMeasure::point_mass(x),
                                         DiscreteMeasure::point_mass(y),
                                         JointPolicy::joint_alpha(0.5, 1e-3), cfg, 5, 7);
    for (const auto& s : samples) {
        CHECK(s.a[0] == doctest::Approx(-2.0));
        CHECK(s.b[0] == doctest::Approx(3.0));
        CHECK(s.a_localized);
        CHECK(s.b_localized);
    }
}

TEST_CASE("sample_coupling: Bernoulli marginal frequencies") {
    const auto mu = bernoulli_points();
    const auto nu = random_cloud(6, 1, 33);
    SimConfig cfg;
    cfg.horizon = 20.0;
    const auto samples =
        sample_coupling(mu, nu, JointPolicy::joint_alpha(0.5, 1e-3), cfg, 4000, 1234);
    int ones = 0;
    for (const auto& s : samples) {
        if (s.a_point[0] == 1.0) ++ones;
    }
    const double freq = static_cast<double>(ones) / 4000.0;
    CHECK(freq > 0.47);
    CHECK(freq < 0.53);
}

TEST_CASE("sample_coupling: deterministic and worker-count independent") {
    const auto mu = random_cloud(12, 2, 61);
    const auto nu = random_cloud(12, 2, 62);
    SimConfig cfg;
    cfg.horizon = 3.0;
    const auto policy = JointPolicy::extrapolation(1e-3);
    const auto s1 = sample_coupling(mu, nu, policy, cfg, 16, 99, 1);
    const auto s2 = sample_coupling(mu, nu, policy, cfg, 16, 99, 4);
    REQUIRE(s1.size() == s2.size());
    for (size_t i = 0; i < s1.size(); ++i) {
        CHECK((s1[i].a - s2[i].a).cwiseAbs().maxCoeff() == 0.0);
        CHECK((s1[i].b - s2[i].b).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("transport_cost_estimate: arithmetic oracle") {
    Vector x(2), y(2);
    x << 1.0, 0.0;
    y << 0.0, 2.0;
    std::vector<CouplingSample> identical(5);
    for (auto& s : identical) {
        s.a = x;
        s.b = y;
        s.a_point = x;
        s.b_point = y;
    }
    const auto est = transport_cost_estimate(identical);
    CHECK(est.mean_sq == doctest::Approx(5.0));
    CHECK(est.std_err == doctest::Approx(0.0));
    CHECK(est.distance == doctest::Approx(std::sqrt(5.0)));

    // Hand-built three-sample list: squared distances 1, 4, 16.
    std::vector<CouplingSample> three(3);
    for (int i = 0; i < 3; ++i) {
        three[i].a = Vector::Zero(1);
        three[i].b = Vector::Zero(1);
    }
    three[0].b[0] = 1.0;
    three[1].b[0] = 2.0;
    three[2].b[0] = 4.0;
    const auto est3 = transport_cost_estimate(three);
    const double mean = (1.0 + 4.0 + 16.0) / 3.0;
    const double var = (std::pow(1.0 - mean, 2) + std::pow(4.0 - mean, 2) +
                        std::pow(16.0 - mean, 2)) / 2.0;
    const double se = std::sqrt(var / 3.0);
    CHECK(est3.mean_sq == doctest::Approx(mean));
    CHECK(est3.std_err == doctest::Approx(se));
    CHECK(est3.ci_lo == doctest::Approx(mean - 1.96 * se));
    CHECK(est3.ci_hi == doctest::Approx(mean + 1.96 * se));

    CHECK_THROWS_AS(transport_cost_estimate({identical[0]}), InvalidInput);
}

TEST_CASE("pathwise unitary equivariance") {
    const auto mu = random_cloud(12, 2, 71);
    const auto nu = random_cloud(10, 2, 72);
    const double theta = 0.7;
    Matrix u(2, 2);
    u << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);

    const auto umu = DiscreteMeasure::from_log_weights(mu.points() * u.transpose(),
                                                       mu.log_weights());
    const auto unu = DiscreteMeasure::from_log_weights(nu.points() * u.transpose(),
                                                       nu.log_weights());
    const auto policy = JointPolicy::joint_alpha(0.5, 1e-3);

    JointSLState base = joint_init({mu, nu});
    JointSLState rotated = joint_init({umu, unu});
    GaussianStream rng(505);
    for (int k = 0; k < 60; ++k) {
        const Vector dw = rng.brownian_increment(2, 0.05);
        base = joint_step(base, policy, dw, 0.05);
        rotated = joint_step(rotated, policy, u * dw, 0.05);
        CHECK((rotated.states[0].moments.mean - u * base.states[0].moments.mean)
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
        CHECK((rotated.states[1].moments.mean - u * base.states[1].moments.mean)
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
    }
}

TEST_CASE("pathwise homogeneity of the isotropized scheme") {
    // Scaling the measures by γ scales the additive regularizer Σ + δ²I by γ²,
    // i.e. the δ parameter by |γ|; terminal means then scale exactly.
    const auto mu = random_cloud(12, 2, 81);
    const auto nu = random_cloud(10, 2, 82);
    const double gamma = 2.5, delta = 1e-3;

    const auto gmu = DiscreteMeasure::from_log_weights(gamma * mu.points(), mu.log_weights());
    const auto gnu = DiscreteMeasure::from_log_weights(gamma * nu.points(), nu.log_weights());

    JointSLState base = joint_init({mu, nu});
    JointSLState scaled = joint_init({gmu, gnu});
    const auto base_policy = JointPolicy::joint_alpha(0.5, delta);
    const auto scaled_policy = JointPolicy::joint_alpha(0.5, gamma * delta);
    GaussianStream rng(606);
    for (int k = 0; k < 60; ++k) {
        const Vector dw = rng.brownian_increment(2, 0.05);
        base = joint_step(base, base_policy, dw, 0.05);
        scaled = joint_step(scaled, scaled_policy, dw, 0.05);
        for (int i = 0; i < 2; ++i) {
            CHECK((scaled.states[i].moments.mean - gamma * base.states[i].moments.mean)
                      .cwiseAbs()
                      .maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("translation identity with common random numbers") {
    const auto mu = random_cloud(15, 2, 91, 0.8);
    Matrix shifted = random_cloud(15, 2, 92, 0.6).points();
    shifted.rowwise() += Eigen::RowVector2d(1.5, -0.5);
    const auto nu = DiscreteMeasure::uniform(shifted);

    const Vector ma = mean_cov(mu).mean, mb = mean_cov(nu).mean;
    const Vector c = ma - mb;
    const auto mu_cent =
        DiscreteMeasure::from_log_weights(mu.points().rowwise() - ma.transpose(),
                                          mu.log_weights());
    const auto nu_cent =
        DiscreteMeasure::from_log_weights(nu.points().rowwise() - mb.transpose(),
                                          nu.log_weights());

    SimConfig cfg;
    cfg.horizon = 12.0;
    const auto policy = JointPolicy::joint_alpha(0.5, 1e-3);
    const int m = 400;
    const auto orig = sample_coupling(mu, nu, policy, cfg, m, 777);
    const auto cent = sample_coupling(mu_cent, nu_cent, policy, cfg, m, 777);

    std::vector<double> deltas(m);
    for (int j = 0; j < m; ++j) {
        deltas[j] = (orig[j].a - orig[j].b).squaredNorm() -
                    (cent[j].a - cent[j].b).squaredNorm() - c.squaredNorm();
    }
    double mean = 0.0;
    for (double v : deltas) mean += v;
    mean /= m;
    double var = 0.0;
    for (double v : deltas) var += (v - mean) * (v - mean);
    var /= (m - 1);
    const double std_err = std::sqrt(var / m);
    CHECK(std::abs(mean) < 4.0 * std::max(std_err, 1e-12));
}

TEST_CASE("degenerate partner keeps evolving") {
    Vector x(1);
    x << 0.5;
    const auto mu = DiscreteMeasure::point_mass(x);
    const auto nu = bernoulli_points();
    SimConfig cfg;
    cfg.horizon = 15.0;
    const auto samples =
        sample_coupling(mu, nu, JointPolicy::joint_alpha(0.5, 1e-3), cfg, 50, 31);
    int decided = 0;
    for (const auto& s : samples) {
        CHECK(s.a[0] == doctest::Approx(0.5));
        if (std::abs(s.b[0] - 0.0) < 1e-3 || std::abs(s.b[0] - 1.0) < 1e-3) ++decided;
    }
    CHECK(decided >= 48);  // partner localizes on its own
}
