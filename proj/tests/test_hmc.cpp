#include <cmath>

#include "dln/hmc.hpp"
#include "dln/rng.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using dln::EnergyTarget;
using dln::HmcConfig;
using Eigen::VectorXd;

namespace {

EnergyTarget gaussian_target(double mean, double var, int dim) {
  EnergyTarget t;
  t.dim = dim;
  t.energy = [mean, var](const VectorXd& x) {
    return (x.array() - mean).square().sum() / (2.0 * var);
  };
  t.gradient = [mean, var](const VectorXd& x) {
    return ((x.array() - mean) / var).matrix().eval();
  };
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("hmc");

TEST_CASE("leapfrog is time-reversible") {
  const EnergyTarget t = gaussian_target(0.0, 1.0, 4);
  HmcConfig cfg;
  cfg.step_size = 0.11;
  cfg.leapfrog_steps = 37;
  cfg.mass = 2.0;

  auto rng = dln::make_stream(51, 0);
  VectorXd x0(4), p0(4);
  for (int i = 0; i < 4; ++i) {
    x0[i] = dln::draw_normal(rng);
    p0[i] = dln::draw_normal(rng);
  }
  const auto fwd = dln::leapfrog(t, x0, p0, cfg);
  REQUIRE(fwd.ok);
  const auto back = dln::leapfrog(t, fwd.state, (-fwd.momentum).eval(), cfg);
  REQUIRE(back.ok);
  CHECK((back.state - x0).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((back.momentum + p0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("leapfrog nearly conserves the Hamiltonian at small steps") {
  const EnergyTarget t = gaussian_target(0.0, 1.0, 3);
  HmcConfig cfg;  // the generative-model settings: 0.01 x 20
  auto rng = dln::make_stream(52, 0);
  for (int rep = 0; rep < 10; ++rep) {
    VectorXd x(3), p(3);
    for (int i = 0; i < 3; ++i) {
      x[i] = dln::draw_normal(rng);
      p[i] = std::sqrt(cfg.mass) * dln::draw_normal(rng);
    }
    const double h0 = t.energy(x) + p.squaredNorm() / (2.0 * cfg.mass);
    const auto traj = dln::leapfrog(t, x, p, cfg);
    REQUIRE(traj.ok);
    const double h1 = t.energy(traj.state) +
                      traj.momentum.squaredNorm() / (2.0 * cfg.mass);
    CHECK(std::abs(h1 - h0) < 1e-4);
  }
}

TEST_CASE("zero gradient reduces leapfrog to free drift scaled by the mass") {
  EnergyTarget flat;
  flat.dim = 2;
  flat.energy = [](const VectorXd&) { return 0.7; };
  flat.gradient = [](const VectorXd& x) { return VectorXd::Zero(x.size()).eval(); };
  HmcConfig cfg;
  cfg.step_size = 0.3;
  cfg.leapfrog_steps = 7;
  cfg.mass = 2.0;

  VectorXd x(2), p(2);
  x << 1.0, -0.5;
  p << 0.4, 1.2;
  const auto traj = dln::leapfrog(flat, x, p, cfg);
  const VectorXd expected =
      x + (cfg.step_size * cfg.leapfrog_steps / cfg.mass) * p;
  CHECK((traj.state - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((traj.momentum - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("chained kernels reproduce a shifted Gaussian's moments") {
  const EnergyTarget t = gaussian_target(3.0, 1.0, 1);
  HmcConfig cfg;
  cfg.step_size = 0.6;
  cfg.leapfrog_steps = 12;
  cfg.epochs_per_call = 1;
  cfg.mass = 2.0;

  auto rng = dln::make_stream(53, 0);
  VectorXd x = VectorXd::Zero(1);
  const int n = 6000, burn = 500;
  std::vector<double> chain;
  chain.reserve(n);
  for (int k = 0; k < n + burn; ++k) {
    auto res = dln::hmc_sample(t, x, cfg, rng);
    x = res.state;
    if (k >= burn) chain.push_back(x[0]);
  }
  const auto stat = oracle::batch_means(chain);
  CHECK(std::abs(stat.mean - 3.0) < 4.0 * stat.se);

  // second moment: E[(x-3)^2] = 1
  std::vector<double> sq(chain.size());
  for (size_t k = 0; k < chain.size(); ++k)
    sq[k] = (chain[k] - 3.0) * (chain[k] - 3.0);
  const auto stat2 = oracle::batch_means(sq);
  CHECK(std::abs(stat2.mean - 1.0) < 4.0 * stat2.se);
}

TEST_CASE("vanishing step size accepts everything") {
  const EnergyTarget t = gaussian_target(0.0, 1.0, 3);
  HmcConfig cfg;
  cfg.step_size = 1e-5;
  cfg.leapfrog_steps = 5;
  cfg.epochs_per_call = 50;
  auto rng = dln::make_stream(54, 0);
  const auto res = dln::hmc_sample(t, VectorXd::Ones(3).eval(), cfg, rng);
  CHECK(res.acceptance_rate > 0.98);
  CHECK(res.energy_trace.size() == 50);
}

TEST_CASE("identical streams yield identical trajectories") {
  const EnergyTarget t = gaussian_target(1.0, 0.5, 3);
  HmcConfig cfg;
  cfg.step_size = 0.2;
  cfg.epochs_per_call = 8;
  auto r1 = dln::make_stream(55, 0);
  auto r2 = dln::make_stream(55, 0);
  const auto a = dln::hmc_sample(t, VectorXd::Zero(3).eval(), cfg, r1);
  const auto b = dln::hmc_sample(t, VectorXd::Zero(3).eval(), cfg, r2);
  CHECK((a.state - b.state).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.acceptance_rate == b.acceptance_rate);
  REQUIRE(a.energy_trace.size() == b.energy_trace.size());
  for (size_t k = 0; k < a.energy_trace.size(); ++k)
    CHECK(a.energy_trace[k] == b.energy_trace[k]);
}

TEST_CASE("the energy trace tracks the retained state") {
  const EnergyTarget t = gaussian_target(0.0, 1.0, 2);
  HmcConfig cfg;
  cfg.step_size = 0.4;
  cfg.epochs_per_call = 15;
  auto rng = dln::make_stream(56, 0);
  const auto res = dln::hmc_sample(t, VectorXd::Ones(2).eval(), cfg, rng);
  REQUIRE(res.energy_trace.size() == 15);
  CHECK(res.energy_trace.back() ==
        doctest::Approx(t.energy(res.state)).epsilon(1e-12));
}

TEST_CASE("finite-difference gradient check") {
  SUBCASE("a correct quadratic gradient passes tightly") {
    EnergyTarget t;
    t.dim = 3;
    Eigen::Matrix3d a;
    a << 2.0, 0.3, 0.0, 0.3, 1.5, -0.2, 0.0, -0.2, 1.1;
    t.energy = [a](const VectorXd& x) { return 0.5 * x.dot(a * x); };
    t.gradient = [a](const VectorXd& x) { return (a * x).eval(); };
    VectorXd x(3);
    x << 0.7, -0.3, 1.1;
    CHECK(dln::grad_check(t, x) < 1e-7);
  }
  SUBCASE("a constant energy with a zero gradient is exact") {
    EnergyTarget t;
    t.dim = 2;
    t.energy = [](const VectorXd&) { return 4.2; };
    t.gradient = [](const VectorXd& x) {
      return VectorXd::Zero(x.size()).eval();
    };
    CHECK(dln::grad_check(t, VectorXd::Ones(2)) < 1e-10);
  }
  SUBCASE("a wrong gradient is flagged") {
    EnergyTarget t;
    t.dim = 1;
    t.energy = [](const VectorXd& x) { return x.squaredNorm(); };
    t.gradient = [](const VectorXd& x) { return (0.5 * x).eval(); };  // off 4x
    VectorXd x = VectorXd::Ones(1);
    CHECK(dln::grad_check(t, x) > 1e-2);
  }
}

TEST_CASE("a long chain matches a double-well density in distribution") {
  EnergyTarget t;
  t.dim = 1;
  t.energy = [](const VectorXd& x) {
    const double c = x[0] * x[0] - 1.0;
    return 2.0 * c * c;
  };
  t.gradient = [](const VectorXd& x) {
    VectorXd g(1);
    g[0] = 8.0 * x[0] * (x[0] * x[0] - 1.0);
    return g;
  };

  const int bins = 41;
  const double lo = -2.5, hi = 2.5, w = (hi - lo) / bins;
  // expected bin masses by fine midpoint quadrature of exp(-E)
  std::vector<double> expected(bins, 0.0);
  double z = 0.0;
  const int sub = 200;
  for (int b = 0; b < bins; ++b) {
    for (int s = 0; s < sub; ++s) {
      VectorXd x(1);
      x[0] = lo + (b + (s + 0.5) / sub) * w;
      expected[static_cast<size_t>(b)] += std::exp(-t.energy(x));
    }
    z += expected[static_cast<size_t>(b)];
  }
  for (auto& e : expected) e /= z;  // tails beyond +-2.5 are ~1e-10

  HmcConfig cfg;
  cfg.step_size = 0.25;
  cfg.leapfrog_steps = 12;
  cfg.epochs_per_call = 1;
  cfg.mass = 1.0;
  auto rng = dln::make_stream(57, 0);
  VectorXd x = VectorXd::Ones(1);
  const int n = 100000, burn = 1000;
  std::vector<double> hist(bins, 0.0);
  for (int k = 0; k < n + burn; ++k) {
    auto res = dln::hmc_sample(t, x, cfg, rng);
    x = res.state;
    if (k >= burn) {
      const int b = std::clamp(static_cast<int>((x[0] - lo) / w), 0, bins - 1);
      hist[static_cast<size_t>(b)] += 1.0 / n;
    }
  }
  CHECK(oracle::tv_distance(hist, expected) < 0.05);
}

TEST_CASE("acceptance decays as the step size grows") {
  const EnergyTarget t = gaussian_target(0.0, 1.0, 3);
  const double steps[4] = {0.05, 0.3, 0.8, 1.4};
  double avg[4] = {0, 0, 0, 0};
  for (int seed = 0; seed < 5; ++seed) {
    for (int k = 0; k < 4; ++k) {
      HmcConfig cfg;
      cfg.step_size = steps[k];
      cfg.leapfrog_steps = 15;
      cfg.epochs_per_call = 200;
      cfg.mass = 1.0;
      auto rng = dln::make_stream(58, static_cast<std::uint64_t>(seed));
      avg[k] += dln::hmc_sample(t, VectorXd::Zero(3).eval(), cfg, rng)
                    .acceptance_rate / 5.0;
    }
  }
  for (int k = 0; k + 1 < 4; ++k) CHECK(avg[k + 1] <= avg[k] + 0.02);
  CHECK(avg[3] < avg[0] - 0.05);
}

TEST_CASE("an exploding target rejects every trajectory and keeps the start") {
  EnergyTarget t;
  t.dim = 2;
  t.energy = [](const VectorXd& x) { return 5e5 * x.squaredNorm(); };
  t.gradient = [](const VectorXd& x) { return (1e6 * x).eval(); };
  HmcConfig cfg;
  cfg.step_size = 1.0;
  cfg.leapfrog_steps = 30;
  cfg.epochs_per_call = 12;
  auto rng = dln::make_stream(59, 0);
  VectorXd init(2);
  init << 0.3, -0.8;
  const auto res = dln::hmc_sample(t, init, cfg, rng);
  CHECK(res.acceptance_rate == 0.0);
  CHECK((res.state - init).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("configuration validation") {
  HmcConfig cfg;
  cfg.step_size = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HmcConfig{};
  cfg.leapfrog_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = HmcConfig{};
  cfg.mass = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_NOTHROW(HmcConfig{}.validate());
}

TEST_SUITE_END();
