#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "dln/rng.hpp"

namespace dln {

struct HmcConfig {
  double step_size = 0.01;
  int leapfrog_steps = 20;
  int epochs_per_call = 10;
  double mass = 2.0;  // momentum scale; kinetic energy is p'p / (2 mass)

  void validate() const {
    if (step_size <= 0 || leapfrog_steps < 1 || epochs_per_call < 1 || mass <= 0)
      throw std::invalid_argument("invalid HmcConfig");
  }
};

// A proposal whose Hamiltonian drifts beyond this is rejected outright.
constexpr double kHmcDivergenceThreshold = 1000.0;

/// Differentiable energy for the generic kernel. Any type with the same
/// energy/gradient members works; this std::function form is the erased
/// convenience wrapper.
struct EnergyTarget {
  std::function<double(const Eigen::VectorXd&)> energy;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  int dim = 0;
};

template <typename Vec>
struct LeapfrogResult {
  Vec state;
  Vec momentum;
  bool ok = true;  // false: non-finite values mid-trajectory
};

// Standard half-kick / drift / half-kick integrator, cfg.leapfrog_steps
// steps. A non-finite gradient or state flags the trajectory as failed so
// the caller can count it as a rejection.
template <typename Target, typename Vec>
LeapfrogResult<Vec> leapfrog(const Target& target, Vec x, Vec p,
                             const HmcConfig& cfg) {
  const double eps = cfg.step_size;
  const double inv_mass = 1.0 / cfg.mass;
  LeapfrogResult<Vec> out;

  Vec g = target.gradient(x);
  if (!g.allFinite()) {
    out.state = std::move(x);
    out.momentum = std::move(p);
    out.ok = false;
    return out;
  }
  p -= (0.5 * eps) * g;
  for (int step = 0; step < cfg.leapfrog_steps; ++step) {
    x += (eps * inv_mass) * p;
    if (!x.allFinite()) {
      out.ok = false;
      break;
    }
    g = target.gradient(x);
    if (!g.allFinite()) {
      out.ok = false;
      break;
    }
    // full kick except after the final drift, which gets the closing half
    p -= (step + 1 < cfg.leapfrog_steps ? eps : 0.5 * eps) * g;
  }
  out.state = std::move(x);
  out.momentum = std::move(p);
  return out;
}

template <typename Vec>
struct HmcResult {
  Vec state;
  double acceptance_rate = 0.0;
  std::vector<double> energy_trace;
};

// cfg.epochs_per_call Metropolis-corrected trajectories from init. All
// trajectories rejected is legal; the result is then init itself.
template <typename Target, typename Vec>
HmcResult<Vec> hmc_sample(const Target& target, Vec init, const HmcConfig& cfg,
                          std::mt19937_64& rng) {
  cfg.validate();
  const double sqrt_mass = std::sqrt(cfg.mass);
  const double inv_mass = 1.0 / cfg.mass;
  HmcResult<Vec> res;
  res.energy_trace.reserve(cfg.epochs_per_call);

  Vec x = std::move(init);
  double e_cur = target.energy(x);
  int accepted = 0;
  Vec p = x;  // shape only

  for (int epoch = 0; epoch < cfg.epochs_per_call; ++epoch) {
    for (int i = 0; i < p.size(); ++i) p[i] = sqrt_mass * draw_normal(rng);
    const double h_cur = e_cur + 0.5 * inv_mass * p.squaredNorm();

    auto traj = leapfrog(target, x, p, cfg);
    bool accept = false;
    double e_prop = 0.0;
    if (traj.ok) {
      e_prop = target.energy(traj.state);
      const double h_prop = e_prop + 0.5 * inv_mass * traj.momentum.squaredNorm();
      const double dh = h_prop - h_cur;
      if (std::isfinite(dh) && std::abs(dh) <= kHmcDivergenceThreshold)
        accept = dh <= 0.0 || draw_uniform(rng) < std::exp(-dh);
      else
        draw_uniform(rng);  // keep the stream advancing on divergences
    } else {
      draw_uniform(rng);
    }

    if (accept) {
      x = std::move(traj.state);
      e_cur = e_prop;
      ++accepted;
    }
    res.energy_trace.push_back(e_cur);
  }
  res.state = std::move(x);
  res.acceptance_rate = static_cast<double>(accepted) / cfg.epochs_per_call;
  return res;
}

// Central finite differences against target.gradient; returns the max over
// coordinates of the relative error.
double grad_check(const EnergyTarget& target, const Eigen::VectorXd& state,
                  double eps = 1e-5);

}  // namespace dln
