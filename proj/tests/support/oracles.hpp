#pragma once

// Independent brute-force / analytic oracles for the test suites. Everything
// here is written from the definitions (loops, enumeration, quadrature), not
// by calling back into the library's vectorized implementations.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dln/grbm.hpp"

namespace oracle {

using dln::Matrix;
using dln::Vector;

// all 2^n binary vectors, lexicographic (bit 0 = fastest)
std::vector<Vector> enumerate_binary(int n);

double logsumexp(const std::vector<double>& xs);

// loop-transcribed energies
double grbm_energy(const dln::GrbmParams& p, const Vector& v, const Vector& h);
double rbm_energy(const dln::RbmParams& p, const Vector& v, const Vector& h);

// p(h_j = 1 | v) by enumerating all hidden joint states
Vector grbm_hidden_by_enumeration(const dln::GrbmParams& p, const Vector& v);
Vector rbm_hidden_by_enumeration(const dln::RbmParams& p, const Vector& v);
Vector rbm_visible_by_enumeration(const dln::RbmParams& p, const Vector& h);

// -log sum_h exp(-E(v,h)) by enumeration
double grbm_free_energy_by_enumeration(const dln::GrbmParams& p,
                                       const Vector& v);
double rbm_free_energy_by_enumeration(const dln::RbmParams& p, const Vector& v);

// Exact hidden marginal of a GRBM: integrating the Gaussian visibles out of
// exp(-E) leaves p(h) proportional to
//   exp(c'h + sum_i (b_i t_i + sigma_i^2 t_i^2 / 2)),  t = W h.
std::vector<double> grbm_hidden_marginal(const dln::GrbmParams& p);

// exact model sample: h ~ p(h), then v | h
Vector sample_exact_grbm(const dln::GrbmParams& p, std::mt19937_64& rng);

// exact log likelihood via the analytic partition function
double grbm_exact_loglik(const dln::GrbmParams& p, const Vector& v);

// exact visible marginal of a small RBM (2^n_vis atoms, enumeration order)
std::vector<double> rbm_visible_marginal(const dln::RbmParams& p);
Vector sample_exact_rbm_visible(const dln::RbmParams& p, std::mt19937_64& rng);

// 0.5 * sum |p - q|; sizes must match
double tv_distance(const std::vector<double>& p, const std::vector<double>& q);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
// autocorrelation-robust standard error of the chain mean via batch means
MeanSe batch_means(const std::vector<double>& chain, int n_batches = 50);

// golden-section minimum of f on [lo, hi]
double golden_min(const std::function<double(double)>& f, double lo, double hi,
                  double tol = 1e-12);

// Nelder-Mead followed by cyclic coordinate golden-section polish; good for
// the smooth strictly-convex objectives the M-step / conditional oracles use.
Eigen::VectorXd minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         Eigen::VectorXd x0, double scale = 0.5,
                         int nm_iters = 4000, int polish_cycles = 120);

}  // namespace oracle
