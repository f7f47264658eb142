#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dln/grbm.hpp"
#include "dln/hmc.hpp"
#include "dln/lambertian.hpp"

namespace dln {

/// The full generative model: GRBM/DBN priors over albedo and vectorized
/// normals, a Gaussian light prior, per-pixel observation noise, and the
/// soft unit-norm penalty weight eta.
struct DlnModel {
  DbnStack albedo_prior;  // visible dim N_v, hidden h
  DbnStack normal_prior;  // visible dim 3*N_v (pixel-major), hidden g
  LightingPrior lighting;
  NoiseModel noise;
  double eta = 100.0;
  int height = 0;
  int width = 0;

  int n_pixels() const { return height * width; }
  void validate() const;

  // Zero-weight GRBM priors: albedo ~ N(albedo_bias, 1) iid, normals
  // ~ N((0,0,1), 1) per pixel, lights ~ N((0,0,1), I). The inference-only
  // baseline model.
  static DlnModel flat(int height, int width, double sigma_v,
                       double eta = 100.0, int n_hidden_albedo = 1,
                       int n_hidden_normal = 1, double albedo_bias = 0.5);
};

struct PosteriorDiagnostics {
  double hmc_acceptance = 0.0;        // mean over pixels, last sweep
  std::vector<double> energy_trace;   // joint energy after each sweep
  int lighting_jitter_events = 0;     // cholesky retries in Conditional 3
};

/// One sample of (a, N, L, h, g) plus bookkeeping.
struct PosteriorState {
  SceneLatents latents;
  Vector h;  // albedo prior hidden units, 0/1
  Vector g;  // normal prior hidden units, 0/1
  std::vector<Vector> h_upper;  // DBN upper-layer states, bottom-up order
  std::vector<Vector> g_upper;
  int iteration = 0;  // sweep counter; also keys the RNG streams
  PosteriorDiagnostics diag;
};

// Conditional ids used to key RNG streams: 1 hidden, 2 albedo, 3 lights,
// 4 normals. Every draw in conditionals 2-4 comes from a stream keyed by
// (seed, iteration, conditional, pixel-or-image index), so results are
// identical at any thread count or visit order.

// Conditional 1: h ~ p(h|a), g ~ p(g|vec(N)); with DBN priors the upper
// layers are refreshed by an up-pass plus one top-layer Gibbs step.
void sample_hidden(const DlnModel& m, PosteriorState& st, std::uint64_t seed);

// Conditional 2: per-pixel Gaussian over albedo.
void sample_albedo(const DlnModel& m, PosteriorState& st, const ImageStack& V,
                   std::uint64_t seed, int threads = 1);

// Conditional 3: per-image 3-d Gaussian over the light vectors.
void sample_lights(const DlnModel& m, PosteriorState& st, const ImageStack& V,
                   std::uint64_t seed);

// The quadratic part of the Conditional-4 energy at pixel i:
// E(n) = 1/2 n'(A + D)n - r'n + eta/2 (n'n - 1)^2.
struct NormalQuadratic {
  Eigen::Matrix3d a_plus_d;
  Eigen::Vector3d r;
  double eta = 0.0;

  template <typename Vec>
  double energy(const Vec& n) const {
    const double c = n.squaredNorm() - 1.0;
    return 0.5 * n.dot(a_plus_d * n) - r.dot(n) + 0.5 * eta * c * c;
  }
  template <typename Vec>
  Vec gradient(const Vec& n) const {
    const double c = n.squaredNorm() - 1.0;
    return a_plus_d * n - r + (2.0 * eta * c) * n;
  }
};

NormalQuadratic normal_quadratic(const DlnModel& m, const PosteriorState& st,
                                 const ImageStack& V, int pixel);

// Same energy wrapped as a generic differentiable target over R^3.
EnergyTarget normal_energy(const DlnModel& m, const PosteriorState& st,
                           const ImageStack& V, int pixel);

// Conditional 4: per-pixel HMC over the surface normals. Returns the mean
// acceptance rate over pixels.
double sample_normals(const DlnModel& m, PosteriorState& st,
                      const ImageStack& V, const HmcConfig& cfg,
                      std::uint64_t seed, int threads = 1);

// Joint energy of the current state given V (lower is more probable).
double dln_energy(const DlnModel& m, const PosteriorState& st,
                  const ImageStack& V);

enum class InferInit { Bias, Svd };

struct InferOptions {
  int iters = 50;
  HmcConfig hmc;
  InferInit init = InferInit::Bias;
  std::uint64_t seed = 0;
  int threads = 1;
  bool record_trace = false;
  std::vector<int> sweep_order = {1, 2, 3, 4};  // conditionals per sweep
  // Called after every sweep when set (snapshot export, progress).
  std::function<void(int, const PosteriorState&)> on_sweep;
};

struct InferResult {
  PosteriorState state;
  std::vector<SceneLatents> trace;  // one entry per sweep when record_trace
  std::vector<double> acceptance_per_sweep;
};

// Initial state: Bias seeds (a, N) from the prior visible biases and L from
// the prior mean; Svd seeds (a, N, L) from svd_photometric_stereo when
// P >= 3 and falls back to Bias otherwise.
PosteriorState init_state(const DlnModel& m, const ImageStack& V,
                          InferInit init);

// Alternating blocked-Gibbs sweeps 1 -> 2 -> 3 -> 4. P = 0 is legal and
// produces a prior sample path. Throws NumericError if the state goes
// non-finite, reporting the sweep it happened in.
InferResult infer(const DlnModel& m, const ImageStack& V,
                  const InferOptions& opt);

// Mean of the trace entries after dropping the first burn_in sweeps.
SceneLatents trace_mean(const std::vector<SceneLatents>& trace, int burn_in);

}  // namespace dln
