#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace dln {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + exp(x)) without overflow
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

constexpr double kVarianceFloor = 1e-6;

/// Gaussian-Bernoulli RBM. Real visible units with per-unit variance,
/// binary hidden units. weights is N_vis x N_hid.
struct GrbmParams {
  Matrix weights;
  Vector visible_bias;
  Vector hidden_bias;
  Vector visible_var;  // sigma^2, strictly positive

  int n_visible() const { return static_cast<int>(visible_bias.size()); }
  int n_hidden() const { return static_cast<int>(hidden_bias.size()); }

  // Zero weights/biases, unit variance.
  static GrbmParams zeros(int n_vis, int n_hid);
  // Weights ~ N(0, 0.01^2), biases zero, variance 1.
  static GrbmParams random_init(int n_vis, int n_hid, std::mt19937_64& rng);

  // Clamps visible_var at the floor, throws NumericError on non-finite
  // entries.
  void validate() const;
  void clamp_variances();
};

/// Bernoulli-Bernoulli RBM for upper DBN layers.
struct RbmParams {
  Matrix weights;  // N_vis x N_hid
  Vector visible_bias;
  Vector hidden_bias;

  int n_visible() const { return static_cast<int>(visible_bias.size()); }
  int n_hidden() const { return static_cast<int>(hidden_bias.size()); }

  static RbmParams zeros(int n_vis, int n_hid);
  static RbmParams random_init(int n_vis, int n_hid, std::mt19937_64& rng);
  void validate() const;
};

/// GRBM with optional binary RBMs stacked on top. Adjacent layer sizes chain.
struct DbnStack {
  GrbmParams bottom;
  std::vector<RbmParams> upper;

  int n_visible() const { return bottom.n_visible(); }
  // Hidden size of the topmost layer.
  int n_top() const {
    return upper.empty() ? bottom.n_hidden() : upper.back().n_hidden();
  }
  void validate() const;
};

// --- conditionals and energies -------------------------------------------

// p(h_j = 1 | v) = logistic(sum_i W_ij v_i + c_j)
Vector grbm_hidden_conditional(const GrbmParams& p, const Vector& v);

struct GaussianMoments {
  Vector mean;
  Vector variance;
};

// v_i | h ~ N(b_i + sigma_i^2 sum_j W_ij h_j, sigma_i^2)
GaussianMoments grbm_visible_conditional(const GrbmParams& p, const Vector& h);

// E(v,h) = sum_i (v_i-b_i)^2/(2 sigma_i^2) - c'h - v'Wh
double grbm_energy(const GrbmParams& p, const Vector& v, const Vector& h);

// F(v) = sum_i (v_i-b_i)^2/(2 sigma_i^2) - sum_j softplus(W'v + c)_j,
// so exp(-F(v)) = sum_h exp(-E(v,h)).
double grbm_free_energy(const GrbmParams& p, const Vector& v);

Vector rbm_hidden_conditional(const RbmParams& p, const Vector& v);
Vector rbm_visible_conditional(const RbmParams& p, const Vector& h);
double rbm_energy(const RbmParams& p, const Vector& v, const Vector& h);
double rbm_free_energy(const RbmParams& p, const Vector& v);

// --- sampling helpers ------------------------------------------------------

Vector sample_bernoulli(const Vector& probs, std::mt19937_64& rng);
Vector sample_gaussian(const Vector& mean, const Vector& variance,
                       std::mt19937_64& rng);

// --- contrastive divergence ------------------------------------------------

struct CdConfig {
  int steps = 1;        // k in CD-k
  double rate = 0.01;
  double momentum = 0.0;
  bool update_sigma = false;  // sigma^2 held fixed by default
};

struct CdDiagnostics {
  double grad_norm_weights = 0.0;
  double grad_norm_bias = 0.0;
  double recon_error = 0.0;  // mean squared reconstruction error
  // Flattened gradient (W, b, c, [sigma2]) averaged over the batch; used by
  // the fixed-point tests.
  Vector gradient;
};

// Optional momentum state carried across calls; pass nullptr for plain SGD.
struct CdVelocity {
  Matrix weights;
  Vector visible_bias;
  Vector hidden_bias;
  Vector visible_var;
};

// One CD-k parameter update from a batch (samples are columns).
// Throws NumericError if the gradient goes non-finite.
CdDiagnostics grbm_cd_update(GrbmParams& p, const Matrix& batch,
                             const CdConfig& cfg, std::mt19937_64& rng,
                             CdVelocity* velocity = nullptr);

CdDiagnostics rbm_cd_update(RbmParams& p, const Matrix& batch,
                            const CdConfig& cfg, std::mt19937_64& rng,
                            CdVelocity* velocity = nullptr);

// --- deep belief net passes -----------------------------------------------

// Bottom-up activation probabilities per layer. When sampled=true the input
// to each layer is a binary sample of the layer below (rng required);
// otherwise mean-field probabilities are propagated.
std::vector<Vector> dbn_up_pass(const DbnStack& stack, const Vector& v,
                                bool sampled = false,
                                std::mt19937_64* rng = nullptr);

// Alternating Gibbs in the top RBM (the GRBM itself for a bare stack),
// then a directed down-pass. Returns the visible-layer conditional mean;
// with sample_visible=true a Gaussian draw around it.
Vector dbn_topdown_sample(const DbnStack& stack, int gibbs_iters,
                          std::mt19937_64& rng, bool sample_visible = false);

}  // namespace dln
