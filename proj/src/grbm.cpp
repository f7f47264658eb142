#include "dln/grbm.hpp"

#include <cmath>
#include <sstream>

#include "dln/errors.hpp"
#include "dln/rng.hpp"

namespace dln {

namespace {

void require_dims(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("dimension mismatch: ") + what);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace

GrbmParams GrbmParams::zeros(int n_vis, int n_hid) {
  GrbmParams p;
  p.weights = Matrix::Zero(n_vis, n_hid);
  p.visible_bias = Vector::Zero(n_vis);
  p.hidden_bias = Vector::Zero(n_hid);
  p.visible_var = Vector::Ones(n_vis);
  return p;
}

GrbmParams GrbmParams::random_init(int n_vis, int n_hid, std::mt19937_64& rng) {
  GrbmParams p = zeros(n_vis, n_hid);
  std::normal_distribution<double> w(0.0, 0.01);
  for (int j = 0; j < n_hid; ++j)
    for (int i = 0; i < n_vis; ++i) p.weights(i, j) = w(rng);
  return p;
}

void GrbmParams::validate() const {
  require_dims(weights.rows() == n_visible() && weights.cols() == n_hidden(),
               "GRBM weights");
  require_dims(visible_var.size() == n_visible(), "GRBM variances");
  if (!all_finite(weights) || !all_finite(visible_bias) ||
      !all_finite(hidden_bias) || !all_finite(visible_var))
    throw NumericError("GRBM parameters contain non-finite entries");
  if ((visible_var.array() < kVarianceFloor).any())
    throw NumericError("GRBM visible variance below floor");
}

void GrbmParams::clamp_variances() {
  visible_var = visible_var.array().max(kVarianceFloor).matrix();
}

RbmParams RbmParams::zeros(int n_vis, int n_hid) {
  RbmParams p;
  p.weights = Matrix::Zero(n_vis, n_hid);
  p.visible_bias = Vector::Zero(n_vis);
  p.hidden_bias = Vector::Zero(n_hid);
  return p;
}

RbmParams RbmParams::random_init(int n_vis, int n_hid, std::mt19937_64& rng) {
  RbmParams p = zeros(n_vis, n_hid);
  std::normal_distribution<double> w(0.0, 0.01);
  for (int j = 0; j < n_hid; ++j)
    for (int i = 0; i < n_vis; ++i) p.weights(i, j) = w(rng);
  return p;
}

void RbmParams::validate() const {
  require_dims(weights.rows() == n_visible() && weights.cols() == n_hidden(),
               "RBM weights");
  if (!all_finite(weights) || !all_finite(visible_bias) ||
      !all_finite(hidden_bias))
    throw NumericError("RBM parameters contain non-finite entries");
}

void DbnStack::validate() const {
  bottom.validate();
  int below = bottom.n_hidden();
  for (const auto& rbm : upper) {
    rbm.validate();
    require_dims(rbm.n_visible() == below, "DBN layer sizes must chain");
    below = rbm.n_hidden();
  }
}

Vector grbm_hidden_conditional(const GrbmParams& p, const Vector& v) {
  require_dims(v.size() == p.n_visible(), "grbm_hidden_conditional input");
  Vector x = p.weights.transpose() * v + p.hidden_bias;
  return x.unaryExpr([](double t) { return logistic(t); });
}

GaussianMoments grbm_visible_conditional(const GrbmParams& p, const Vector& h) {
  require_dims(h.size() == p.n_hidden(), "grbm_visible_conditional input");
  GaussianMoments m;
  m.mean = p.visible_bias + (p.visible_var.array() * (p.weights * h).array()).matrix();
  m.variance = p.visible_var;
  return m;
}

double grbm_energy(const GrbmParams& p, const Vector& v, const Vector& h) {
  require_dims(v.size() == p.n_visible() && h.size() == p.n_hidden(),
               "grbm_energy input");
  double quad = ((v - p.visible_bias).array().square() /
                 (2.0 * p.visible_var.array()))
                    .sum();
  return quad - p.hidden_bias.dot(h) - v.dot(p.weights * h);
}

double grbm_free_energy(const GrbmParams& p, const Vector& v) {
  require_dims(v.size() == p.n_visible(), "grbm_free_energy input");
  double quad = ((v - p.visible_bias).array().square() /
                 (2.0 * p.visible_var.array()))
                    .sum();
  Vector x = p.weights.transpose() * v + p.hidden_bias;
  double sp = 0.0;
  for (int j = 0; j < x.size(); ++j) sp += softplus(x[j]);
  return quad - sp;
}

Vector rbm_hidden_conditional(const RbmParams& p, const Vector& v) {
  require_dims(v.size() == p.n_visible(), "rbm_hidden_conditional input");
  Vector x = p.weights.transpose() * v + p.hidden_bias;
  return x.unaryExpr([](double t) { return logistic(t); });
}

Vector rbm_visible_conditional(const RbmParams& p, const Vector& h) {
  require_dims(h.size() == p.n_hidden(), "rbm_visible_conditional input");
  Vector x = p.weights * h + p.visible_bias;
  return x.unaryExpr([](double t) { return logistic(t); });
}

double rbm_energy(const RbmParams& p, const Vector& v, const Vector& h) {
  require_dims(v.size() == p.n_visible() && h.size() == p.n_hidden(),
               "rbm_energy input");
  return -p.visible_bias.dot(v) - p.hidden_bias.dot(h) - v.dot(p.weights * h);
}

double rbm_free_energy(const RbmParams& p, const Vector& v) {
  require_dims(v.size() == p.n_visible(), "rbm_free_energy input");
  Vector x = p.weights.transpose() * v + p.hidden_bias;
  double sp = 0.0;
  for (int j = 0; j < x.size(); ++j) sp += softplus(x[j]);
  return -p.visible_bias.dot(v) - sp;
}

Vector sample_bernoulli(const Vector& probs, std::mt19937_64& rng) {
  Vector out(probs.size());
  for (int i = 0; i < probs.size(); ++i)
    out[i] = draw_uniform(rng) < probs[i] ? 1.0 : 0.0;
  return out;
}

Vector sample_gaussian(const Vector& mean, const Vector& variance,
                       std::mt19937_64& rng) {
  Vector out(mean.size());
  for (int i = 0; i < mean.size(); ++i)
    out[i] = mean[i] + std::sqrt(variance[i]) * draw_normal(rng);
  return out;
}

namespace {

// Averaged sufficient statistics for one phase of CD. The hidden factor uses
// conditional probabilities, the visible one the given states.
struct GrbmStats {
  Matrix w;      // <v h'>
  Vector b;      // <(v-b)/sigma^2>
  Vector c;      // <h>
  Vector sigma;  // <(v-b)^2 / (2 sigma^4)>
};

GrbmStats grbm_stats(const GrbmParams& p, const Matrix& v) {
  const int B = static_cast<int>(v.cols());
  Matrix probs(p.n_hidden(), B);
  for (int s = 0; s < B; ++s) probs.col(s) = grbm_hidden_conditional(p, v.col(s));
  GrbmStats st;
  st.w = (v * probs.transpose()) / B;
  Matrix centered = v.colwise() - p.visible_bias;
  st.b = centered.rowwise().sum().array() / (B * p.visible_var.array());
  st.c = probs.rowwise().sum() / B;
  st.sigma = centered.array().square().rowwise().sum() /
             (2.0 * B * p.visible_var.array().square());
  return st;
}

}  // namespace

CdDiagnostics grbm_cd_update(GrbmParams& p, const Matrix& batch,
                             const CdConfig& cfg, std::mt19937_64& rng,
                             CdVelocity* velocity) {
  require_dims(batch.rows() == p.n_visible(), "grbm_cd_update batch");
  if (cfg.steps < 1) throw std::invalid_argument("CD steps must be >= 1");
  if (cfg.rate < 0) throw std::invalid_argument("CD rate must be >= 0");
  const int B = static_cast<int>(batch.cols());
  if (B == 0) throw std::invalid_argument("empty CD batch");

  GrbmStats pos = grbm_stats(p, batch);

  // k alternating Gibbs steps started at the data; per-sample streams keyed
  // by sample index keep the result independent of batch-internal ordering.
  const std::uint64_t base = rng();
  Matrix recon(p.n_visible(), B);
  for (int s = 0; s < B; ++s) {
    std::mt19937_64 stream = make_stream(base, static_cast<std::uint64_t>(s));
    Vector v = batch.col(s);
    for (int k = 0; k < cfg.steps; ++k) {
      Vector h = sample_bernoulli(grbm_hidden_conditional(p, v), stream);
      GaussianMoments m = grbm_visible_conditional(p, h);
      v = sample_gaussian(m.mean, m.variance, stream);
    }
    recon.col(s) = v;
  }
  GrbmStats neg = grbm_stats(p, recon);

  Matrix gw = pos.w - neg.w;
  Vector gb = pos.b - neg.b;
  Vector gc = pos.c - neg.c;
  Vector gs = pos.sigma - neg.sigma;

  CdDiagnostics diag;
  diag.grad_norm_weights = gw.norm();
  diag.grad_norm_bias = std::sqrt(gb.squaredNorm() + gc.squaredNorm());
  diag.recon_error = (recon - batch).squaredNorm() / (B * p.n_visible());
  const int nw = static_cast<int>(gw.size());
  diag.gradient.resize(nw + gb.size() + gc.size() +
                       (cfg.update_sigma ? gs.size() : 0));
  diag.gradient.head(nw) = Eigen::Map<const Vector>(gw.data(), nw);
  diag.gradient.segment(nw, gb.size()) = gb;
  diag.gradient.segment(nw + gb.size(), gc.size()) = gc;
  if (cfg.update_sigma) diag.gradient.tail(gs.size()) = gs;

  if (!diag.gradient.allFinite()) {
    std::ostringstream os;
    os << "non-finite CD gradient (|gW|=" << diag.grad_norm_weights
       << ", recon=" << diag.recon_error << ")";
    throw NumericError(os.str());
  }

  if (velocity) {
    if (velocity->weights.size() == 0) {
      velocity->weights = Matrix::Zero(p.weights.rows(), p.weights.cols());
      velocity->visible_bias = Vector::Zero(p.n_visible());
      velocity->hidden_bias = Vector::Zero(p.n_hidden());
      velocity->visible_var = Vector::Zero(p.n_visible());
    }
    velocity->weights = cfg.momentum * velocity->weights + cfg.rate * gw;
    velocity->visible_bias = cfg.momentum * velocity->visible_bias + cfg.rate * gb;
    velocity->hidden_bias = cfg.momentum * velocity->hidden_bias + cfg.rate * gc;
    p.weights += velocity->weights;
    p.visible_bias += velocity->visible_bias;
    p.hidden_bias += velocity->hidden_bias;
    if (cfg.update_sigma) {
      velocity->visible_var = cfg.momentum * velocity->visible_var + cfg.rate * gs;
      p.visible_var += velocity->visible_var;
    }
  } else {
    p.weights += cfg.rate * gw;
    p.visible_bias += cfg.rate * gb;
    p.hidden_bias += cfg.rate * gc;
    if (cfg.update_sigma) p.visible_var += cfg.rate * gs;
  }
  if (cfg.update_sigma) p.clamp_variances();
  p.validate();
  return diag;
}

namespace {

struct RbmStats {
  Matrix w;
  Vector b;
  Vector c;
};

RbmStats rbm_stats(const RbmParams& p, const Matrix& v) {
  const int B = static_cast<int>(v.cols());
  Matrix probs(p.n_hidden(), B);
  for (int s = 0; s < B; ++s) probs.col(s) = rbm_hidden_conditional(p, v.col(s));
  RbmStats st;
  st.w = (v * probs.transpose()) / B;
  st.b = v.rowwise().sum() / B;
  st.c = probs.rowwise().sum() / B;
  return st;
}

}  // namespace

CdDiagnostics rbm_cd_update(RbmParams& p, const Matrix& batch,
                            const CdConfig& cfg, std::mt19937_64& rng,
                            CdVelocity* velocity) {
  require_dims(batch.rows() == p.n_visible(), "rbm_cd_update batch");
  if (cfg.steps < 1) throw std::invalid_argument("CD steps must be >= 1");
  const int B = static_cast<int>(batch.cols());
  if (B == 0) throw std::invalid_argument("empty CD batch");

  RbmStats pos = rbm_stats(p, batch);

  const std::uint64_t base = rng();
  Matrix recon(p.n_visible(), B);
  for (int s = 0; s < B; ++s) {
    std::mt19937_64 stream = make_stream(base, static_cast<std::uint64_t>(s));
    Vector v = batch.col(s);
    for (int k = 0; k < cfg.steps; ++k) {
      Vector h = sample_bernoulli(rbm_hidden_conditional(p, v), stream);
      v = sample_bernoulli(rbm_visible_conditional(p, h), stream);
    }
    recon.col(s) = v;
  }
  RbmStats neg = rbm_stats(p, recon);

  Matrix gw = pos.w - neg.w;
  Vector gb = pos.b - neg.b;
  Vector gc = pos.c - neg.c;

  CdDiagnostics diag;
  diag.grad_norm_weights = gw.norm();
  diag.grad_norm_bias = std::sqrt(gb.squaredNorm() + gc.squaredNorm());
  diag.recon_error = (recon - batch).squaredNorm() / (B * p.n_visible());
  const int nw = static_cast<int>(gw.size());
  diag.gradient.resize(nw + gb.size() + gc.size());
  diag.gradient.head(nw) = Eigen::Map<const Vector>(gw.data(), nw);
  diag.gradient.segment(nw, gb.size()) = gb;
  diag.gradient.tail(gc.size()) = gc;
  if (!diag.gradient.allFinite()) throw NumericError("non-finite CD gradient");

  if (velocity) {
    if (velocity->weights.size() == 0) {
      velocity->weights = Matrix::Zero(p.weights.rows(), p.weights.cols());
      velocity->visible_bias = Vector::Zero(p.n_visible());
      velocity->hidden_bias = Vector::Zero(p.n_hidden());
    }
    velocity->weights = cfg.momentum * velocity->weights + cfg.rate * gw;
    velocity->visible_bias = cfg.momentum * velocity->visible_bias + cfg.rate * gb;
    velocity->hidden_bias = cfg.momentum * velocity->hidden_bias + cfg.rate * gc;
    p.weights += velocity->weights;
    p.visible_bias += velocity->visible_bias;
    p.hidden_bias += velocity->hidden_bias;
  } else {
    p.weights += cfg.rate * gw;
    p.visible_bias += cfg.rate * gb;
    p.hidden_bias += cfg.rate * gc;
  }
  p.validate();
  return diag;
}

std::vector<Vector> dbn_up_pass(const DbnStack& stack, const Vector& v,
                                bool sampled, std::mt19937_64* rng) {
  if (sampled && rng == nullptr)
    throw std::invalid_argument("dbn_up_pass: sampled pass needs an rng");
  std::vector<Vector> acts;
  acts.reserve(1 + stack.upper.size());
  Vector probs = grbm_hidden_conditional(stack.bottom, v);
  acts.push_back(probs);
  Vector input = sampled ? sample_bernoulli(probs, *rng) : probs;
  for (const auto& rbm : stack.upper) {
    probs = rbm_hidden_conditional(rbm, input);
    acts.push_back(probs);
    input = sampled ? sample_bernoulli(probs, *rng) : probs;
  }
  return acts;
}

Vector dbn_topdown_sample(const DbnStack& stack, int gibbs_iters,
                          std::mt19937_64& rng, bool sample_visible) {
  if (gibbs_iters < 1) throw std::invalid_argument("gibbs_iters must be >= 1");
  stack.validate();

  Vector below;  // binary state of the layer under the bottom-most upper RBM
  if (stack.upper.empty()) {
    // The GRBM is the top pair: alternate v <-> h, keep the final h.
    const GrbmParams& g = stack.bottom;
    Vector h = sample_bernoulli(
        g.hidden_bias.unaryExpr([](double t) { return logistic(t); }), rng);
    for (int it = 0; it < gibbs_iters; ++it) {
      GaussianMoments m = grbm_visible_conditional(g, h);
      Vector v = sample_gaussian(m.mean, m.variance, rng);
      h = sample_bernoulli(grbm_hidden_conditional(g, v), rng);
    }
    GaussianMoments m = grbm_visible_conditional(g, h);
    return sample_visible ? sample_gaussian(m.mean, m.variance, rng) : m.mean;
  }

  const RbmParams& top = stack.upper.back();
  Vector h = sample_bernoulli(
      top.hidden_bias.unaryExpr([](double t) { return logistic(t); }), rng);
  for (int it = 0; it < gibbs_iters; ++it) {
    Vector v = sample_bernoulli(rbm_visible_conditional(top, h), rng);
    h = sample_bernoulli(rbm_hidden_conditional(top, v), rng);
  }
  below = sample_bernoulli(rbm_visible_conditional(top, h), rng);

  // Directed down-pass through the intermediate RBMs.
  for (int k = static_cast<int>(stack.upper.size()) - 2; k >= 0; --k)
    below = sample_bernoulli(rbm_visible_conditional(stack.upper[k], below), rng);

  GaussianMoments m = grbm_visible_conditional(stack.bottom, below);
  return sample_visible ? sample_gaussian(m.mean, m.variance, rng) : m.mean;
}

}  // namespace dln
