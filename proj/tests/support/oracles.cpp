#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "dln/rng.hpp"

namespace oracle {

std::vector<Vector> enumerate_binary(int n) {
  std::vector<Vector> out;
  out.reserve(static_cast<size_t>(1) << n);
  for (std::uint64_t bits = 0; bits < (1ULL << n); ++bits) {
    Vector v(n);
    for (int j = 0; j < n; ++j) v[j] = (bits >> j) & 1 ? 1.0 : 0.0;
    out.push_back(v);
  }
  return out;
}

double logsumexp(const std::vector<double>& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double grbm_energy(const dln::GrbmParams& p, const Vector& v, const Vector& h) {
  double e = 0.0;
  for (int i = 0; i < p.n_visible(); ++i) {
    const double d = v[i] - p.visible_bias[i];
    e += d * d / (2.0 * p.visible_var[i]);
  }
  for (int j = 0; j < p.n_hidden(); ++j) e -= p.hidden_bias[j] * h[j];
  for (int i = 0; i < p.n_visible(); ++i)
    for (int j = 0; j < p.n_hidden(); ++j) e -= v[i] * p.weights(i, j) * h[j];
  return e;
}

double rbm_energy(const dln::RbmParams& p, const Vector& v, const Vector& h) {
  double e = 0.0;
  for (int i = 0; i < p.n_visible(); ++i) e -= p.visible_bias[i] * v[i];
  for (int j = 0; j < p.n_hidden(); ++j) e -= p.hidden_bias[j] * h[j];
  for (int i = 0; i < p.n_visible(); ++i)
    for (int j = 0; j < p.n_hidden(); ++j) e -= v[i] * p.weights(i, j) * h[j];
  return e;
}

namespace {

// p(h_j = 1 | v) from any joint energy over (v, h), h enumerated
Vector hidden_by_enumeration(int n_hid,
                             const std::function<double(const Vector&)>& energy_of_h) {
  const auto hs = enumerate_binary(n_hid);
  std::vector<double> logw(hs.size());
  for (size_t k = 0; k < hs.size(); ++k) logw[k] = -energy_of_h(hs[k]);
  const double logz = logsumexp(logw);
  Vector probs = Vector::Zero(n_hid);
  for (size_t k = 0; k < hs.size(); ++k) {
    const double pk = std::exp(logw[k] - logz);
    for (int j = 0; j < n_hid; ++j)
      if (hs[k][j] > 0.5) probs[j] += pk;
  }
  return probs;
}

}  // namespace

Vector grbm_hidden_by_enumeration(const dln::GrbmParams& p, const Vector& v) {
  return hidden_by_enumeration(
      p.n_hidden(), [&](const Vector& h) { return oracle::grbm_energy(p, v, h); });
}

Vector rbm_hidden_by_enumeration(const dln::RbmParams& p, const Vector& v) {
  return hidden_by_enumeration(
      p.n_hidden(), [&](const Vector& h) { return oracle::rbm_energy(p, v, h); });
}

Vector rbm_visible_by_enumeration(const dln::RbmParams& p, const Vector& h) {
  return hidden_by_enumeration(
      p.n_visible(), [&](const Vector& v) { return oracle::rbm_energy(p, v, h); });
}

double grbm_free_energy_by_enumeration(const dln::GrbmParams& p,
                                       const Vector& v) {
  const auto hs = enumerate_binary(p.n_hidden());
  std::vector<double> logw(hs.size());
  for (size_t k = 0; k < hs.size(); ++k) logw[k] = -oracle::grbm_energy(p, v, hs[k]);
  return -logsumexp(logw);
}

double rbm_free_energy_by_enumeration(const dln::RbmParams& p, const Vector& v) {
  const auto hs = enumerate_binary(p.n_hidden());
  std::vector<double> logw(hs.size());
  for (size_t k = 0; k < hs.size(); ++k) logw[k] = -oracle::rbm_energy(p, v, hs[k]);
  return -logsumexp(logw);
}

std::vector<double> grbm_hidden_marginal(const dln::GrbmParams& p) {
  const auto hs = enumerate_binary(p.n_hidden());
  std::vector<double> logw(hs.size());
  for (size_t k = 0; k < hs.size(); ++k) {
    const Vector& h = hs[k];
    double lw = 0.0;
    for (int j = 0; j < p.n_hidden(); ++j) lw += p.hidden_bias[j] * h[j];
    for (int i = 0; i < p.n_visible(); ++i) {
      double t = 0.0;
      for (int j = 0; j < p.n_hidden(); ++j) t += p.weights(i, j) * h[j];
      lw += p.visible_bias[i] * t + 0.5 * p.visible_var[i] * t * t;
    }
    logw[k] = lw;
  }
  const double logz = logsumexp(logw);
  std::vector<double> probs(hs.size());
  for (size_t k = 0; k < hs.size(); ++k) probs[k] = std::exp(logw[k] - logz);
  return probs;
}

namespace {

size_t draw_categorical(const std::vector<double>& probs, std::mt19937_64& rng) {
  double u = dln::draw_uniform(rng);
  for (size_t k = 0; k < probs.size(); ++k) {
    u -= probs[k];
    if (u <= 0.0) return k;
  }
  return probs.size() - 1;
}

}  // namespace

Vector sample_exact_grbm(const dln::GrbmParams& p, std::mt19937_64& rng) {
  const auto probs = grbm_hidden_marginal(p);
  const auto hs = enumerate_binary(p.n_hidden());
  const Vector& h = hs[draw_categorical(probs, rng)];
  Vector v(p.n_visible());
  for (int i = 0; i < p.n_visible(); ++i) {
    double t = 0.0;
    for (int j = 0; j < p.n_hidden(); ++j) t += p.weights(i, j) * h[j];
    const double mean = p.visible_bias[i] + p.visible_var[i] * t;
    v[i] = mean + std::sqrt(p.visible_var[i]) * dln::draw_normal(rng);
  }
  return v;
}

double grbm_exact_loglik(const dln::GrbmParams& p, const Vector& v) {
  const auto hs = enumerate_binary(p.n_hidden());
  std::vector<double> logw(hs.size());
  for (size_t k = 0; k < hs.size(); ++k) {
    const Vector& h = hs[k];
    double lw = 0.0;
    for (int j = 0; j < p.n_hidden(); ++j) lw += p.hidden_bias[j] * h[j];
    for (int i = 0; i < p.n_visible(); ++i) {
      double t = 0.0;
      for (int j = 0; j < p.n_hidden(); ++j) t += p.weights(i, j) * h[j];
      lw += p.visible_bias[i] * t + 0.5 * p.visible_var[i] * t * t;
    }
    logw[k] = lw;
  }
  double log_z = logsumexp(logw);
  for (int i = 0; i < p.n_visible(); ++i)
    log_z += 0.5 * std::log(2.0 * M_PI * p.visible_var[i]);
  return -grbm_free_energy_by_enumeration(p, v) - log_z;
}

std::vector<double> rbm_visible_marginal(const dln::RbmParams& p) {
  const auto vs = enumerate_binary(p.n_visible());
  const auto hs = enumerate_binary(p.n_hidden());
  std::vector<double> logw(vs.size());
  for (size_t k = 0; k < vs.size(); ++k) {
    std::vector<double> per_h(hs.size());
    for (size_t q = 0; q < hs.size(); ++q) per_h[q] = -oracle::rbm_energy(p, vs[k], hs[q]);
    logw[k] = logsumexp(per_h);
  }
  const double logz = logsumexp(logw);
  std::vector<double> probs(vs.size());
  for (size_t k = 0; k < vs.size(); ++k) probs[k] = std::exp(logw[k] - logz);
  return probs;
}

Vector sample_exact_rbm_visible(const dln::RbmParams& p, std::mt19937_64& rng) {
  const auto probs = rbm_visible_marginal(p);
  const auto vs = enumerate_binary(p.n_visible());
  return vs[draw_categorical(probs, rng)];
}

double tv_distance(const std::vector<double>& p, const std::vector<double>& q) {
  double tv = 0.0;
  for (size_t k = 0; k < p.size(); ++k) tv += std::abs(p[k] - q[k]);
  return 0.5 * tv;
}

MeanSe batch_means(const std::vector<double>& chain, int n_batches) {
  MeanSe out;
  const int n = static_cast<int>(chain.size());
  n_batches = std::min(n_batches, std::max(2, n / 2));
  const int bs = n / n_batches;
  std::vector<double> bm;
  bm.reserve(static_cast<size_t>(n_batches));
  for (int b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (int k = b * bs; k < (b + 1) * bs; ++k) s += chain[static_cast<size_t>(k)];
    bm.push_back(s / bs);
  }
  for (double m : bm) out.mean += m;
  out.mean /= n_batches;
  double var = 0.0;
  for (double m : bm) var += (m - out.mean) * (m - out.mean);
  var /= (n_batches - 1);
  out.se = std::sqrt(var / n_batches);
  return out;
}

double golden_min(const std::function<double(double)>& f, double lo, double hi,
                  double tol) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

namespace {

Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                            Eigen::VectorXd x0, double scale, int iters) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> xs(static_cast<size_t>(n + 1), x0);
  for (int k = 0; k < n; ++k) xs[static_cast<size_t>(k + 1)][k] += scale;
  std::vector<double> fs(static_cast<size_t>(n + 1));
  for (int k = 0; k <= n; ++k) fs[static_cast<size_t>(k)] = f(xs[static_cast<size_t>(k)]);

  auto order = [&]() {
    std::vector<int> idx(static_cast<size_t>(n + 1));
    for (int k = 0; k <= n; ++k) idx[static_cast<size_t>(k)] = k;
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return fs[static_cast<size_t>(a)] < fs[static_cast<size_t>(b)]; });
    std::vector<Eigen::VectorXd> nx(xs.size());
    std::vector<double> nf(fs.size());
    for (int k = 0; k <= n; ++k) {
      nx[static_cast<size_t>(k)] = xs[static_cast<size_t>(idx[static_cast<size_t>(k)])];
      nf[static_cast<size_t>(k)] = fs[static_cast<size_t>(idx[static_cast<size_t>(k)])];
    }
    xs.swap(nx);
    fs.swap(nf);
  };

  for (int it = 0; it < iters; ++it) {
    order();
    if (std::abs(fs.back() - fs.front()) <
        1e-15 * (1.0 + std::abs(fs.front())))
      break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k) centroid += xs[static_cast<size_t>(k)];
    centroid /= n;

    const Eigen::VectorXd xr = centroid + (centroid - xs.back());
    const double fr = f(xr);
    if (fr < fs.front()) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs.back());
      const double fe = f(xe);
      if (fe < fr) {
        xs.back() = xe;
        fs.back() = fe;
      } else {
        xs.back() = xr;
        fs.back() = fr;
      }
    } else if (fr < fs[static_cast<size_t>(n - 1)]) {
      xs.back() = xr;
      fs.back() = fr;
    } else {
      const Eigen::VectorXd xc = centroid + 0.5 * (xs.back() - centroid);
      const double fc = f(xc);
      if (fc < fs.back()) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        for (int k = 1; k <= n; ++k) {
          xs[static_cast<size_t>(k)] =
              xs.front() + 0.5 * (xs[static_cast<size_t>(k)] - xs.front());
          fs[static_cast<size_t>(k)] = f(xs[static_cast<size_t>(k)]);
        }
      }
    }
  }
  order();
  return xs.front();
}

}  // namespace

Eigen::VectorXd minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                         Eigen::VectorXd x0, double scale, int nm_iters,
                         int polish_cycles) {
  Eigen::VectorXd x = nelder_mead(f, std::move(x0), scale, nm_iters);
  // coordinate-wise golden-section polish with a shrinking bracket
  double radius = scale * 0.25;
  for (int cycle = 0; cycle < polish_cycles; ++cycle) {
    for (int k = 0; k < x.size(); ++k) {
      Eigen::VectorXd probe = x;
      const double best = golden_min(
          [&](double t) {
            probe[k] = t;
            return f(probe);
          },
          x[k] - radius, x[k] + radius, 1e-14);
      x[k] = best;
    }
    radius = std::max(radius * 0.7, 1e-9);
  }
  return x;
}

}  // namespace oracle
