#include "dln/posterior.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dln/errors.hpp"
#include "dln/parallel.hpp"
#include "dln/rng.hpp"

namespace dln {

void DlnModel::validate() const {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("model geometry unset");
  albedo_prior.validate();
  normal_prior.validate();
  lighting.validate();
  noise.validate();
  if (albedo_prior.n_visible() != n_pixels())
    throw std::invalid_argument("albedo prior size != pixel count");
  if (normal_prior.n_visible() != 3 * n_pixels())
    throw std::invalid_argument("normal prior size != 3 * pixel count");
  if (static_cast<int>(noise.sigma2.size()) != n_pixels())
    throw std::invalid_argument("noise size != pixel count");
  if (!std::isfinite(eta) || eta < 0)
    throw std::invalid_argument("eta must be finite and >= 0");
}

DlnModel DlnModel::flat(int height, int width, double sigma_v, double eta,
                        int n_hidden_albedo, int n_hidden_normal,
                        double albedo_bias) {
  if (height <= 0 || width <= 0 || sigma_v <= 0)
    throw std::invalid_argument("flat model needs positive geometry and noise");
  const int n = height * width;
  DlnModel m;
  m.height = height;
  m.width = width;
  m.eta = eta;
  m.albedo_prior.bottom = GrbmParams::zeros(n, n_hidden_albedo);
  m.albedo_prior.bottom.visible_bias.setConstant(albedo_bias);
  m.normal_prior.bottom = GrbmParams::zeros(3 * n, n_hidden_normal);
  for (int i = 0; i < n; ++i) m.normal_prior.bottom.visible_bias[3 * i + 2] = 1.0;
  m.lighting.mean = Eigen::Vector3d(0, 0, 1);
  m.noise.sigma2 = Vector::Constant(n, sigma_v * sigma_v);
  return m;
}

namespace {

// Bottom hidden layer exactly, then an up-pass through the stack and one
// Gibbs alternation confined to the top RBM. The bottom sample is never
// overwritten by the refresh.
void refresh_stack(const DbnStack& stack, const Vector& v, Vector& h,
                   std::vector<Vector>& upper, std::mt19937_64 rng) {
  h = sample_bernoulli(grbm_hidden_conditional(stack.bottom, v), rng);
  const int k_upper = static_cast<int>(stack.upper.size());
  upper.resize(k_upper);
  const Vector* below = &h;
  for (int k = 0; k < k_upper; ++k) {
    upper[k] = sample_bernoulli(rbm_hidden_conditional(stack.upper[k], *below), rng);
    below = &upper[k];
  }
  if (k_upper >= 2) {
    const RbmParams& top = stack.upper[k_upper - 1];
    upper[k_upper - 2] =
        sample_bernoulli(rbm_visible_conditional(top, upper[k_upper - 1]), rng);
    upper[k_upper - 1] =
        sample_bernoulli(rbm_hidden_conditional(top, upper[k_upper - 2]), rng);
  }
}

}  // namespace

void sample_hidden(const DlnModel& m, PosteriorState& st, std::uint64_t seed) {
  const std::uint64_t sweep = static_cast<std::uint64_t>(st.iteration);
  refresh_stack(m.albedo_prior, st.latents.albedo, st.h, st.h_upper,
                make_stream(seed, sweep, 1, 0));
  refresh_stack(m.normal_prior, normals_to_vec(st.latents.normals), st.g,
                st.g_upper, make_stream(seed, sweep, 1, 1));
}

void sample_albedo(const DlnModel& m, PosteriorState& st, const ImageStack& V,
                   std::uint64_t seed, int threads) {
  const GrbmParams& prior = m.albedo_prior.bottom;
  const int n = m.n_pixels();
  const int n_img = V.n_images();
  const Vector wh = prior.weights * st.h;
  const Matrix S = shading(st.latents.normals, st.latents.lights);
  const std::uint64_t sweep = static_cast<std::uint64_t>(st.iteration);
  Vector& a = st.latents.albedo;

  parallel_for(n, threads, [&](int i) {
    const double sa2 = prior.visible_var[i];
    const double sv2 = m.noise.sigma2[i];
    const double phi = prior.visible_bias[i] + sa2 * wh[i];
    double s_sq = 0.0, s_dot_v = 0.0;
    for (int p = 0; p < n_img; ++p) {
      s_sq += S(i, p) * S(i, p);
      s_dot_v += S(i, p) * V.pixels(i, p);
    }
    const double denom = sa2 * s_sq + sv2;
    const double mean = (sa2 * s_dot_v + phi * sv2) / denom;
    const double var = sa2 * sv2 / denom;
    auto rng = make_stream(seed, sweep, 2, static_cast<std::uint64_t>(i));
    a[i] = mean + std::sqrt(var) * draw_normal(rng);
  });
}

void sample_lights(const DlnModel& m, PosteriorState& st, const ImageStack& V,
                   std::uint64_t seed) {
  const int n_img = V.n_images();
  if (n_img == 0) return;  // nothing to sample on the prior-only path
  const std::uint64_t sweep = static_cast<std::uint64_t>(st.iteration);

  // rows m_i = a_i n_i; precision-weighted copy for the sums over pixels
  Matrix M = st.latents.normals;
  M.array().colwise() *= st.latents.albedo.array();
  Matrix Mw = M.array().colwise() / m.noise.sigma2.array();

  Eigen::Matrix3d lam = m.lighting.precision + Mw.transpose() * M;
  lam = 0.5 * (lam + lam.transpose());  // symmetrize roundoff

  Eigen::LLT<Eigen::Matrix3d> llt(lam);
  if (llt.info() != Eigen::Success) {
    lam += 1e-10 * Eigen::Matrix3d::Identity();
    llt.compute(lam);
    ++st.diag.lighting_jitter_events;
    if (llt.info() != Eigen::Success)
      throw NumericError("lighting conditional precision is not positive definite");
  }

  const Eigen::Vector3d lam_mu = m.lighting.precision * m.lighting.mean;
  for (int p = 0; p < n_img; ++p) {
    const Eigen::Vector3d rhs = lam_mu + Mw.transpose() * V.pixels.col(p);
    const Eigen::Vector3d mean = llt.solve(rhs);
    auto rng = make_stream(seed, sweep, 3, static_cast<std::uint64_t>(p));
    Eigen::Vector3d z;  // explicit order: ctor-argument evaluation is unspecified
    z[0] = draw_normal(rng);
    z[1] = draw_normal(rng);
    z[2] = draw_normal(rng);
    // lam = R'R with R = matrixU(); x = mean + R^-1 z has covariance lam^-1
    st.latents.lights.col(p) = mean + llt.matrixU().solve(z);
  }
}

NormalQuadratic normal_quadratic(const DlnModel& m, const PosteriorState& st,
                                 const ImageStack& V, int pixel) {
  if (pixel < 0 || pixel >= m.n_pixels())
    throw std::invalid_argument("pixel index out of range");
  const GrbmParams& prior = m.normal_prior.bottom;
  const Eigen::Vector3d s2 = prior.visible_var.segment(3 * pixel, 3);
  const Eigen::Vector3d d = prior.visible_bias.segment(3 * pixel, 3);
  const Eigen::Vector3d ug = prior.weights.middleRows(3 * pixel, 3) * st.g;
  const double a = st.latents.albedo[pixel];
  const double sv2 = m.noise.sigma2[pixel];
  const Matrix& L = st.latents.lights;

  NormalQuadratic q;
  q.a_plus_d = (a * a / sv2) * (L * L.transpose());
  q.a_plus_d += s2.cwiseInverse().asDiagonal();
  // D phi^g with phi^g = d + sigma^2 (Ug) collapses to d/sigma^2 + Ug
  q.r = (a / sv2) * (L * V.pixels.row(pixel).transpose()) +
        Eigen::Vector3d(d.cwiseQuotient(s2)) + ug;
  q.eta = m.eta;
  return q;
}

EnergyTarget normal_energy(const DlnModel& m, const PosteriorState& st,
                           const ImageStack& V, int pixel) {
  const NormalQuadratic q = normal_quadratic(m, st, V, pixel);
  EnergyTarget t;
  t.dim = 3;
  t.energy = [q](const Eigen::VectorXd& x) { return q.energy(x); };
  t.gradient = [q](const Eigen::VectorXd& x) { return q.gradient(x); };
  return t;
}

double sample_normals(const DlnModel& m, PosteriorState& st,
                      const ImageStack& V, const HmcConfig& cfg,
                      std::uint64_t seed, int threads) {
  const GrbmParams& prior = m.normal_prior.bottom;
  const int n = m.n_pixels();
  const Vector ug_all = prior.weights * st.g;
  const Eigen::Matrix3d ll_t =
      st.latents.lights * st.latents.lights.transpose();
  // column i holds sum_p v_ip l_p
  const Matrix vl = st.latents.lights * V.pixels.transpose();
  const std::uint64_t sweep = static_cast<std::uint64_t>(st.iteration);
  Matrix& normals = st.latents.normals;
  std::vector<double> acc(static_cast<size_t>(n), 0.0);

  parallel_for(n, threads, [&](int i) {
    const Eigen::Vector3d s2 = prior.visible_var.segment(3 * i, 3);
    const Eigen::Vector3d d = prior.visible_bias.segment(3 * i, 3);
    const double a = st.latents.albedo[i];
    const double sv2 = m.noise.sigma2[i];
    NormalQuadratic q;
    q.a_plus_d = (a * a / sv2) * ll_t;
    q.a_plus_d += s2.cwiseInverse().asDiagonal();
    q.r = (a / sv2) * vl.col(i) + Eigen::Vector3d(d.cwiseQuotient(s2)) +
          Eigen::Vector3d(ug_all.segment(3 * i, 3));
    q.eta = m.eta;
    auto rng = make_stream(seed, sweep, 4, static_cast<std::uint64_t>(i));
    auto res = hmc_sample(q, Eigen::Vector3d(normals.row(i).transpose()), cfg, rng);
    normals.row(i) = res.state.transpose();
    acc[static_cast<size_t>(i)] = res.acceptance_rate;
  });

  double mean_acc = 0.0;
  for (double v : acc) mean_acc += v;  // sequential, thread-count independent
  mean_acc = n > 0 ? mean_acc / n : 0.0;
  st.diag.hmc_acceptance = mean_acc;
  return mean_acc;
}

double dln_energy(const DlnModel& m, const PosteriorState& st,
                  const ImageStack& V) {
  double e = grbm_energy(m.albedo_prior.bottom, st.latents.albedo, st.h) +
             grbm_energy(m.normal_prior.bottom,
                         normals_to_vec(st.latents.normals), st.g);
  const Vector* below = &st.h;
  for (size_t k = 0;
       k < st.h_upper.size() && k < m.albedo_prior.upper.size(); ++k) {
    e += rbm_energy(m.albedo_prior.upper[k], *below, st.h_upper[k]);
    below = &st.h_upper[k];
  }
  below = &st.g;
  for (size_t k = 0;
       k < st.g_upper.size() && k < m.normal_prior.upper.size(); ++k) {
    e += rbm_energy(m.normal_prior.upper[k], *below, st.g_upper[k]);
    below = &st.g_upper[k];
  }

  const Vector row_sq = st.latents.normals.rowwise().squaredNorm();
  e += 0.5 * m.eta * (row_sq.array() - 1.0).square().sum();

  for (int p = 0; p < st.latents.lights.cols(); ++p) {
    const Eigen::Vector3d diff =
        Eigen::Vector3d(st.latents.lights.col(p)) - m.lighting.mean;
    e += 0.5 * diff.dot(m.lighting.precision * diff);
  }

  if (V.n_images() > 0) {
    const Matrix resid =
        V.pixels - st.latents.albedo.asDiagonal() *
                       shading(st.latents.normals, st.latents.lights);
    e += 0.5 *
         (resid.array().square().colwise() * m.noise.sigma2.array().inverse())
             .sum();
  }
  return e;
}

PosteriorState init_state(const DlnModel& m, const ImageStack& V,
                          InferInit init) {
  m.validate();
  V.validate();
  if (V.height != m.height || V.width != m.width)
    throw DataError("image stack geometry does not match the model");

  PosteriorState st;
  const int n = m.n_pixels();
  const int n_img = V.n_images();
  st.h = Vector::Zero(m.albedo_prior.bottom.n_hidden());
  st.g = Vector::Zero(m.normal_prior.bottom.n_hidden());

  if (init == InferInit::Svd && n_img >= 3) {
    const PhotometricFactors f = svd_photometric_stereo(V);
    Matrix M = f.M;
    Matrix L = f.L;

    // The factorization gauge is an arbitrary invertible 3x3 map that differs
    // per stack, so pin it deterministically: stacks over the same geometry
    // must seed the same state or cross-subject averaging of chains is mush.
    // Symmetric-form fit: find B with u' B u ~= 1 over constraint vectors u.
    auto fit_quadric = [](const std::vector<Eigen::RowVector3d>& cons)
        -> std::optional<Eigen::Matrix3d> {
      if (cons.size() < 6) return std::nullopt;
      Eigen::Matrix<double, 6, 6> ata = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> atb = Eigen::Matrix<double, 6, 1>::Zero();
      for (const auto& u : cons) {
        Eigen::Matrix<double, 6, 1> d;
        d << u[0] * u[0], u[1] * u[1], u[2] * u[2], 2 * u[0] * u[1],
            2 * u[0] * u[2], 2 * u[1] * u[2];
        ata += d * d.transpose();
        atb += d;
      }
      const Eigen::Matrix<double, 6, 1> beta = ata.ldlt().solve(atb);
      Eigen::Matrix3d B;
      B << beta[0], beta[3], beta[4], beta[3], beta[1], beta[5], beta[4],
          beta[5], beta[2];
      if (!B.allFinite()) return std::nullopt;
      return B;
    };

    // Preferred: unit-norm lights (the quadric in the lights is albedo-blind,
    // and six or more generic images determine it exactly, leaving M correct
    // up to pure rotation). Fallback: unit-norm rows of M, a compromise when
    // albedo varies. Degenerate fits keep the raw gauge; renders are
    // preserved in every branch because the other factor absorbs the inverse.
    bool pinned = false;
    if (n_img >= 6) {
      std::vector<Eigen::RowVector3d> cons;
      cons.reserve(static_cast<size_t>(n_img));
      for (int p = 0; p < n_img; ++p) cons.emplace_back(L.col(p).transpose());
      if (auto B = fit_quadric(cons)) {
        Eigen::LLT<Eigen::Matrix3d> llt(*B);
        if (llt.info() == Eigen::Success) {
          const Eigen::Matrix3d c = llt.matrixL();  // B = c c', T^-1 = c'
          M = M * Eigen::Matrix3d(c.transpose().inverse());
          L = c.transpose() * L;
          pinned = true;
        }
      }
    }
    if (!pinned) {
      const Vector rown = M.rowwise().norm();
      const double big = rown.maxCoeff();
      std::vector<Eigen::RowVector3d> cons;
      cons.reserve(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        if (rown[i] > 1e-9 * big) cons.emplace_back(M.row(i));
      if (auto B = fit_quadric(cons)) {
        Eigen::LLT<Eigen::Matrix3d> llt(*B);
        if (llt.info() == Eigen::Success) {  // B = T T'
          const Eigen::Matrix3d T = llt.matrixL();
          M = M * T;
          L = Eigen::Matrix3d(T).triangularView<Eigen::Lower>().solve(L);
        }
      }
    }

    st.latents.albedo = M.rowwise().norm();
    st.latents.normals.resize(n, 3);
    for (int i = 0; i < n; ++i) {
      const double len = st.latents.albedo[i];
      st.latents.normals.row(i) =
          len > 1e-12 ? M.row(i) / len : Eigen::RowVector3d::Zero().eval();
    }

    // The leftover orthogonal freedom (rotations/reflections) goes away by
    // procrustes onto the pixel frame (x, y, 1) -- the same frame the scene
    // generator uses, so sphere-like fields land near their natural pose and
    // camera-facing comes out automatically. Dark rows carry no direction:
    // they sit out the fit (zeroed above) and take the upright default after.
    Matrix C(n, 3);
    for (int yy = 0; yy < m.height; ++yy)
      for (int xx = 0; xx < m.width; ++xx)
        C.row(yy * m.width + xx) << (2.0 * xx + 1.0) / m.width - 1.0,
            (2.0 * yy + 1.0) / m.height - 1.0, 1.0;
    Eigen::JacobiSVD<Eigen::Matrix3d> ps(
        Eigen::Matrix3d(st.latents.normals.transpose() * C),
        Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d R = ps.matrixU() * ps.matrixV().transpose();
    st.latents.normals = st.latents.normals * R;
    st.latents.lights = R.transpose() * L;
    for (int i = 0; i < n; ++i)
      if (!(st.latents.albedo[i] > 1e-12))
        st.latents.normals.row(i) = Eigen::RowVector3d(0, 0, 1);
  } else {
    st.latents.albedo = m.albedo_prior.bottom.visible_bias;
    st.latents.normals = vec_to_normals(m.normal_prior.bottom.visible_bias);
    st.latents.lights = m.lighting.mean.replicate(1, n_img);
  }
  return st;
}

InferResult infer(const DlnModel& m, const ImageStack& V,
                  const InferOptions& opt) {
  if (opt.iters < 0) throw std::invalid_argument("iters must be >= 0");
  opt.hmc.validate();
  InferResult out;
  out.state = init_state(m, V, opt.init);
  PosteriorState& st = out.state;
  const int threads = opt.threads > 0 ? opt.threads : default_threads();
  out.acceptance_per_sweep.reserve(static_cast<size_t>(opt.iters));

  for (int c : opt.sweep_order)
    if (c < 1 || c > 4)
      throw std::invalid_argument("sweep_order entries must be 1..4");

  for (int it = 1; it <= opt.iters; ++it) {
    st.iteration = it;
    double acc = st.diag.hmc_acceptance;
    for (int c : opt.sweep_order) {
      switch (c) {
        case 1: sample_hidden(m, st, opt.seed); break;
        case 2: sample_albedo(m, st, V, opt.seed, threads); break;
        case 3: sample_lights(m, st, V, opt.seed); break;
        case 4: acc = sample_normals(m, st, V, opt.hmc, opt.seed, threads); break;
      }
    }
    out.acceptance_per_sweep.push_back(acc);
    if (!st.latents.albedo.allFinite() || !st.latents.normals.allFinite() ||
        !st.latents.lights.allFinite())
      throw NumericError("posterior state went non-finite at sweep " +
                         std::to_string(it));
    st.diag.energy_trace.push_back(dln_energy(m, st, V));
    if (opt.record_trace) out.trace.push_back(st.latents);
    if (opt.on_sweep) opt.on_sweep(it, st);
  }
  return out;
}

SceneLatents trace_mean(const std::vector<SceneLatents>& trace, int burn_in) {
  if (burn_in < 0) burn_in = 0;
  if (trace.empty() || burn_in >= static_cast<int>(trace.size()))
    throw std::invalid_argument("trace_mean: no samples after burn-in");
  SceneLatents acc = trace[static_cast<size_t>(burn_in)];
  for (size_t t = static_cast<size_t>(burn_in) + 1; t < trace.size(); ++t) {
    acc.albedo += trace[t].albedo;
    acc.normals += trace[t].normals;
    acc.lights += trace[t].lights;
  }
  const double k = static_cast<double>(trace.size() - burn_in);
  acc.albedo /= k;
  acc.normals /= k;
  acc.lights /= k;
  return acc;
}

}  // namespace dln
