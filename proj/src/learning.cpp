#include "dln/learning.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dln/errors.hpp"
#include "dln/parallel.hpp"
#include "dln/rng.hpp"

namespace dln {

namespace {

// role tags namespacing the RNG streams derived from TrainConfig::seed
constexpr std::uint64_t kRoleInit = 0x11;
constexpr std::uint64_t kRolePretrain = 0x22;
constexpr std::uint64_t kRoleEStep = 0x33;
constexpr std::uint64_t kRoleMStep = 0x44;

void check_subjects(const std::vector<SubjectBatch>& subjects, int& height,
                    int& width, int& total_images) {
  if (subjects.empty()) throw DataError("no training subjects");
  subjects.front().images.validate();
  height = subjects.front().images.height;
  width = subjects.front().images.width;
  total_images = 0;
  for (const auto& s : subjects) {
    s.images.validate();
    if (s.images.height != height || s.images.width != width)
      throw DataError("subjects disagree on image geometry");
    total_images += s.images.n_images();
  }
  if (total_images == 0) throw DataError("subjects contain no images");
}

Matrix stack_images(const std::vector<SubjectBatch>& subjects, int n_pixels,
                    int total_images) {
  Matrix corpus(n_pixels, total_images);
  int col = 0;
  for (const auto& s : subjects) {
    const int p = s.images.n_images();
    corpus.middleCols(col, p) = s.images.pixels;
    col += p;
  }
  return corpus;
}

int draw_shift(std::mt19937_64& rng, int max_abs) {
  const int span = 2 * max_abs + 1;
  const int raw = static_cast<int>(std::floor(draw_uniform(rng) * span));
  return std::clamp(raw, 0, span - 1) - max_abs;
}

}  // namespace

void TrainConfig::validate() const {
  if (em_iters < 0 || e_step_sweeps < 0 || cd_steps < 1 || pretrain_epochs < 0)
    throw std::invalid_argument("iteration counts must be non-negative");
  if (rate_albedo < 0 || rate_normal < 0 || !std::isfinite(eta) || eta < 0)
    throw std::invalid_argument("rates must be non-negative");
  if (init_noise_sigma2 <= 0)
    throw std::invalid_argument("initial noise variance must be positive");
  if (translation_augment < 0)
    throw std::invalid_argument("translation range must be non-negative");
  if (converge_window < 1)
    throw std::invalid_argument("invalid convergence settings");
  if (n_hidden_albedo < 1 || n_hidden_normal < 1)
    throw std::invalid_argument("priors need at least one hidden unit");
  hmc.validate();
}

DlnModel init_model(const std::vector<SubjectBatch>& subjects,
                    const TrainConfig& cfg) {
  cfg.validate();
  int height = 0, width = 0, total = 0;
  check_subjects(subjects, height, width, total);
  const int n = height * width;

  auto rng = make_stream(cfg.seed, kRoleInit, 0);
  DlnModel m;
  m.height = height;
  m.width = width;
  m.eta = cfg.eta;
  m.albedo_prior.bottom = GrbmParams::random_init(n, cfg.n_hidden_albedo, rng);
  Vector mean = Vector::Zero(n);
  for (const auto& s : subjects) mean += s.images.pixels.rowwise().sum();
  m.albedo_prior.bottom.visible_bias = mean / total;

  m.normal_prior.bottom =
      GrbmParams::random_init(3 * n, cfg.n_hidden_normal, rng);
  for (int i = 0; i < n; ++i)
    m.normal_prior.bottom.visible_bias[3 * i + 2] = 1.0;

  m.lighting.mean = Eigen::Vector3d(0, 0, 1);
  m.lighting.precision = Eigen::Matrix3d::Identity();
  m.noise.sigma2 = Vector::Constant(n, cfg.init_noise_sigma2);
  m.validate();
  return m;
}

GrbmParams pretrain_albedo_prior(const Matrix& corpus, const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.rows() == 0 || corpus.cols() == 0)
    throw DataError("empty pretraining corpus");
  auto rng = make_stream(cfg.seed, kRolePretrain, 0);
  GrbmParams p = GrbmParams::random_init(static_cast<int>(corpus.rows()),
                                         cfg.n_hidden_albedo, rng);
  p.visible_bias = corpus.rowwise().mean();
  // sigma^2 from the corpus itself: held fixed through CD, so a unit default
  // would leave small-scale structure invisible to the hidden units
  p.visible_var =
      (corpus.colwise() - p.visible_bias).rowwise().squaredNorm() /
      static_cast<double>(corpus.cols());
  p.visible_var = p.visible_var.cwiseMax(kVarianceFloor);
  const CdConfig cd{cfg.cd_steps, cfg.rate_albedo, 0.0, false};
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch)
    grbm_cd_update(p, corpus, cd, rng);
  return p;
}

std::uint64_t subject_chain_seed(std::uint64_t seed, int em_iter,
                                 const std::string& subject_id) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a over the id
  for (unsigned char ch : subject_id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return mix64(mix64(mix64(seed, kRoleEStep), static_cast<std::uint64_t>(em_iter)), h);
}

PosteriorState e_step(const DlnModel& m, const SubjectBatch& batch,
                      const TrainConfig& cfg, std::uint64_t seed) {
  InferOptions opt;
  opt.iters = cfg.e_step_sweeps;
  opt.hmc = cfg.hmc;
  opt.seed = seed;
  // start chains at the photometric-stereo solution (Bias fallback under
  // three images): short chains from the bias never cross the gauge manifold,
  // and the M-step would average five differently-gauged fields into mush
  opt.init = InferInit::Svd;
  opt.threads = 1;  // parallelism lives at the subject level
  opt.record_trace = cfg.e_step_average;
  InferResult res = infer(m, batch.images, opt);
  if (cfg.e_step_average && !res.trace.empty())
    res.state.latents = trace_mean(res.trace, cfg.e_step_sweeps / 2);
  return std::move(res.state);
}

MStepDiagnostics m_step(DlnModel& m, const std::vector<SubjectBatch>& subjects,
                        const std::vector<PosteriorState>& samples,
                        const TrainConfig& cfg, std::uint64_t seed) {
  if (samples.empty() || samples.size() != subjects.size())
    throw std::invalid_argument("m_step needs one sample per subject");
  const int n = m.n_pixels();
  const int n_subj = static_cast<int>(subjects.size());
  MStepDiagnostics diag;

  // CD on the albedo prior, samples as columns
  Matrix a_batch(n, n_subj);
  for (int s = 0; s < n_subj; ++s) a_batch.col(s) = samples[s].latents.albedo;
  const CdConfig cd_a{cfg.cd_steps, cfg.rate_albedo, 0.0, false};
  auto rng_a = make_stream(seed, kRoleMStep, 0);
  diag.albedo_grad_norm =
      grbm_cd_update(m.albedo_prior.bottom, a_batch, cd_a, rng_a)
          .grad_norm_weights;

  // CD on the normal prior; each map optionally doubled by a random shift
  const int t = cfg.translation_augment;
  Matrix n_batch(3 * n, t > 0 ? 2 * n_subj : n_subj);
  auto rng_t = make_stream(seed, kRoleMStep, 1);
  for (int s = 0; s < n_subj; ++s) {
    const Vector v = normals_to_vec(samples[s].latents.normals);
    n_batch.col(s) = v;
    if (t > 0) {
      const int dx = draw_shift(rng_t, t);
      const int dy = draw_shift(rng_t, t);
      n_batch.col(n_subj + s) = translate_field(v, m.height, m.width, 3, dx, dy);
    }
  }
  const CdConfig cd_n{cfg.cd_steps, cfg.rate_normal, 0.0, false};
  auto rng_n = make_stream(seed, kRoleMStep, 2);
  diag.normal_grad_norm =
      grbm_cd_update(m.normal_prior.bottom, n_batch, cd_n, rng_n)
          .grad_norm_weights;

  // closed-form ML updates; all reductions sequential over subjects
  Vector resid_sq = Vector::Zero(n);
  int total_images = 0;
  std::vector<Eigen::Vector3d> lights;
  for (int s = 0; s < n_subj; ++s) {
    const ImageStack& V = subjects[s].images;
    const SceneLatents& lat = samples[s].latents;
    const int p_cnt = V.n_images();
    if (static_cast<int>(lat.lights.cols()) != p_cnt)
      throw std::invalid_argument("sample light count does not match images");
    if (p_cnt == 0) continue;
    const Matrix resid =
        V.pixels - lat.albedo.asDiagonal() * shading(lat.normals, lat.lights);
    resid_sq += resid.array().square().matrix().rowwise().sum();
    total_images += p_cnt;
    for (int p = 0; p < p_cnt; ++p) lights.emplace_back(lat.lights.col(p));
  }
  if (total_images > 0) {
    m.noise.sigma2 = (resid_sq / total_images).cwiseMax(kVarianceFloor);
    diag.recon_error = resid_sq.sum() / (static_cast<double>(total_images) * n);
  }

  const int n_lights = static_cast<int>(lights.size());
  if (n_lights >= 1) {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    for (const auto& l : lights) mu += l;
    mu /= n_lights;
    m.lighting.mean = mu;
    if (n_lights >= 4) {  // too few samples leave the precision untouched
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& l : lights) cov += (l - mu) * (l - mu).transpose();
      cov /= n_lights;
      cov += 1e-8 * Eigen::Matrix3d::Identity();
      Eigen::LLT<Eigen::Matrix3d> llt(cov);
      if (llt.info() != Eigen::Success)
        throw NumericError("light covariance is not positive definite");
      Eigen::Matrix3d prec = llt.solve(Eigen::Matrix3d::Identity());
      m.lighting.precision = 0.5 * (prec + prec.transpose());
    }
  }

  m.validate();
  return diag;
}

TrainResult train(const std::vector<SubjectBatch>& subjects,
                  const TrainConfig& cfg,
                  const std::function<void(int, const DlnModel&)>& checkpoint,
                  const GrbmParams* albedo_prior_init) {
  cfg.validate();
  TrainResult out;
  out.model = init_model(subjects, cfg);
  if (albedo_prior_init) {
    if (albedo_prior_init->n_visible() != out.model.n_pixels())
      throw DataError("pretrained albedo prior does not match the image size");
    albedo_prior_init->validate();
    out.model.albedo_prior.bottom = *albedo_prior_init;
  } else if (cfg.pretrain_epochs > 0) {
    int height = 0, width = 0, total = 0;
    check_subjects(subjects, height, width, total);
    out.model.albedo_prior.bottom = pretrain_albedo_prior(
        stack_images(subjects, height * width, total), cfg);
  }

  const int threads = cfg.threads > 0 ? cfg.threads : default_threads();
  const int n_subj = static_cast<int>(subjects.size());
  std::vector<PosteriorState> states(static_cast<size_t>(n_subj));

  for (int it = 1; it <= cfg.em_iters; ++it) {
    const DlnModel& snapshot = out.model;  // E-step reads the old parameters
    parallel_for(n_subj, std::min(threads, n_subj), [&](int s) {
      const SubjectBatch& batch = subjects[static_cast<size_t>(s)];
      states[static_cast<size_t>(s)] =
          e_step(snapshot, batch, cfg, subject_chain_seed(cfg.seed, it, batch.id));
    });

    if (it == 1) {
      // the normal prior meets its training data here, not at model init, so
      // this is where its data moments belong: visible bias = batch mean,
      // sigma^2 = batch variance, CD from there with sigma^2 held fixed.
      // Setting either alone misbehaves — a sharp variance around the stale
      // z-up bias freezes every later E-step onto it, and a mean without the
      // variance leaves the bias updates buried in reconstruction noise. The
      // albedo prior is not touched: pretraining owns its moments.
      const int n = out.model.n_pixels();
      Matrix n_batch(3 * n, n_subj);
      for (int s = 0; s < n_subj; ++s)
        n_batch.col(s) = normals_to_vec(states[static_cast<size_t>(s)].latents.normals);
      const Vector mu = n_batch.rowwise().mean();
      out.model.normal_prior.bottom.visible_bias = mu;
      out.model.normal_prior.bottom.visible_var =
          ((n_batch.colwise() - mu).rowwise().squaredNorm() /
           static_cast<double>(n_batch.cols()))
              .cwiseMax(kVarianceFloor);
    }

    const MStepDiagnostics diag =
        m_step(out.model, subjects, states, cfg,
               mix64(mix64(cfg.seed, kRoleMStep), static_cast<std::uint64_t>(it)));

    TrainLogRow row;
    row.iteration = it;
    row.recon_error = diag.recon_error;
    double acc = 0.0;
    for (const auto& st : states) acc += st.diag.hmc_acceptance;
    row.hmc_acceptance = n_subj > 0 ? acc / n_subj : 0.0;
    row.sigma_v_mean = out.model.noise.sigma2.mean();
    row.albedo_grad_norm = diag.albedo_grad_norm;
    row.normal_grad_norm = diag.normal_grad_norm;
    out.log.push_back(row);
    out.iterations_run = it;
    if (checkpoint) checkpoint(it, out.model);

    const int w = cfg.converge_window;
    if (cfg.converge_tol > 0 && static_cast<int>(out.log.size()) > w) {
      const double prev = out.log[out.log.size() - 1 - w].recon_error;
      if (prev > 0 && (prev - row.recon_error) / prev < cfg.converge_tol) {
        out.converged = true;
        break;
      }
    }
  }
  return out;
}

Vector translate_field(const Vector& field, int height, int width,
                       int channels, int dx, int dy) {
  if (static_cast<int>(field.size()) != height * width * channels)
    throw std::invalid_argument("field size does not match geometry");
  Vector out(field.size());
  for (int y = 0; y < height; ++y) {
    const int sy = std::clamp(y - dy, 0, height - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::clamp(x - dx, 0, width - 1);
      const int dst = (y * width + x) * channels;
      const int src = (sy * width + sx) * channels;
      for (int c = 0; c < channels; ++c) out[dst + c] = field[src + c];
    }
  }
  return out;
}

std::string format_log_row(const TrainLogRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "iter %3d  recon %.6e  hmc_acc %.3f  sigma_v2 %.4e  grad_a "
                "%.3e  grad_n %.3e",
                row.iteration, row.recon_error, row.hmc_acceptance,
                row.sigma_v_mean, row.albedo_grad_norm, row.normal_grad_norm);
  return std::string(buf);
}

}  // namespace dln
