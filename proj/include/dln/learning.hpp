#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dln/posterior.hpp"

namespace dln {

struct TrainConfig {
  int em_iters = 30;
  int e_step_sweeps = 50;
  int cd_steps = 1;
  double rate_albedo = 0.01;
  double rate_normal = 0.01;
  HmcConfig hmc;
  double eta = 100.0;
  int translation_augment = 2;  // max |shift| in pixels for the normal maps
  std::uint64_t seed = 0;
  int threads = 0;  // 0: hardware default

  int n_hidden_albedo = 32;
  int n_hidden_normal = 32;
  double init_noise_sigma2 = 0.01;
  int pretrain_epochs = 0;      // CD epochs on raw images before EM
  bool e_step_average = false;  // average the back half of each chain

  // stop early when the relative reconstruction-error improvement over
  // converge_window iterations drops below converge_tol; stochastic E-steps
  // make the error fluctuate, so a non-positive tol disables the check
  // entirely rather than tripping on every upward wiggle
  double converge_tol = 1e-3;
  int converge_window = 3;

  void validate() const;
};

/// All images of one subject; they share (a, N), each column its own light.
struct SubjectBatch {
  std::string id;
  ImageStack images;
};

// Model sized from the data: visible biases at the data mean (albedo) and
// the upright normal (normals), weights ~ N(0, 0.01^2), prior variances 1,
// light prior N((0,0,1), I), observation noise at cfg.init_noise_sigma2.
DlnModel init_model(const std::vector<SubjectBatch>& subjects,
                    const TrainConfig& cfg);

// CD-trains a GRBM on raw images as albedo stand-ins; the result replaces
// the albedo prior before EM starts. Zero epochs returns the initialized
// parameters untouched. corpus columns are images.
GrbmParams pretrain_albedo_prior(const Matrix& corpus, const TrainConfig& cfg);

// One posterior chain for one subject, initialized at the SVD photometric
// solution (Bias fallback under three images) so every subject lands in the
// same gauge; the sample the M-step consumes is the final state (default) or
// the mean over the back half of the trace.
PosteriorState e_step(const DlnModel& m, const SubjectBatch& batch,
                      const TrainConfig& cfg, std::uint64_t seed);

// Chain seed train() hands to e_step: keyed by the subject id (not its
// position), so reordering the subject list cannot change any chain.
std::uint64_t subject_chain_seed(std::uint64_t seed, int em_iter,
                                 const std::string& subject_id);

struct MStepDiagnostics {
  double albedo_grad_norm = 0.0;
  double normal_grad_norm = 0.0;
  double recon_error = 0.0;  // mean squared residual under the samples
};

// Alg.-style M-step: CD update of both priors from the collected samples
// (normal maps additionally jittered by a random +-translation_augment pixel
// shift), then closed-form ML for the noise variances (floored at 1e-6) and
// the light prior. The light prior only moves when at least 4 light vectors
// were collected; the noise only when at least one image was.
MStepDiagnostics m_step(DlnModel& m, const std::vector<SubjectBatch>& subjects,
                        const std::vector<PosteriorState>& samples,
                        const TrainConfig& cfg, std::uint64_t seed);

struct TrainLogRow {
  int iteration = 0;
  double recon_error = 0.0;
  double hmc_acceptance = 0.0;
  double sigma_v_mean = 0.0;
  double albedo_grad_norm = 0.0;
  double normal_grad_norm = 0.0;
};

std::string format_log_row(const TrainLogRow& row);

struct TrainResult {
  DlnModel model;
  std::vector<TrainLogRow> log;
  int iterations_run = 0;
  bool converged = false;
};

// Alternating E/M for cfg.em_iters or until the reconstruction error stops
// improving. E-step chains run in parallel across subjects with keyed seeds,
// so results do not depend on the thread count. checkpoint, when set, is
// called after every M-step. albedo_prior_init, when given, is transferred
// into the model before EM (external pretraining corpus); otherwise
// cfg.pretrain_epochs > 0 pretrains on the subjects' own images.
TrainResult train(
    const std::vector<SubjectBatch>& subjects, const TrainConfig& cfg,
    const std::function<void(int, const DlnModel&)>& checkpoint = nullptr,
    const GrbmParams* albedo_prior_init = nullptr);

// Shifts a pixel-major field (channels values per pixel) by (dx, dy) with
// edge replication; used for the translation augmentation.
Vector translate_field(const Vector& field, int height, int width,
                       int channels, int dx, int dy);

}  // namespace dln
