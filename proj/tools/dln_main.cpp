#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "dln/container.hpp"
#include "dln/dataset.hpp"
#include "dln/errors.hpp"
#include "dln/image_io.hpp"
#include "dln/learning.hpp"
#include "dln/parallel.hpp"
#include "dln/posterior.hpp"
#include "dln/rng.hpp"
#include "dln/tasks.hpp"

namespace fs = std::filesystem;
using namespace dln;

namespace {

void ensure_outdir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw DataError("cannot create output directory '" + dir +
                    "': " + ec.message());
}

// every command leaves its resolved settings next to its outputs
void echo_config(CLI::App* sub, const std::string& outdir) {
  std::ofstream out(fs::path(outdir) / "effective_config.txt");
  out << sub->config_to_str(true, false);
}

std::string zero_pad(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%03d%s", stem, index, ext);
  return buf;
}

void write_lights_csv(const std::string& path, const Matrix& lights,
                      const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "filename,lx,ly,lz\n";
  for (int p = 0; p < lights.cols(); ++p)
    out << names[static_cast<std::size_t>(p)] << ',' << lights(0, p) << ','
        << lights(1, p) << ',' << lights(2, p) << '\n';
}

// ---- synth ----------------------------------------------------------------

struct SynthOpts {
  std::string kind = "sphere";
  std::string pattern = "checker";
  int size = 24;
  int subjects = 1;
  int lights = 5;
  double noise = 0.0;
  std::uint64_t seed = 0;
  std::string outdir;
};

void run_synth(const SynthOpts& o) {
  ensure_outdir(o.outdir);
  ensure_outdir((fs::path(o.outdir) / "truth").string());
  const SceneKind kind = parse_scene_kind(o.kind);
  const AlbedoPattern pattern = parse_albedo_pattern(o.pattern);

  std::ofstream manifest(fs::path(o.outdir) / "manifest.txt");
  manifest << "resolution=" << o.size << "\n";

  std::vector<std::string> names;
  Matrix all_lights(3, 0);
  for (int s = 0; s < o.subjects; ++s) {
    auto rng = make_stream(o.seed, 0x5A, static_cast<std::uint64_t>(s));
    const SyntheticScene scene = make_synthetic_scene(
        kind, o.size, o.size, pattern, o.lights, o.noise, rng);
    const std::string subject = zero_pad("s", s, "");
    ensure_outdir((fs::path(o.outdir) / subject).string());
    for (int p = 0; p < scene.images.n_images(); ++p) {
      const std::string file = subject + "/" + zero_pad("im", p, ".pgm");
      write_pgm((fs::path(o.outdir) / file).string(),
                vector_to_image(scene.images.pixels.col(p), o.size, o.size));
      names.push_back(file);
    }
    const long at = all_lights.cols();
    all_lights.conservativeResize(3, at + scene.latents.lights.cols());
    all_lights.rightCols(scene.latents.lights.cols()) = scene.latents.lights;
    pack_latents(scene.latents, o.size, o.size)
        .save((fs::path(o.outdir) / "truth" / (subject + ".dlnc")).string());
  }
  write_lights_csv((fs::path(o.outdir) / "lights.csv").string(), all_lights,
                   names);
  std::cout << "wrote " << names.size() << " images for " << o.subjects
            << " subject(s) under " << o.outdir << "\n";
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::string outdir;
  std::string model_out;  // defaults to <outdir>/model.dlnc
  std::string pretrain_corpus;
  int resolution = 0;
  int checkpoint_every = 0;
  TrainConfig cfg;
};

void run_train(const TrainOpts& o) {
  ensure_outdir(o.outdir);
  const Dataset ds = load_dataset({o.data, o.resolution}, &std::cerr);
  const std::vector<SubjectBatch> subjects = ds.to_batches();
  std::cout << "loaded " << subjects.size() << " subject(s) at " << ds.height
            << "x" << ds.width << "\n";

  GrbmParams corpus_prior;
  const GrbmParams* transfer = nullptr;
  if (!o.pretrain_corpus.empty()) {
    const Dataset corpus_ds =
        load_dataset({o.pretrain_corpus, o.resolution}, &std::cerr);
    if (corpus_ds.height != ds.height || corpus_ds.width != ds.width)
      throw DataError("pretraining corpus resolution differs from the data");
    long total = 0;
    for (const auto& s : corpus_ds.subjects)
      total += static_cast<long>(s.images.size());
    Matrix corpus(static_cast<long>(ds.height) * ds.width, total);
    long col = 0;
    for (const auto& s : corpus_ds.subjects)
      for (const auto& im : s.images) corpus.col(col++) = im.pixels;
    TrainConfig pre_cfg = o.cfg;
    if (pre_cfg.pretrain_epochs == 0) pre_cfg.pretrain_epochs = 10;
    corpus_prior = pretrain_albedo_prior(corpus, pre_cfg);
    transfer = &corpus_prior;
    std::cout << "pretrained albedo prior on " << total << " corpus images\n";
  }

  std::ofstream log(fs::path(o.outdir) / "train_log.txt");
  const std::string model_path =
      o.model_out.empty() ? (fs::path(o.outdir) / "model.dlnc").string()
                          : o.model_out;
  const auto checkpoint = [&](int it, const DlnModel& m) {
    if (o.checkpoint_every > 0 && it % o.checkpoint_every == 0)
      pack_model(m, o.cfg.seed, &o.cfg)
          .save((fs::path(o.outdir) / zero_pad("checkpoint_", it, ".dlnc"))
                    .string());
  };

  const TrainResult result = train(subjects, o.cfg, checkpoint, transfer);
  for (const auto& row : result.log) {
    const std::string line = format_log_row(row);
    log << line << '\n';
    std::cout << line << '\n';
  }
  if (result.converged)
    std::cout << "converged after " << result.iterations_run
              << " iteration(s)\n";
  pack_model(result.model, o.cfg.seed, &o.cfg).save(model_path);
  std::cout << "model saved to " << model_path << "\n";
}

// ---- infer ----------------------------------------------------------------

struct InferOpts {
  std::vector<std::string> images;
  std::string model;
  std::string outdir;
  std::string init = "bias";
  int iters = 50;
  int snapshot_every = 0;
  bool resize = false;
  std::uint64_t seed = 0;
  int threads = 0;
  HmcConfig hmc;
};

void run_infer(const InferOpts& o) {
  ensure_outdir(o.outdir);
  const DlnModel model = unpack_model(Container::load(o.model));

  ImageStack stack;
  stack.height = model.height;
  stack.width = model.width;
  stack.pixels.resize(model.n_pixels(), static_cast<long>(o.images.size()));
  for (std::size_t i = 0; i < o.images.size(); ++i) {
    std::string warning;
    Matrix img = read_gray(o.images[i], &warning);
    if (!warning.empty()) std::cerr << "warning: " << warning << '\n';
    if (o.resize) img = area_resize(img, model.height, model.width);
    if (img.rows() != model.height || img.cols() != model.width)
      throw DataError("'" + o.images[i] + "' is " +
                      std::to_string(img.rows()) + "x" +
                      std::to_string(img.cols()) + " but the model expects " +
                      std::to_string(model.height) + "x" +
                      std::to_string(model.width) + " (use --resize)");
    stack.pixels.col(static_cast<long>(i)) = image_to_vector(img);
  }

  InferOptions opt;
  opt.iters = o.iters;
  opt.hmc = o.hmc;
  opt.init = o.init == "svd" ? InferInit::Svd : InferInit::Bias;
  opt.seed = o.seed;
  opt.threads = o.threads;
  if (o.snapshot_every > 0)
    opt.on_sweep = [&](int it, const PosteriorState& st) {
      if (it % o.snapshot_every != 0) return;
      write_pgm((fs::path(o.outdir) / zero_pad("albedo_", it, ".pgm")).string(),
                vector_to_image(st.latents.albedo, model.height, model.width));
      write_normals_ppm(
          (fs::path(o.outdir) / zero_pad("normals_", it, ".ppm")).string(),
          st.latents.normals, model.height, model.width);
    };

  const InferResult res = infer(model, stack, opt);
  const SceneLatents& lat = res.state.latents;

  write_pgm((fs::path(o.outdir) / "albedo.pgm").string(),
            vector_to_image(lat.albedo, model.height, model.width));
  write_normals_ppm((fs::path(o.outdir) / "normals.ppm").string(), lat.normals,
                    model.height, model.width);
  std::vector<std::string> names;
  for (const auto& path : o.images) names.push_back(fs::path(path).filename().string());
  write_lights_csv((fs::path(o.outdir) / "lights.csv").string(), lat.lights,
                   names);
  pack_latents(lat, model.height, model.width)
      .save((fs::path(o.outdir) / "latents.dlnc").string());

  std::ofstream diag(fs::path(o.outdir) / "diagnostics.txt");
  diag << "sweep energy acceptance\n";
  for (std::size_t i = 0; i < res.state.diag.energy_trace.size(); ++i)
    diag << i + 1 << ' ' << res.state.diag.energy_trace[i] << ' '
         << (i < res.acceptance_per_sweep.size() ? res.acceptance_per_sweep[i]
                                                 : 0.0)
         << '\n';
  std::cout << "inference done: final energy "
            << (res.state.diag.energy_trace.empty()
                    ? 0.0
                    : res.state.diag.energy_trace.back())
            << ", hmc acceptance " << res.state.diag.hmc_acceptance
            << "; outputs in " << o.outdir << "\n";
}

// ---- relight --------------------------------------------------------------

struct RelightOpts {
  std::string model;
  std::string latents;
  std::string outdir;
  int count = 5;
  bool clamp = false;
  std::uint64_t seed = 0;
};

void run_relight(const RelightOpts& o) {
  ensure_outdir(o.outdir);
  const DlnModel model = unpack_model(Container::load(o.model));
  const SceneLatents lat = unpack_latents(Container::load(o.latents));
  if (lat.albedo.size() != model.n_pixels())
    throw DataError("latents do not match the model resolution");

  const ImageStack out =
      relight(model, lat.albedo, lat.normals, o.count, o.seed, o.clamp);
  for (int k = 0; k < out.n_images(); ++k)
    write_pgm((fs::path(o.outdir) / zero_pad("relit_", k, ".pgm")).string(),
              vector_to_image(out.pixels.col(k), model.height, model.width));
  std::cout << "wrote " << out.n_images() << " relit image(s) to " << o.outdir
            << "\n";
}

// ---- recognize ------------------------------------------------------------

struct RecognizeOpts {
  std::string model;
  std::string gallery;
  std::string test;
  std::string methods = "all";
  std::string outdir;
  int iters = 50;
  int resolution = 0;
  std::uint64_t seed = 0;
  int threads = 0;
  HmcConfig hmc;
};

void run_recognize(const RecognizeOpts& o) {
  ensure_outdir(o.outdir);
  const DlnModel model = unpack_model(Container::load(o.model));
  const int res = o.resolution > 0 ? o.resolution : model.height;
  if (res != model.height || model.height != model.width)
    throw DataError("--resolution must match the model resolution");

  const Dataset gallery_ds = load_dataset({o.gallery, res}, &std::cerr);
  const Dataset test_ds = load_dataset({o.test, res}, &std::cerr);
  if (gallery_ds.height != model.height || gallery_ds.width != model.width)
    throw DataError("gallery resolution does not match the model");

  const std::vector<SubjectBatch> gallery = gallery_ds.to_batches();
  std::vector<RecognitionInstance> tests;
  for (const auto& subj : test_ds.subjects) {
    int index = -1;
    for (std::size_t g = 0; g < gallery.size(); ++g)
      if (gallery[g].id == subj.id) index = static_cast<int>(g);
    if (index < 0)
      throw DataError("test subject '" + subj.id + "' is not in the gallery");
    for (const auto& im : subj.images)
      tests.push_back({index, im.subset, im.pixels});
  }

  InferOptions opt;
  opt.iters = o.iters;
  opt.hmc = o.hmc;
  opt.seed = o.seed;
  opt.threads = o.threads;
  RecognitionReport report = one_shot_protocol(model, gallery, tests, opt);

  if (o.methods != "all") {
    std::vector<MethodResult> kept;
    for (const auto& m : report.methods)
      if (o.methods.find(m.method) != std::string::npos ||
          (m.method == "nearest_neighbor" &&
           o.methods.find("nn") != std::string::npos) ||
          (m.method == "correlation" &&
           o.methods.find("corr") != std::string::npos) ||
          (m.method == "svd_subspace" &&
           o.methods.find("svd") != std::string::npos))
        kept.push_back(m);
    report.methods = std::move(kept);
  }

  std::ofstream csv(fs::path(o.outdir) / "report.csv");
  csv << recognition_csv(report);
  std::ofstream summary(fs::path(o.outdir) / "summary.txt");
  const std::string text = recognition_summary(report);
  summary << text;
  std::cout << text;
}

void add_hmc_options(CLI::App* sub, HmcConfig& hmc) {
  sub->add_option("--hmc-step", hmc.step_size, "leapfrog step size")
      ->capture_default_str();
  sub->add_option("--leapfrog", hmc.leapfrog_steps, "leapfrog steps")
      ->capture_default_str();
  sub->add_option("--hmc-epochs", hmc.epochs_per_call,
                  "trajectories per pixel per sweep")
      ->capture_default_str();
  sub->add_option("--mass", hmc.mass, "momentum scale")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep lambertian network: synthesis, training, inference, "
               "relighting, recognition"};
  app.require_subcommand(1);

  SynthOpts synth;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a synthetic Lambertian dataset");
  synth_cmd->set_config("--config", "", "key=value config file");
  synth_cmd->add_option("--kind", synth.kind, "scene geometry")
      ->check(CLI::IsMember({"sphere", "smooth", "flat"}))
      ->capture_default_str();
  synth_cmd->add_option("--pattern", synth.pattern, "albedo pattern")
      ->check(CLI::IsMember({"uniform", "checker", "gradient", "bimodal"}))
      ->capture_default_str();
  synth_cmd->add_option("--size", synth.size, "image side length")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--subjects", synth.subjects, "number of subjects")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth_cmd->add_option("--lights", synth.lights, "images per subject")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "observation noise sigma")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "rng seed")->capture_default_str();
  synth_cmd->add_option("--outdir", synth.outdir, "output directory")
      ->required();

  TrainOpts tr;
  auto* train_cmd = app.add_subcommand("train", "approximate-EM training");
  train_cmd->set_config("--config", "", "key=value config file");
  train_cmd->add_option("--data", tr.data, "dataset root directory")
      ->required();
  train_cmd->add_option("--outdir", tr.outdir, "output directory")->required();
  train_cmd->add_option("--out", tr.model_out,
                        "model path (default <outdir>/model.dlnc)");
  train_cmd->add_option("--pretrain-corpus", tr.pretrain_corpus,
                        "directory of extra images for albedo pretraining");
  train_cmd->add_option("--resolution", tr.resolution,
                        "resize images to this side length (0 = native)")
      ->capture_default_str();
  train_cmd->add_option("--em-iters", tr.cfg.em_iters, "EM iterations")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_cmd->add_option("--sweeps", tr.cfg.e_step_sweeps,
                        "Gibbs sweeps per E-step")
      ->capture_default_str();
  train_cmd->add_option("--cd-steps", tr.cfg.cd_steps, "CD-k steps")
      ->capture_default_str();
  train_cmd->add_option("--rate-albedo", tr.cfg.rate_albedo,
                        "albedo prior learning rate")
      ->capture_default_str();
  train_cmd->add_option("--rate-normal", tr.cfg.rate_normal,
                        "normal prior learning rate")
      ->capture_default_str();
  train_cmd->add_option("--eta", tr.cfg.eta, "unit-norm penalty weight")
      ->capture_default_str();
  train_cmd->add_option("--hidden-albedo", tr.cfg.n_hidden_albedo,
                        "albedo prior hidden units")
      ->capture_default_str();
  train_cmd->add_option("--hidden-normal", tr.cfg.n_hidden_normal,
                        "normal prior hidden units")
      ->capture_default_str();
  train_cmd->add_option("--translate", tr.cfg.translation_augment,
                        "max augmentation shift in pixels")
      ->capture_default_str();
  train_cmd->add_option("--init-noise", tr.cfg.init_noise_sigma2,
                        "initial observation noise variance")
      ->capture_default_str();
  train_cmd->add_option("--pretrain-epochs", tr.cfg.pretrain_epochs,
                        "albedo pretraining CD epochs")
      ->capture_default_str();
  train_cmd->add_flag("--average-estep", tr.cfg.e_step_average,
                      "average the back half of each E-step chain");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every,
                        "save a checkpoint every K iterations (0 = never)")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.cfg.seed, "rng seed")
      ->capture_default_str();
  train_cmd->add_option("--threads", tr.cfg.threads,
                        "worker threads (0 = hardware)")
      ->capture_default_str();
  add_hmc_options(train_cmd, tr.cfg.hmc);

  InferOpts inf;
  auto* infer_cmd =
      app.add_subcommand("infer", "posterior inference on image(s)");
  infer_cmd->set_config("--config", "", "key=value config file");
  infer_cmd->add_option("images", inf.images, "input image file(s)")
      ->required()
      ->expected(1, 1024);
  infer_cmd->add_option("--model", inf.model, "model container")->required();
  infer_cmd->add_option("--outdir", inf.outdir, "output directory")->required();
  infer_cmd->add_option("--iters", inf.iters, "Gibbs sweeps")
      ->capture_default_str();
  infer_cmd->add_option("--init", inf.init, "chain initialization")
      ->check(CLI::IsMember({"bias", "svd"}))
      ->capture_default_str();
  infer_cmd->add_option("--snapshot-every", inf.snapshot_every,
                        "emit images every K sweeps (0 = never)")
      ->capture_default_str();
  infer_cmd->add_flag("--resize", inf.resize,
                      "area-average inputs to the model resolution");
  infer_cmd->add_option("--seed", inf.seed, "rng seed")->capture_default_str();
  infer_cmd->add_option("--threads", inf.threads,
                        "worker threads (0 = hardware)")
      ->capture_default_str();
  add_hmc_options(infer_cmd, inf.hmc);

  RelightOpts rel;
  auto* relight_cmd =
      app.add_subcommand("relight", "render under lights drawn from the prior");
  relight_cmd->set_config("--config", "", "key=value config file");
  relight_cmd->add_option("--model", rel.model, "model container")->required();
  relight_cmd->add_option("--latents", rel.latents, "inferred-latents container")
      ->required();
  relight_cmd->add_option("--outdir", rel.outdir, "output directory")
      ->required();
  relight_cmd->add_option("--count", rel.count, "number of relit images")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  relight_cmd->add_flag("--clamp", rel.clamp, "clamp negative intensities");
  relight_cmd->add_option("--seed", rel.seed, "rng seed")
      ->capture_default_str();

  RecognizeOpts rec;
  auto* recognize_cmd = app.add_subcommand(
      "recognize", "one-shot nearest-subspace recognition with baselines");
  recognize_cmd->set_config("--config", "", "key=value config file");
  recognize_cmd->add_option("--model", rec.model, "model container")
      ->required();
  recognize_cmd->add_option("--gallery", rec.gallery,
                            "training image dataset root")
      ->required();
  recognize_cmd->add_option("--test", rec.test, "test image dataset root")
      ->required();
  recognize_cmd
      ->add_option("--methods", rec.methods,
                   "comma list of dln,svd,corr,nn or 'all'")
      ->capture_default_str();
  recognize_cmd->add_option("--iters", rec.iters, "Gibbs sweeps per subject")
      ->capture_default_str();
  recognize_cmd
      ->add_option("--resolution", rec.resolution,
                   "ingestion resolution (0 = model resolution)")
      ->capture_default_str();
  recognize_cmd->add_option("--outdir", rec.outdir, "output directory")
      ->required();
  recognize_cmd->add_option("--seed", rec.seed, "rng seed")
      ->capture_default_str();
  recognize_cmd->add_option("--threads", rec.threads,
                            "worker threads (0 = hardware)")
      ->capture_default_str();
  add_hmc_options(recognize_cmd, rec.hmc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // usage errors exit 1, --help exits 0
  }

  try {
    if (synth_cmd->parsed()) {
      run_synth(synth);
      echo_config(synth_cmd, synth.outdir);
    } else if (train_cmd->parsed()) {
      run_train(tr);
      echo_config(train_cmd, tr.outdir);
    } else if (infer_cmd->parsed()) {
      run_infer(inf);
      echo_config(infer_cmd, inf.outdir);
    } else if (relight_cmd->parsed()) {
      run_relight(rel);
      echo_config(relight_cmd, rel.outdir);
    } else if (recognize_cmd->parsed()) {
      run_recognize(rec);
      echo_config(recognize_cmd, rec.outdir);
    }
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
