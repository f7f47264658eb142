// End-to-end checks of the dln command-line tool. Takes the binary path as
// argv[1], drives it through std::system, and inspects the files it leaves
// behind. Not a doctest TU: the binary path has to come from the harness.
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "dln/container.hpp"
#include "dln/image_io.hpp"
#include "dln/posterior.hpp"
#include "dln/rng.hpp"

namespace fs = std::filesystem;

namespace {

int failures = 0;

#define EXPECT(cond, what)                                               \
  do {                                                                   \
    if (!(cond)) {                                                       \
      ++failures;                                                        \
      std::cerr << "FAIL " << __FILE__ << ":" << __LINE__ << "  " << what \
                << "\n";                                                 \
    }                                                                    \
  } while (0)

std::string g_bin;
fs::path g_root;
int g_runs = 0;

int run(const std::string& args, std::string* output = nullptr) {
  const fs::path log = g_root / ("run" + std::to_string(g_runs++) + ".log");
  const std::string cmd =
      "\"" + g_bin + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::ostringstream os;
    os << in.rdbuf();
    *output = os.str();
  }
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: cli_tests <path-to-dln-binary>\n";
    return 1;
  }
  g_bin = argv[1];
  g_root = fs::temp_directory_path() /
           ("dln_cli_" + std::to_string(dln::mix64(
                             static_cast<std::uint64_t>(::getpid()), 0x9)));
  fs::create_directories(g_root);

  // ---- usage and exit codes -------------------------------------------------
  {
    std::string out;
    EXPECT(run("--help", &out) == 0, "--help exits 0");
    EXPECT(out.find("synth") != std::string::npos, "--help lists subcommands");
    EXPECT(run("") == 1, "no subcommand exits 1");
    EXPECT(run("synth") == 1, "missing required option exits 1");
    EXPECT(run("frobnicate") == 1, "unknown subcommand exits 1");
    EXPECT(run("synth --kind cube --outdir " + q(g_root / "x")) == 1,
           "invalid enum value exits 1");
  }

  // ---- synth ------------------------------------------------------------------
  const fs::path synth1 = g_root / "synth1";
  const fs::path synth2 = g_root / "synth2";
  {
    const std::string opts =
        " --kind sphere --pattern bimodal --size 8 --subjects 2 --lights 3"
        " --noise 0.01 --seed 11 --outdir ";
    std::string out;
    EXPECT(run("synth" + opts + q(synth1), &out) == 0, "synth exits 0");
    EXPECT(out.find("wrote 6 images") != std::string::npos,
           "synth reports its image count: " + out);
    EXPECT(run("synth" + opts + q(synth2)) == 0, "synth rerun exits 0");

    EXPECT(fs::exists(synth1 / "manifest.txt"), "synth writes manifest.txt");
    EXPECT(fs::exists(synth1 / "lights.csv"), "synth writes lights.csv");
    EXPECT(fs::exists(synth1 / "effective_config.txt"),
           "synth echoes its config");
    for (const char* f : {"s000/im000.pgm", "s000/im002.pgm", "s001/im001.pgm"})
      EXPECT(fs::exists(synth1 / f), std::string("synth writes ") + f);

    EXPECT(slurp(synth1 / "s000" / "im000.pgm") ==
               slurp(synth2 / "s000" / "im000.pgm"),
           "same seed gives byte-identical images");
    EXPECT(slurp(synth1 / "lights.csv") == slurp(synth2 / "lights.csv"),
           "same seed gives identical lights");

    const dln::Matrix img = dln::read_gray((synth1 / "s000/im000.pgm").string());
    EXPECT(img.rows() == 8 && img.cols() == 8, "synth respects --size");

    int h = 0, w = 0;
    const dln::SceneLatents truth = dln::unpack_latents(
        dln::Container::load((synth1 / "truth" / "s000.dlnc").string()), &h,
        &w);
    EXPECT(h == 8 && w == 8, "truth latents carry the geometry");
    EXPECT(truth.albedo.size() == 64 && truth.lights.cols() == 3,
           "truth latents have the right shapes");

    const fs::path synth3 = g_root / "synth3";
    EXPECT(run("synth" + opts.substr(0, opts.find("--seed")) +
               "--seed 12 --outdir " + q(synth3)) == 0,
           "synth with another seed runs");
    EXPECT(slurp(synth1 / "s000" / "im000.pgm") !=
               slurp(synth3 / "s000" / "im000.pgm"),
           "a different seed changes the images");
  }

  // ---- a small model container for infer/relight/recognize -------------------
  const fs::path model_path = g_root / "flat.dlnc";
  {
    const dln::DlnModel m = dln::DlnModel::flat(8, 8, 0.05);
    dln::pack_model(m, 0).save(model_path.string());
  }

  // ---- infer ------------------------------------------------------------------
  const fs::path inf1 = g_root / "inf1";
  {
    const std::string imgs =
        q(synth1 / "s000/im000.pgm") + " " + q(synth1 / "s000/im001.pgm") +
        " " + q(synth1 / "s000/im002.pgm");
    const std::string opts = " --model " + q(model_path) +
                             " --iters 3 --seed 5 --threads 1 --hmc-epochs 2";
    std::string out;
    EXPECT(run("infer " + imgs + opts + " --outdir " + q(inf1), &out) == 0,
           "infer exits 0: " + out);
    EXPECT(out.find("inference done") != std::string::npos,
           "infer reports completion");
    for (const char* f : {"albedo.pgm", "normals.ppm", "lights.csv",
                          "latents.dlnc", "diagnostics.txt"})
      EXPECT(fs::exists(inf1 / f), std::string("infer writes ") + f);

    const std::string lights = slurp(inf1 / "lights.csv");
    EXPECT(lights.rfind("filename,lx,ly,lz\n", 0) == 0 &&
               lights.find("im002.pgm") != std::string::npos,
           "inferred lights are labeled by input name");

    const fs::path inf2 = g_root / "inf2";
    EXPECT(run("infer " + imgs + opts + " --outdir " + q(inf2)) == 0,
           "infer rerun exits 0");
    EXPECT(slurp(inf1 / "latents.dlnc") == slurp(inf2 / "latents.dlnc"),
           "inference is reproducible byte for byte");

    // geometry mismatch without --resize is a data error
    const fs::path big = g_root / "big.pgm";
    dln::write_pgm(big.string(), dln::Matrix::Constant(16, 16, 0.5));
    EXPECT(run("infer " + q(big) + opts + " --outdir " + q(g_root / "inf3")) ==
               2,
           "resolution mismatch exits 2");
    EXPECT(run("infer " + q(big) + opts + " --resize --outdir " +
               q(g_root / "inf4")) == 0,
           "--resize fixes the mismatch");
    EXPECT(run("infer " + q(g_root / "missing.pgm") + opts + " --outdir " +
               q(g_root / "inf5")) == 2,
           "missing input image exits 2");
    EXPECT(run("infer " + imgs + " --model " + q(g_root / "nope.dlnc") +
               " --outdir " + q(g_root / "inf6")) == 2,
           "missing model exits 2");
  }

  // ---- relight ----------------------------------------------------------------
  {
    const fs::path rel1 = g_root / "rel1";
    const fs::path rel2 = g_root / "rel2";
    const std::string opts = " --model " + q(model_path) + " --latents " +
                             q(inf1 / "latents.dlnc") + " --seed 9";
    std::string out;
    EXPECT(run("relight" + opts + " --count 3 --outdir " + q(rel1), &out) == 0,
           "relight exits 0: " + out);
    EXPECT(out.find("wrote 3 relit") != std::string::npos,
           "relight reports its count");
    for (const char* f : {"relit_000.pgm", "relit_001.pgm", "relit_002.pgm"})
      EXPECT(fs::exists(rel1 / f), std::string("relight writes ") + f);
    EXPECT(!fs::exists(rel1 / "relit_003.pgm"), "relight stops at --count");

    EXPECT(run("relight" + opts + " --count 3 --outdir " + q(rel2)) == 0,
           "relight rerun exits 0");
    EXPECT(slurp(rel1 / "relit_002.pgm") == slurp(rel2 / "relit_002.pgm"),
           "relighting is reproducible");

    EXPECT(run("relight" + opts + " --count 0 --outdir " +
               q(g_root / "rel0")) == 0,
           "zero count is a no-op, not an error");
  }

  // ---- recognize --------------------------------------------------------------
  {
    const fs::path rec1 = g_root / "rec1";
    const std::string opts =
        " --model " + q(model_path) + " --gallery " + q(synth1) + " --test " +
        q(synth1) + " --iters 2 --seed 3 --threads 1 --hmc-epochs 2";
    std::string out;
    EXPECT(run("recognize" + opts + " --outdir " + q(rec1), &out) == 0,
           "recognize exits 0: " + out);
    EXPECT(out.find("2 subjects") != std::string::npos,
           "recognize summarizes the gallery");
    EXPECT(fs::exists(rec1 / "report.csv") && fs::exists(rec1 / "summary.txt"),
           "recognize writes report.csv and summary.txt");

    const std::string csv = slurp(rec1 / "report.csv");
    EXPECT(csv.rfind("subset,method,n_train,error", 0) == 0,
           "report.csv has the expected header");
    // gallery == test: the raw-image baselines find exact duplicates
    EXPECT(csv.find("all,nearest_neighbor,3,0") != std::string::npos,
           "nearest neighbor is exact on its own gallery: " + csv);
    EXPECT(csv.find("all,correlation,3,0") != std::string::npos,
           "correlation is exact on its own gallery");
    EXPECT(csv.find("all,dln,3,") != std::string::npos,
           "the dln method is reported");

    const fs::path rec2 = g_root / "rec2";
    EXPECT(run("recognize" + opts + " --methods nn --outdir " + q(rec2)) == 0,
           "method filtering runs");
    const std::string nn_csv = slurp(rec2 / "report.csv");
    EXPECT(nn_csv.find("nearest_neighbor") != std::string::npos,
           "--methods nn keeps the nn rows");
    EXPECT(nn_csv.find("dln") == std::string::npos &&
               nn_csv.find("correlation") == std::string::npos,
           "--methods nn drops the others");

    EXPECT(run("recognize" + opts + " --resolution 16 --outdir " +
               q(g_root / "rec3")) == 2,
           "a resolution unlike the model's exits 2");
  }

  std::error_code ec;
  fs::remove_all(g_root, ec);
  if (failures == 0) {
    std::cout << "cli: all checks passed\n";
    return 0;
  }
  std::cerr << "cli: " << failures << " check(s) failed\n";
  return 1;
}
