#include "dln/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dln/errors.hpp"
#include "dln/image_io.hpp"

namespace fs = std::filesystem;

namespace dln {

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::map<std::string, Eigen::Vector3d> read_lights_csv(const fs::path& path) {
  std::map<std::string, Eigen::Vector3d> lights;
  std::ifstream in(path);
  if (!in) return lights;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, sx, sy, sz;
    if (!std::getline(ls, name, ',') || !std::getline(ls, sx, ',') ||
        !std::getline(ls, sy, ',') || !std::getline(ls, sz))
      continue;  // header or junk row
    try {
      lights[name] =
          Eigen::Vector3d(std::stod(sx), std::stod(sy), std::stod(sz));
    } catch (const std::exception&) {
      // header row ("filename,lx,ly,lz") lands here; skip it
    }
  }
  return lights;
}

int read_manifest_resolution(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return 0;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    if (line.substr(0, eq) == "resolution") {
      try {
        return std::stoi(line.substr(eq + 1));
      } catch (const std::exception&) {
        throw DataError("bad resolution value in " + path.string());
      }
    }
  }
  return 0;
}

}  // namespace

int subset_from_filename(const std::string& name) {
  const auto a_pos = name.find('A');
  const auto e_pos = name.find('E', a_pos == std::string::npos ? 0 : a_pos);
  if (a_pos == std::string::npos || e_pos == std::string::npos) return 0;
  auto parse_signed = [&](std::size_t start, std::size_t stop) -> double {
    if (start >= name.size()) return NAN;
    std::size_t i = start;
    int sign = 1;
    if (name[i] == '+' || name[i] == '-') {
      sign = name[i] == '-' ? -1 : 1;
      ++i;
    }
    double v = 0;
    bool any = false;
    while (i < stop && i < name.size() &&
           std::isdigit(static_cast<unsigned char>(name[i]))) {
      v = v * 10 + (name[i] - '0');
      any = true;
      ++i;
    }
    return any ? sign * v : NAN;
  };
  const double az = parse_signed(a_pos + 1, e_pos);
  const double el = parse_signed(e_pos + 1, name.size());
  if (std::isnan(az) || std::isnan(el)) return 0;
  const double angle = std::sqrt(az * az + el * el);
  if (angle <= 12) return 1;
  if (angle <= 25) return 2;
  if (angle <= 50) return 3;
  if (angle <= 77) return 4;
  return 5;
}

Dataset load_dataset(const DatasetManifest& manifest, std::ostream* log) {
  const fs::path root(manifest.root);
  if (!fs::is_directory(root))
    throw DataError("dataset root '" + manifest.root + "' is not a directory");

  int resolution = manifest.resolution;
  if (resolution == 0)
    resolution = read_manifest_resolution(root / "manifest.txt");
  const auto lights = read_lights_csv(root / "lights.csv");

  std::vector<fs::path> subject_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) subject_dirs.push_back(entry.path());
  std::sort(subject_dirs.begin(), subject_dirs.end());
  if (subject_dirs.empty())
    throw DataError("dataset '" + manifest.root + "' has no subject directories");

  Dataset ds;
  for (const auto& dir : subject_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && is_image_file(entry.path()))
        files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) continue;

    DatasetSubject subject;
    subject.id = dir.filename().string();
    for (const auto& file : files) {
      std::string warning;
      Matrix img = read_gray(file.string(), &warning);
      if (!warning.empty() && log) *log << "warning: " << warning << '\n';
      if (resolution > 0) img = area_resize(img, resolution, resolution);

      if (ds.height == 0) {
        ds.height = static_cast<int>(img.rows());
        ds.width = static_cast<int>(img.cols());
      } else if (img.rows() != ds.height || img.cols() != ds.width) {
        throw DataError("image '" + file.string() + "' is " +
                        std::to_string(img.rows()) + "x" +
                        std::to_string(img.cols()) + ", expected " +
                        std::to_string(ds.height) + "x" +
                        std::to_string(ds.width));
      }

      DatasetImage di;
      di.filename = fs::relative(file, root).string();
      di.pixels = image_to_vector(img);
      di.subset = subset_from_filename(file.filename().string());
      const auto it = lights.find(di.filename);
      if (it != lights.end()) {
        di.light = it->second;
        di.has_light = true;
      }
      subject.images.push_back(std::move(di));
    }
    ds.subjects.push_back(std::move(subject));
  }
  if (ds.subjects.empty())
    throw DataError("dataset '" + manifest.root + "' contains no images");

  // duplicate ids cannot happen from directory names, but the contract says
  // unique, so guard against symlinked duplicates anyway
  for (std::size_t i = 1; i < ds.subjects.size(); ++i)
    if (ds.subjects[i].id == ds.subjects[i - 1].id)
      throw DataError("duplicate subject id '" + ds.subjects[i].id + "'");
  return ds;
}

std::vector<SubjectBatch> Dataset::to_batches() const {
  std::vector<SubjectBatch> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) {
    SubjectBatch b;
    b.id = s.id;
    b.images.height = height;
    b.images.width = width;
    b.images.pixels.resize(static_cast<long>(height) * width,
                           static_cast<long>(s.images.size()));
    for (std::size_t p = 0; p < s.images.size(); ++p)
      b.images.pixels.col(static_cast<long>(p)) = s.images[p].pixels;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace dln
