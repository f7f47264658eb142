#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "dln/learning.hpp"

namespace dln {

/// Dataset-on-disk contract: a root directory with one subdirectory per
/// subject holding its grayscale images. Optional files at the root:
///   manifest.txt  key=value lines (resolution=NN)
///   lights.csv    filename,lx,ly,lz  (filename relative to root)
struct DatasetManifest {
  std::string root;
  int resolution = 0;  // 0: keep native size
};

struct DatasetImage {
  std::string filename;  // relative to the dataset root
  Vector pixels;
  Eigen::Vector3d light = Eigen::Vector3d::Zero();
  bool has_light = false;
  int subset = 0;  // lighting subset when derivable, else 0
};

struct DatasetSubject {
  std::string id;
  std::vector<DatasetImage> images;
};

struct Dataset {
  std::vector<DatasetSubject> subjects;
  int height = 0;
  int width = 0;

  std::vector<SubjectBatch> to_batches() const;
};

// Loads every subject subdirectory in sorted order, images sorted by name.
// All images must agree on resolution after the optional resize. Warnings
// (color conversions etc.) go to log when given.
Dataset load_dataset(const DatasetManifest& manifest,
                     std::ostream* log = nullptr);

// Lighting subset (1-4, 5 beyond, 0 unknown) from the extended-Yale-style
// azimuth/elevation filename tag "A{+-ddd}E{+-dd}".
int subset_from_filename(const std::string& name);

}  // namespace dln
