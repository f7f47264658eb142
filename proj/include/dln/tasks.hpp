#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dln/learning.hpp"
#include "dln/posterior.hpp"

namespace dln {

// Orthonormal basis of span(M), rows m_i = a_i n_i, via SVD. Rank deficiency
// keeps fewer than 3 columns; an all-zero M is an error.
Matrix build_subspace(const Vector& albedo, const Matrix& normals);
// Same from a precomputed M (columns of interest already assembled).
Matrix orthonormal_basis(const Matrix& m);

struct Subspace {
  std::string label;
  Matrix q;  // N_v x rank, orthonormal columns
};

struct SubspaceGallery {
  std::vector<Subspace> entries;
};

struct Classification {
  int index = -1;
  std::string label;
  std::vector<double> distances;  // Euclidean residual per gallery entry
  bool tie = false;               // another entry matched the best distance
};

Classification nearest_subspace_classify(const SubspaceGallery& gallery,
                                         const Vector& v);

// Baselines over a per-subject training set (each matrix: images as columns).
// All return the winning subject index.
int baseline_nn(const std::vector<Matrix>& train, const Vector& test);
int baseline_normalized_correlation(const std::vector<Matrix>& train,
                                    const Vector& test);
// Nearest subspace spanned by each subject's top min(P, 3) singular vectors.
int baseline_svd_subspace(const std::vector<Matrix>& train, const Vector& test);

// Draw num_images lights from the model prior and render a_i (n_i . l);
// clamp zeroes negative intensities for display.
ImageStack relight(const DlnModel& m, const Vector& albedo,
                   const Matrix& normals, int num_images, std::uint64_t seed,
                   bool clamp = false);

struct Alignment {
  Eigen::Matrix3d transform = Eigen::Matrix3d::Identity();
  double residual = 0.0;  // |M_hat R - M|_F / |M|_F
  bool pseudo_inverse = false;  // rank-deficient estimate, flagged
};

// Least-squares 3x3 map resolving the factorization ambiguity:
// R = argmin |M_hat R - M|_F.
Alignment align_linear(const Matrix& m_hat, const Matrix& m_ref);

struct RecognitionInstance {
  int subject = 0;  // index into the gallery order
  int subset = 0;   // reporting group (lighting subset etc.), 0 if unused
  Vector image;
};

struct MethodResult {
  std::string method;
  Matrix confusion;  // n_subjects x n_subjects counts, row = true subject
  std::vector<std::pair<int, double>> error_by_subset;  // sorted by subset
  double overall_error = 0.0;
};

struct RecognitionReport {
  std::vector<std::string> subject_labels;
  int n_train_per_subject = 0;
  int n_test = 0;
  std::vector<MethodResult> methods;
};

// One-or-few-shot protocol: infer (a, N) per subject from its gallery stack
// with the trained model, build the subspaces, classify every test image, and
// run the three baselines on the same raw gallery images.
RecognitionReport one_shot_protocol(const DlnModel& m,
                                    const std::vector<SubjectBatch>& gallery,
                                    const std::vector<RecognitionInstance>& tests,
                                    const InferOptions& opt);

// CSV rows: subset,method,n_train,error — per-subset plus an "all" row.
std::string recognition_csv(const RecognitionReport& report);
std::string recognition_summary(const RecognitionReport& report);

}  // namespace dln
