#include "dln/tasks.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dln/errors.hpp"
#include "dln/rng.hpp"

namespace dln {

Matrix orthonormal_basis(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("empty matrix has no basis");
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] <= 0.0)
    throw DataError("zero matrix spans no subspace");
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > s[0] * 1e-10) ++rank;
  return svd.matrixU().leftCols(rank);
}

Matrix build_subspace(const Vector& albedo, const Matrix& normals) {
  if (normals.rows() != albedo.size() || normals.cols() != 3)
    throw std::invalid_argument("albedo/normals dims disagree");
  Matrix m = normals;
  m.array().colwise() *= albedo.array();
  return orthonormal_basis(m);
}

Classification nearest_subspace_classify(const SubspaceGallery& gallery,
                                         const Vector& v) {
  if (gallery.entries.empty()) throw DataError("empty gallery");
  Classification out;
  out.distances.reserve(gallery.entries.size());
  for (size_t s = 0; s < gallery.entries.size(); ++s) {
    const Matrix& q = gallery.entries[s].q;
    if (q.rows() != v.size())
      throw std::invalid_argument("gallery/test dims disagree");
    const double d = (v - q * (q.transpose() * v)).norm();
    out.distances.push_back(d);
    if (out.index < 0 || d < out.distances[out.index])
      out.index = static_cast<int>(s);
  }
  for (size_t s = 0; s < out.distances.size(); ++s)
    if (static_cast<int>(s) != out.index &&
        out.distances[s] == out.distances[out.index]) {
      out.tie = true;  // kept the lower index
      break;
    }
  out.label = gallery.entries[out.index].label;
  return out;
}

namespace {

void check_train_set(const std::vector<Matrix>& train, const Vector& test) {
  if (train.empty()) throw DataError("empty training set");
  for (const auto& t : train) {
    if (t.cols() < 1) throw DataError("subject with no training images");
    if (t.rows() != test.size())
      throw std::invalid_argument("train/test dims disagree");
  }
}

}  // namespace

int baseline_nn(const std::vector<Matrix>& train, const Vector& test) {
  check_train_set(train, test);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < train.size(); ++s)
    for (int p = 0; p < train[s].cols(); ++p) {
      const double d = (train[s].col(p) - test).norm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(s);
      }
    }
  return best;
}

int baseline_normalized_correlation(const std::vector<Matrix>& train,
                                    const Vector& test) {
  check_train_set(train, test);
  const double tn = test.norm();
  int best = 0;
  double best_c = -std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < train.size(); ++s)
    for (int p = 0; p < train[s].cols(); ++p) {
      const double n = train[s].col(p).norm() * tn;
      const double c = n > 0 ? test.dot(train[s].col(p)) / n : 0.0;
      if (c > best_c) {
        best_c = c;
        best = static_cast<int>(s);
      }
    }
  return best;
}

int baseline_svd_subspace(const std::vector<Matrix>& train, const Vector& test) {
  check_train_set(train, test);
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < train.size(); ++s) {
    Eigen::BDCSVD<Matrix> svd(train[s], Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size() && i < 3; ++i)
      if (sv[i] > (sv[0] > 0 ? sv[0] * 1e-12 : 0)) ++rank;
    double d;
    if (rank == 0) {
      d = test.norm();  // all-black training stack
    } else {
      const Matrix q = svd.matrixU().leftCols(rank);
      d = (test - q * (q.transpose() * test)).norm();
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(s);
    }
  }
  return best;
}

ImageStack relight(const DlnModel& m, const Vector& albedo,
                   const Matrix& normals, int num_images, std::uint64_t seed,
                   bool clamp) {
  if (num_images < 0) throw std::invalid_argument("negative image count");
  if (albedo.size() != m.n_pixels() || normals.rows() != m.n_pixels() ||
      normals.cols() != 3)
    throw std::invalid_argument("latents do not match model geometry");
  m.lighting.validate();

  Eigen::LLT<Eigen::Matrix3d> llt(m.lighting.precision);
  if (llt.info() != Eigen::Success)
    throw NumericError("lighting prior precision is not positive definite");

  SceneLatents s;
  s.albedo = albedo;
  s.normals = normals;
  s.lights.resize(3, num_images);
  for (int k = 0; k < num_images; ++k) {
    auto rng = make_stream(seed, 0x7E, static_cast<std::uint64_t>(k));
    Eigen::Vector3d z;  // explicit order: ctor-argument evaluation is unspecified
    z[0] = draw_normal(rng);
    z[1] = draw_normal(rng);
    z[2] = draw_normal(rng);
    s.lights.col(k) = m.lighting.mean + llt.matrixU().solve(z);
  }

  ImageStack out;
  out.height = m.height;
  out.width = m.width;
  out.pixels = render_mean(s, clamp);
  return out;
}

Alignment align_linear(const Matrix& m_hat, const Matrix& m_ref) {
  if (m_hat.rows() != m_ref.rows() || m_hat.cols() != 3 || m_ref.cols() != 3)
    throw std::invalid_argument("alignment needs two N x 3 matrices");
  Alignment out;
  Eigen::ColPivHouseholderQR<Matrix> qr(m_hat);
  if (qr.rank() < 3) {
    out.pseudo_inverse = true;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(m_hat);
    out.transform = cod.solve(m_ref);
  } else {
    out.transform = qr.solve(m_ref);
  }
  const double denom = m_ref.norm();
  const double num = (m_hat * out.transform - m_ref).norm();
  out.residual = denom > 0 ? num / denom : (num > 0 ? std::numeric_limits<double>::infinity() : 0.0);
  return out;
}

namespace {

MethodResult score_method(const std::string& name,
                          const std::vector<RecognitionInstance>& tests,
                          const std::vector<int>& predictions, int n_subjects) {
  MethodResult r;
  r.method = name;
  r.confusion = Matrix::Zero(n_subjects, n_subjects);
  std::map<int, std::pair<int, int>> by_subset;  // subset -> (wrong, total)
  int wrong = 0;
  for (size_t t = 0; t < tests.size(); ++t) {
    const int truth = tests[t].subject;
    const int pred = predictions[t];
    r.confusion(truth, pred) += 1.0;
    auto& cell = by_subset[tests[t].subset];
    ++cell.second;
    if (pred != truth) {
      ++cell.first;
      ++wrong;
    }
  }
  for (const auto& [subset, cell] : by_subset)
    r.error_by_subset.emplace_back(
        subset, cell.second > 0 ? double(cell.first) / cell.second : 0.0);
  r.overall_error = tests.empty() ? 0.0 : double(wrong) / double(tests.size());
  return r;
}

}  // namespace

RecognitionReport one_shot_protocol(const DlnModel& m,
                                    const std::vector<SubjectBatch>& gallery,
                                    const std::vector<RecognitionInstance>& tests,
                                    const InferOptions& opt) {
  if (gallery.empty()) throw DataError("empty gallery");
  const int n_subjects = static_cast<int>(gallery.size());
  for (const auto& t : tests)
    if (t.subject < 0 || t.subject >= n_subjects)
      throw DataError("test instance references an unknown subject");

  RecognitionReport report;
  report.n_test = static_cast<int>(tests.size());
  int n_train = gallery.front().images.n_images();
  SubspaceGallery subspaces;
  std::vector<Matrix> train;
  train.reserve(gallery.size());
  for (int s = 0; s < n_subjects; ++s) {
    const SubjectBatch& subj = gallery[s];
    subj.images.validate();
    report.subject_labels.push_back(subj.id);
    if (subj.images.n_images() != n_train) n_train = -1;  // non-uniform
    train.push_back(subj.images.pixels);

    InferOptions o = opt;
    o.seed = mix64(opt.seed, static_cast<std::uint64_t>(s));
    const InferResult res = infer(m, subj.images, o);
    subspaces.entries.push_back(
        {subj.id, build_subspace(res.state.latents.albedo,
                                 res.state.latents.normals)});
  }
  report.n_train_per_subject = n_train;

  std::vector<int> pred_dln, pred_svd, pred_corr, pred_nn;
  pred_dln.reserve(tests.size());
  for (const auto& t : tests) {
    pred_dln.push_back(nearest_subspace_classify(subspaces, t.image).index);
    pred_svd.push_back(baseline_svd_subspace(train, t.image));
    pred_corr.push_back(baseline_normalized_correlation(train, t.image));
    pred_nn.push_back(baseline_nn(train, t.image));
  }

  report.methods.push_back(score_method("dln", tests, pred_dln, n_subjects));
  report.methods.push_back(
      score_method("svd_subspace", tests, pred_svd, n_subjects));
  report.methods.push_back(
      score_method("correlation", tests, pred_corr, n_subjects));
  report.methods.push_back(
      score_method("nearest_neighbor", tests, pred_nn, n_subjects));
  return report;
}

std::string recognition_csv(const RecognitionReport& report) {
  std::ostringstream os;
  os << "subset,method,n_train,error\n";
  for (const auto& m : report.methods) {
    for (const auto& [subset, err] : m.error_by_subset)
      os << subset << ',' << m.method << ',' << report.n_train_per_subject
         << ',' << err << '\n';
    os << "all," << m.method << ',' << report.n_train_per_subject << ','
       << m.overall_error << '\n';
  }
  return os.str();
}

std::string recognition_summary(const RecognitionReport& report) {
  std::ostringstream os;
  os << report.subject_labels.size() << " subjects, " << report.n_test
     << " test images, " << report.n_train_per_subject
     << " training image(s) per subject\n";
  for (const auto& m : report.methods) {
    os << "  " << m.method << ": overall error " << m.overall_error;
    for (const auto& [subset, err] : m.error_by_subset)
      os << "  [subset " << subset << ": " << err << "]";
    os << '\n';
  }
  return os.str();
}

}  // namespace dln
