#include "dln/lambertian.hpp"

#include <Eigen/SVD>
#include <cmath>

#include "dln/errors.hpp"
#include "dln/rng.hpp"

namespace dln {

void ImageStack::validate() const {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("ImageStack: invalid geometry");
  if (pixels.rows() != n_pixels())
    throw std::invalid_argument("ImageStack: pixel rows do not match geometry");
  if (!pixels.allFinite())
    throw NumericError("ImageStack contains non-finite pixels");
}

void LightingPrior::validate() const {
  if ((precision - precision.transpose()).norm() > 1e-9 * (1.0 + precision.norm()))
    throw NumericError("lighting precision not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(precision);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw NumericError("lighting precision not positive definite");
}

Eigen::Matrix3d LightingPrior::covariance() const {
  validate();
  return precision.llt().solve(Eigen::Matrix3d::Identity());
}

void NoiseModel::validate() const {
  if (!sigma2.allFinite() || (sigma2.array() <= 0.0).any())
    throw NumericError("noise variances must be positive and finite");
}

Vector normals_to_vec(const Matrix& normals) {
  const int n = static_cast<int>(normals.rows());
  Vector v(3 * n);
  for (int i = 0; i < n; ++i) v.segment<3>(3 * i) = normals.row(i).transpose();
  return v;
}

Matrix vec_to_normals(const Vector& v) {
  if (v.size() % 3 != 0)
    throw std::invalid_argument("vec_to_normals: length not a multiple of 3");
  const int n = static_cast<int>(v.size() / 3);
  Matrix normals(n, 3);
  for (int i = 0; i < n; ++i) normals.row(i) = v.segment<3>(3 * i).transpose();
  return normals;
}

Matrix shading(const Matrix& normals, const Matrix& lights) {
  if (normals.cols() != 3 || lights.rows() != 3)
    throw std::invalid_argument("shading: normals must be N_v x 3, lights 3 x P");
  return normals * lights;
}

Matrix render_mean(const SceneLatents& s, bool clamp_nonneg) {
  if (s.normals.rows() != s.albedo.size())
    throw std::invalid_argument("render_mean: albedo/normals size mismatch");
  Matrix img = s.albedo.asDiagonal() * shading(s.normals, s.lights);
  if (clamp_nonneg) img = img.cwiseMax(0.0);
  return img;
}

ImageStack render_stochastic(const SceneLatents& s, const NoiseModel& noise,
                             int height, int width, std::mt19937_64& rng) {
  if (noise.sigma2.size() != s.n_pixels())
    throw std::invalid_argument("render_stochastic: noise size mismatch");
  noise.validate();
  ImageStack out;
  out.height = height;
  out.width = width;
  out.pixels = render_mean(s);
  for (int p = 0; p < out.pixels.cols(); ++p)
    for (int i = 0; i < out.pixels.rows(); ++i)
      out.pixels(i, p) += std::sqrt(noise.sigma2[i]) * draw_normal(rng);
  out.validate();
  return out;
}

SceneKind parse_scene_kind(const std::string& s) {
  if (s == "sphere") return SceneKind::Sphere;
  if (s == "random_smooth") return SceneKind::RandomSmooth;
  if (s == "flat") return SceneKind::Flat;
  throw std::invalid_argument("unknown scene kind: " + s);
}

AlbedoPattern parse_albedo_pattern(const std::string& s) {
  if (s == "uniform") return AlbedoPattern::Uniform;
  if (s == "checker") return AlbedoPattern::Checker;
  if (s == "gradient") return AlbedoPattern::Gradient;
  if (s == "bimodal") return AlbedoPattern::Bimodal;
  throw std::invalid_argument("unknown albedo pattern: " + s);
}

namespace {

Vector make_albedo(AlbedoPattern pattern, int height, int width,
                   std::mt19937_64& rng) {
  Vector a(height * width);
  switch (pattern) {
    case AlbedoPattern::Uniform:
      a.setConstant(0.8);
      break;
    case AlbedoPattern::Checker: {
      const int block = std::max(1, std::min(height, width) / 6);
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          a[y * width + x] = ((x / block + y / block) % 2 == 0) ? 0.9 : 0.3;
      break;
    }
    case AlbedoPattern::Gradient:
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
          a[y * width + x] = 0.2 + 0.7 * x / std::max(1, width - 1);
      break;
    case AlbedoPattern::Bimodal: {
      // Two half-field prototypes (bright-left vs bright-right) plus small
      // smooth jitter; which prototype is drawn from the seed stream.
      const bool left_bright = draw_uniform(rng) < 0.5;
      const double jitter_phase = draw_uniform(rng) * 2.0 * M_PI;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const bool left = x < width / 2;
          double base = (left == left_bright) ? 0.85 : 0.25;
          double jitter =
              0.05 * std::sin(jitter_phase + 2.0 * M_PI * y / height);
          a[y * width + x] = base + jitter;
        }
      break;
    }
  }
  return a;
}

Matrix make_normals(SceneKind kind, int height, int width, Vector& albedo,
                    std::mt19937_64& rng) {
  const int n = height * width;
  Matrix N(n, 3);
  switch (kind) {
    case SceneKind::Flat:
      N.col(0).setZero();
      N.col(1).setZero();
      N.col(2).setOnes();
      break;
    case SceneKind::Sphere: {
      for (int yy = 0; yy < height; ++yy)
        for (int xx = 0; xx < width; ++xx) {
          // Pixel centers mapped to [-1, 1].
          double x = (2.0 * xx + 1.0) / width - 1.0;
          double y = (2.0 * yy + 1.0) / height - 1.0;
          double r2 = x * x + y * y;
          int i = yy * width + xx;
          if (r2 < 1.0) {
            N.row(i) << x, y, std::sqrt(1.0 - r2);
          } else {
            N.row(i) << 0.0, 0.0, 1.0;  // flat background
            albedo[i] = 0.0;
          }
        }
      break;
    }
    case SceneKind::RandomSmooth: {
      // Normals of a random low-frequency height field z(x, y).
      double ax = 0.15 + 0.2 * draw_uniform(rng);
      double ay = 0.15 + 0.2 * draw_uniform(rng);
      double px = draw_uniform(rng) * 2.0 * M_PI;
      double py = draw_uniform(rng) * 2.0 * M_PI;
      for (int yy = 0; yy < height; ++yy)
        for (int xx = 0; xx < width; ++xx) {
          double x = (2.0 * xx + 1.0) / width - 1.0;
          double y = (2.0 * yy + 1.0) / height - 1.0;
          double dzdx = ax * 2.0 * M_PI * std::cos(2.0 * M_PI * x + px);
          double dzdy = ay * 2.0 * M_PI * std::cos(2.0 * M_PI * y + py);
          Eigen::Vector3d nv(-dzdx, -dzdy, 1.0);
          N.row(yy * width + xx) = nv.normalized().transpose();
        }
      break;
    }
  }
  return N;
}

}  // namespace

SyntheticScene make_synthetic_scene(SceneKind kind, int height, int width,
                                    AlbedoPattern pattern, int num_lights,
                                    double noise_sigma, std::mt19937_64& rng) {
  if (height <= 0 || width <= 0)
    throw std::invalid_argument("make_synthetic_scene: invalid geometry");
  if (num_lights < 1)
    throw std::invalid_argument("make_synthetic_scene: need at least 1 light");

  SyntheticScene scene;
  scene.latents.albedo = make_albedo(pattern, height, width, rng);
  scene.latents.normals =
      make_normals(kind, height, width, scene.latents.albedo, rng);

  // Unit lights from the z > 0 hemisphere.
  scene.latents.lights.resize(3, num_lights);
  for (int p = 0; p < num_lights; ++p) {
    Eigen::Vector3d l;
    do {
      l << draw_normal(rng), draw_normal(rng), draw_normal(rng);
    } while (l.norm() < 1e-8);
    l[2] = std::abs(l[2]);
    scene.latents.lights.col(p) = l.normalized();
  }

  scene.images.height = height;
  scene.images.width = width;
  scene.images.pixels = render_mean(scene.latents);
  if (noise_sigma > 0.0) {
    for (int p = 0; p < num_lights; ++p)
      for (int i = 0; i < height * width; ++i)
        scene.images.pixels(i, p) += noise_sigma * draw_normal(rng);
  }
  scene.images.validate();
  return scene;
}

PhotometricFactors svd_photometric_stereo(const ImageStack& V) {
  V.validate();
  if (V.n_images() < 3)
    throw std::invalid_argument(
        "svd_photometric_stereo: need P >= 3 images for a rank-3 factorization");
  Eigen::BDCSVD<Matrix> svd(V.pixels, Eigen::ComputeThinU | Eigen::ComputeThinV);
  PhotometricFactors f;
  f.M = svd.matrixU().leftCols(3) * svd.singularValues().head(3).asDiagonal();
  f.L = svd.matrixV().leftCols(3).transpose();
  return f;
}

}  // namespace dln
