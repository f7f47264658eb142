#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>

#include "dln/grbm.hpp"

namespace dln {

/// P grayscale images of one object, pixels in rows (N_v x P).
/// Pixel order is row-major: index = y * width + x.
struct ImageStack {
  Matrix pixels;
  int height = 0;
  int width = 0;

  int n_pixels() const { return height * width; }
  int n_images() const { return static_cast<int>(pixels.cols()); }
  void validate() const;
};

/// Per-object latent variables: albedo a (N_v), surface normals N (N_v x 3,
/// rows n_i), lights L (3 x P, direction times intensity).
struct SceneLatents {
  Vector albedo;
  Matrix normals;
  Matrix lights;

  int n_pixels() const { return static_cast<int>(albedo.size()); }
  int n_images() const { return static_cast<int>(lights.cols()); }
};

/// Gaussian prior over a light vector; precision parameterization.
struct LightingPrior {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d precision = Eigen::Matrix3d::Identity();

  // Throws NumericError unless precision is symmetric positive definite.
  void validate() const;
  Eigen::Matrix3d covariance() const;
};

/// Per-pixel observation noise variance.
struct NoiseModel {
  Vector sigma2;
  void validate() const;
};

// Pixel-major vectorization of the normals: [n_1x n_1y n_1z n_2x ...].
Vector normals_to_vec(const Matrix& normals);
Matrix vec_to_normals(const Vector& v);

// s[i,p] = n_i . l_p, no clamping.
Matrix shading(const Matrix& normals, const Matrix& lights);

// mean[i,p] = a_i * (n_i . l_p); clamp_nonneg applies max(., 0) for display.
Matrix render_mean(const SceneLatents& s, bool clamp_nonneg = false);

// Per-pixel Gaussian draw around render_mean.
ImageStack render_stochastic(const SceneLatents& s, const NoiseModel& noise,
                             int height, int width, std::mt19937_64& rng);

enum class SceneKind { Sphere, RandomSmooth, Flat };
enum class AlbedoPattern { Uniform, Checker, Gradient, Bimodal };

SceneKind parse_scene_kind(const std::string& s);
AlbedoPattern parse_albedo_pattern(const std::string& s);

struct SyntheticScene {
  SceneLatents latents;
  ImageStack images;
};

// Synthetic Lambertian test scene. Lights are unit vectors from the z>0
// hemisphere; noise_sigma=0 gives the exact rank-3 render. The Bimodal
// pattern picks one of two half-field prototypes from the seed stream, so a
// population of scenes shares a two-mode albedo distribution.
SyntheticScene make_synthetic_scene(SceneKind kind, int height, int width,
                                    AlbedoPattern pattern, int num_lights,
                                    double noise_sigma, std::mt19937_64& rng);

struct PhotometricFactors {
  Matrix M;  // N_v x 3, rows ~ a_i n_i up to a linear map
  Matrix L;  // 3 x P
};

// Best rank-3 factorization V ~= M L via truncated SVD. The classical
// baseline; recovers shape and albedo up to an invertible 3x3 transform.
// Throws std::invalid_argument when P < 3.
PhotometricFactors svd_photometric_stereo(const ImageStack& V);

}  // namespace dln
