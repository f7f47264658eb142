#pragma once

#include <string>

#include "dln/grbm.hpp"

namespace dln {

// Images in memory are h x w matrices indexed (y, x) with values in [0,1].

// Binary P5, maxval 255; values clamped to [0,1] then rounded.
void write_pgm(const std::string& path, const Matrix& img);
// Binary P6 from three channel planes of equal shape.
void write_ppm(const std::string& path, const Matrix& r, const Matrix& g,
               const Matrix& b);

// Reads P2/P5 grayscale (maxval up to 65535). P6 color is accepted and
// converted to luma with Rec. 601 weights; *warning is set when that
// happens. Values come back scaled to [0,1].
Matrix read_gray(const std::string& path, std::string* warning = nullptr);

// Normal field (N_v x 3, pixel-major rows) displayed as RGB (n+1)/2.
void write_normals_ppm(const std::string& path, const Matrix& normals,
                       int height, int width);

// Box-filter (area-average) resample to the target shape.
Matrix area_resize(const Matrix& img, int out_height, int out_width);

// Row-major flattening (index = y * width + x) and back.
Vector image_to_vector(const Matrix& img);
Matrix vector_to_image(const Vector& v, int height, int width);

}  // namespace dln
