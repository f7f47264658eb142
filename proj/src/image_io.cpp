#include "dln/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "dln/errors.hpp"

namespace dln {

namespace {

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

// next token after whitespace and '#' comments, per the PNM grammar
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#')
        tok.push_back(static_cast<char>(in.get()));
      return tok;
    }
  }
  return tok;
}

long pnm_int(std::istream& in, const std::string& path) {
  const std::string tok = pnm_token(in);
  if (tok.empty()) throw DataError("truncated header in '" + path + "'");
  try {
    return std::stol(tok);
  } catch (const std::exception&) {
    throw DataError("bad header value '" + tok + "' in '" + path + "'");
  }
}

}  // namespace

void write_pgm(const std::string& path, const Matrix& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.cols()));
  for (int y = 0; y < img.rows(); ++y) {
    for (int x = 0; x < img.cols(); ++x)
      row[static_cast<std::size_t>(x)] = quantize(img(y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("short write to '" + path + "'");
}

void write_ppm(const std::string& path, const Matrix& r, const Matrix& g,
               const Matrix& b) {
  if (r.rows() != g.rows() || r.rows() != b.rows() || r.cols() != g.cols() ||
      r.cols() != b.cols())
    throw std::invalid_argument("channel shapes disagree");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "P6\n" << r.cols() << ' ' << r.rows() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(r.cols()) * 3);
  for (int y = 0; y < r.rows(); ++y) {
    for (int x = 0; x < r.cols(); ++x) {
      row[static_cast<std::size_t>(3 * x)] = quantize(r(y, x));
      row[static_cast<std::size_t>(3 * x + 1)] = quantize(g(y, x));
      row[static_cast<std::size_t>(3 * x + 2)] = quantize(b(y, x));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("short write to '" + path + "'");
}

Matrix read_gray(const std::string& path, std::string* warning) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  const std::string magic = pnm_token(in);
  if (magic != "P2" && magic != "P5" && magic != "P6")
    throw DataError("'" + path + "' is not a P2/P5/P6 image");
  const long w = pnm_int(in, path);
  const long h = pnm_int(in, path);
  const long maxval = pnm_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    throw DataError("bad image geometry in '" + path + "'");

  Matrix img(h, w);
  const double scale = 1.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) img(y, x) = pnm_int(in, path) * scale;
    return img;
  }

  // binary variants: exactly one whitespace byte separates header and raster
  in.get();
  const long channels = magic == "P6" ? 3 : 1;
  const long bytes_per = maxval > 255 ? 2 : 1;
  std::vector<std::uint8_t> raster(
      static_cast<std::size_t>(w * h * channels * bytes_per));
  in.read(reinterpret_cast<char*>(raster.data()),
          static_cast<std::streamsize>(raster.size()));
  if (!in) throw DataError("truncated raster in '" + path + "'");

  auto sample = [&](std::size_t idx) {
    if (bytes_per == 1) return raster[idx] * scale;
    return (raster[2 * idx] * 256.0 + raster[2 * idx + 1]) * scale;  // big-endian
  };
  if (magic == "P5") {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x)
        img(y, x) = sample(static_cast<std::size_t>(y * w + x));
    return img;
  }
  if (warning)
    *warning = "'" + path + "' is color; converted to luma (Rec. 601)";
  for (long y = 0; y < h; ++y)
    for (long x = 0; x < w; ++x) {
      const std::size_t base = static_cast<std::size_t>(3 * (y * w + x));
      img(y, x) = 0.299 * sample(base) + 0.587 * sample(base + 1) +
                  0.114 * sample(base + 2);
    }
  return img;
}

void write_normals_ppm(const std::string& path, const Matrix& normals,
                       int height, int width) {
  if (normals.rows() != static_cast<long>(height) * width ||
      normals.cols() != 3)
    throw std::invalid_argument("normal field does not match geometry");
  Matrix r(height, width), g(height, width), b(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int i = y * width + x;
      r(y, x) = 0.5 * (normals(i, 0) + 1.0);
      g(y, x) = 0.5 * (normals(i, 1) + 1.0);
      b(y, x) = 0.5 * (normals(i, 2) + 1.0);
    }
  write_ppm(path, r, g, b);
}

Matrix area_resize(const Matrix& img, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0)
    throw std::invalid_argument("target shape must be positive");
  const int in_h = static_cast<int>(img.rows());
  const int in_w = static_cast<int>(img.cols());
  if (in_h == out_height && in_w == out_width) return img;

  Matrix out(out_height, out_width);
  const double sy = static_cast<double>(in_h) / out_height;
  const double sx = static_cast<double>(in_w) / out_width;
  for (int oy = 0; oy < out_height; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < out_width; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc = 0.0, area = 0.0;
      for (int y = static_cast<int>(y0); y < y1 && y < in_h; ++y) {
        const double wy =
            std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (int x = static_cast<int>(x0); x < x1 && x < in_w; ++x) {
          const double wx =
              std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          acc += wy * wx * img(y, x);
          area += wy * wx;
        }
      }
      out(oy, ox) = area > 0 ? acc / area : 0.0;
    }
  }
  return out;
}

Vector image_to_vector(const Matrix& img) {
  Vector v(img.size());
  for (int y = 0; y < img.rows(); ++y)
    for (int x = 0; x < img.cols(); ++x) v[y * img.cols() + x] = img(y, x);
  return v;
}

Matrix vector_to_image(const Vector& v, int height, int width) {
  if (v.size() != static_cast<long>(height) * width)
    throw std::invalid_argument("vector length does not match geometry");
  Matrix img(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) img(y, x) = v[y * width + x];
  return img;
}

}  // namespace dln
