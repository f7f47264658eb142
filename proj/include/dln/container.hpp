#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dln/learning.hpp"
#include "dln/posterior.hpp"

namespace dln {

/// Named-tensor file: a text header (version line, meta lines, tensor
/// directory) followed by raw little-endian float64 payloads. Round-trips
/// bitwise.
///
///   DLNC 1
///   meta <key> <value to end of line>
///   tensor <name> f64 <rank> <dim...> <byte offset>
///   end
///   <payload>
class Container {
 public:
  void put(const std::string& name, const Matrix& m);
  void put(const std::string& name, const Vector& v);
  void put_scalar(const std::string& name, double value);
  void set_meta(const std::string& key, const std::string& value);

  bool has(const std::string& name) const;
  Matrix get_matrix(const std::string& name) const;
  Vector get_vector(const std::string& name) const;
  double get_scalar(const std::string& name) const;
  bool has_meta(const std::string& key) const;
  std::string meta(const std::string& key,
                   const std::string& fallback = "") const;

  std::vector<std::string> tensor_names() const;

  // Throws DataError on malformed files, version mismatch, or directory
  // sizes that disagree with the payload.
  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  struct Entry {
    std::string name;
    std::vector<std::int64_t> dims;  // rank 0 = scalar
    std::vector<double> data;        // column-major for rank 2
  };
  const Entry& find(const std::string& name) const;
  std::vector<Entry> entries_;
  std::vector<std::pair<std::string, std::string>> meta_;
};

// Model <-> container. Geometry, eta, and the seed ride along; provenance
// (when given) is stored as meta text for the record only.
Container pack_model(const DlnModel& m, std::uint64_t seed,
                     const TrainConfig* provenance = nullptr);
DlnModel unpack_model(const Container& c);

Container pack_latents(const SceneLatents& s, int height, int width);
SceneLatents unpack_latents(const Container& c, int* height = nullptr,
                            int* width = nullptr);

}  // namespace dln
