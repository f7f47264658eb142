#include "dln/container.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dln/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payload is little-endian; big-endian hosts need a "
              "byte-swapping load path that was never required here");

namespace dln {

namespace {

std::int64_t element_count(const std::vector<std::int64_t>& dims) {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

}  // namespace

const Container::Entry& Container::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw DataError("container has no tensor named '" + name + "'");
}

bool Container::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

void Container::put(const std::string& name, const Matrix& m) {
  if (!valid_name(name)) throw std::invalid_argument("bad tensor name");
  Entry e;
  e.name = name;
  e.dims = {m.rows(), m.cols()};
  e.data.assign(m.data(), m.data() + m.size());
  entries_.push_back(std::move(e));
}

void Container::put(const std::string& name, const Vector& v) {
  if (!valid_name(name)) throw std::invalid_argument("bad tensor name");
  Entry e;
  e.name = name;
  e.dims = {v.size()};
  e.data.assign(v.data(), v.data() + v.size());
  entries_.push_back(std::move(e));
}

void Container::put_scalar(const std::string& name, double value) {
  if (!valid_name(name)) throw std::invalid_argument("bad tensor name");
  Entry e;
  e.name = name;
  e.data.assign(1, value);
  entries_.push_back(std::move(e));
}

void Container::set_meta(const std::string& key, const std::string& value) {
  if (!valid_name(key)) throw std::invalid_argument("bad meta key");
  if (value.find('\n') != std::string::npos)
    throw std::invalid_argument("meta values are single-line");
  meta_.emplace_back(key, value);
}

Matrix Container::get_matrix(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dims.size() != 2)
    throw DataError("tensor '" + name + "' is not rank 2");
  Matrix m(e.dims[0], e.dims[1]);
  std::memcpy(m.data(), e.data.data(), e.data.size() * sizeof(double));
  return m;
}

Vector Container::get_vector(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dims.size() != 1)
    throw DataError("tensor '" + name + "' is not rank 1");
  Vector v(e.dims[0]);
  std::memcpy(v.data(), e.data.data(), e.data.size() * sizeof(double));
  return v;
}

double Container::get_scalar(const std::string& name) const {
  const Entry& e = find(name);
  if (!e.dims.empty()) throw DataError("tensor '" + name + "' is not scalar");
  return e.data[0];
}

bool Container::has_meta(const std::string& key) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return true;
  return false;
}

std::string Container::meta(const std::string& key,
                            const std::string& fallback) const {
  for (const auto& [k, v] : meta_)
    if (k == key) return v;
  return fallback;
}

std::vector<std::string> Container::tensor_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.name);
  return names;
}

void Container::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << "DLNC 1\n";
  for (const auto& [k, v] : meta_) out << "meta " << k << ' ' << v << '\n';
  std::int64_t offset = 0;
  for (const auto& e : entries_) {
    out << "tensor " << e.name << " f64 " << e.dims.size();
    for (auto d : e.dims) out << ' ' << d;
    out << ' ' << offset << '\n';
    offset += static_cast<std::int64_t>(e.data.size()) * 8;
  }
  out << "end\n";
  for (const auto& e : entries_)
    out.write(reinterpret_cast<const char*>(e.data.data()),
              static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  if (!out) throw DataError("short write to '" + path + "'");
}

Container Container::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "DLNC 1")
    throw DataError("'" + path + "' is not a DLNC 1 container");

  Container c;
  struct Pending {
    Entry entry;
    std::int64_t offset;
  };
  std::vector<Pending> pending;
  bool saw_end = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") {
      saw_end = true;
      break;
    }
    if (tag == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key.empty()) throw DataError("malformed meta line in '" + path + "'");
      c.meta_.emplace_back(key, value);
    } else if (tag == "tensor") {
      Pending p;
      std::string type;
      std::size_t rank = 0;
      ls >> p.entry.name >> type >> rank;
      if (!ls || type != "f64" || rank > 8)
        throw DataError("malformed tensor line in '" + path + "'");
      p.entry.dims.resize(rank);
      for (auto& d : p.entry.dims) ls >> d;
      ls >> p.offset;
      if (!ls || p.offset < 0)
        throw DataError("malformed tensor line in '" + path + "'");
      for (auto d : p.entry.dims)
        if (d < 0) throw DataError("negative dimension in '" + path + "'");
      pending.push_back(std::move(p));
    } else {
      throw DataError("unexpected header line in '" + path + "': " + line);
    }
  }
  if (!saw_end) throw DataError("container '" + path + "' has no end marker");

  const std::streampos payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const std::int64_t payload_len =
      static_cast<std::int64_t>(in.tellg() - payload_start);

  std::int64_t expected = 0;
  for (const auto& p : pending) {
    const std::int64_t bytes = element_count(p.entry.dims) * 8;
    if (p.offset + bytes > payload_len)
      throw DataError("tensor '" + p.entry.name + "' overruns the payload");
    expected = std::max(expected, p.offset + bytes);
  }
  if (expected != payload_len)
    throw DataError("payload length disagrees with the tensor directory");

  for (auto& p : pending) {
    const std::int64_t count = element_count(p.entry.dims);
    p.entry.data.resize(static_cast<std::size_t>(count));
    in.seekg(payload_start + static_cast<std::streamoff>(p.offset));
    in.read(reinterpret_cast<char*>(p.entry.data.data()),
            static_cast<std::streamsize>(count * 8));
    if (!in) throw DataError("short read in '" + path + "'");
    c.entries_.push_back(std::move(p.entry));
  }
  return c;
}

// --- model / latents packing -------------------------------------------------

namespace {

void pack_stack(Container& c, const std::string& prefix, const DbnStack& s) {
  c.put(prefix + ".weights", s.bottom.weights);
  c.put(prefix + ".visible_bias", s.bottom.visible_bias);
  c.put(prefix + ".hidden_bias", s.bottom.hidden_bias);
  c.put(prefix + ".visible_var", s.bottom.visible_var);
  c.put_scalar(prefix + ".upper_count",
               static_cast<double>(s.upper.size()));
  for (std::size_t k = 0; k < s.upper.size(); ++k) {
    const std::string up = prefix + ".upper" + std::to_string(k);
    c.put(up + ".weights", s.upper[k].weights);
    c.put(up + ".visible_bias", s.upper[k].visible_bias);
    c.put(up + ".hidden_bias", s.upper[k].hidden_bias);
  }
}

DbnStack unpack_stack(const Container& c, const std::string& prefix) {
  DbnStack s;
  s.bottom.weights = c.get_matrix(prefix + ".weights");
  s.bottom.visible_bias = c.get_vector(prefix + ".visible_bias");
  s.bottom.hidden_bias = c.get_vector(prefix + ".hidden_bias");
  s.bottom.visible_var = c.get_vector(prefix + ".visible_var");
  const int upper = static_cast<int>(c.get_scalar(prefix + ".upper_count"));
  for (int k = 0; k < upper; ++k) {
    const std::string up = prefix + ".upper" + std::to_string(k);
    RbmParams r;
    r.weights = c.get_matrix(up + ".weights");
    r.visible_bias = c.get_vector(up + ".visible_bias");
    r.hidden_bias = c.get_vector(up + ".hidden_bias");
    s.upper.push_back(std::move(r));
  }
  return s;
}

}  // namespace

Container pack_model(const DlnModel& m, std::uint64_t seed,
                     const TrainConfig* provenance) {
  Container c;
  c.set_meta("kind", "dln-model");
  c.set_meta("seed", std::to_string(seed));
  if (provenance) {
    std::ostringstream os;
    os << "em_iters=" << provenance->em_iters
       << " e_step_sweeps=" << provenance->e_step_sweeps
       << " cd_steps=" << provenance->cd_steps
       << " rate_albedo=" << provenance->rate_albedo
       << " rate_normal=" << provenance->rate_normal
       << " translation_augment=" << provenance->translation_augment
       << " n_hidden_albedo=" << provenance->n_hidden_albedo
       << " n_hidden_normal=" << provenance->n_hidden_normal
       << " pretrain_epochs=" << provenance->pretrain_epochs;
    c.set_meta("train_config", os.str());
  }
  c.put_scalar("height", m.height);
  c.put_scalar("width", m.width);
  c.put_scalar("eta", m.eta);
  pack_stack(c, "albedo_prior", m.albedo_prior);
  pack_stack(c, "normal_prior", m.normal_prior);
  c.put("lighting.mean", Vector(m.lighting.mean));
  c.put("lighting.precision", Matrix(m.lighting.precision));
  c.put("noise.sigma2", m.noise.sigma2);
  return c;
}

DlnModel unpack_model(const Container& c) {
  if (c.meta("kind") != "dln-model")
    throw DataError("container does not hold a model");
  DlnModel m;
  m.height = static_cast<int>(c.get_scalar("height"));
  m.width = static_cast<int>(c.get_scalar("width"));
  m.eta = c.get_scalar("eta");
  m.albedo_prior = unpack_stack(c, "albedo_prior");
  m.normal_prior = unpack_stack(c, "normal_prior");
  m.lighting.mean = Eigen::Vector3d(c.get_vector("lighting.mean"));
  m.lighting.precision = Eigen::Matrix3d(c.get_matrix("lighting.precision"));
  m.noise.sigma2 = c.get_vector("noise.sigma2");
  m.validate();
  return m;
}

Container pack_latents(const SceneLatents& s, int height, int width) {
  Container c;
  c.set_meta("kind", "dln-latents");
  c.put_scalar("height", height);
  c.put_scalar("width", width);
  c.put("albedo", s.albedo);
  c.put("normals", s.normals);
  c.put("lights", s.lights);
  return c;
}

SceneLatents unpack_latents(const Container& c, int* height, int* width) {
  if (c.meta("kind") != "dln-latents")
    throw DataError("container does not hold latents");
  SceneLatents s;
  s.albedo = c.get_vector("albedo");
  s.normals = c.get_matrix("normals");
  s.lights = c.get_matrix("lights");
  if (height) *height = static_cast<int>(c.get_scalar("height"));
  if (width) *width = static_cast<int>(c.get_scalar("width"));
  return s;
}

}  // namespace dln
