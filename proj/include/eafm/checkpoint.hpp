#pragma once

// Checkpoint container: a text header (format version, shape, metadata,
// parameter-group names and shapes) terminated by `end_header`, followed by
// little-endian float32 arrays in declared group order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "eafm/error.hpp"
#include "eafm/model.hpp"

namespace eafm {

inline constexpr const char* kCheckpointMagic = "EAFM-CHECKPOINT";

namespace detail {

inline void put_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline float get_f32_le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint: truncated parameter data");
  const std::uint32_t bits = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                             std::uint32_t(b[3]) << 24;
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const ModelParams<float>& model) {
  const auto shape = model.shape();
  os << kCheckpointMagic << '\n';
  os << "format_version=" << ModelParams<float>::kFormatVersion << '\n';
  os << "dim=" << shape.dim << '\n';
  os << "rel_layers=" << shape.rel_layers << '\n';
  os << "ent_layers=" << shape.ent_layers << '\n';
  for (const auto& [k, v] : model.metadata) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint: metadata entry '" + k + "' is not representable");
    }
    os << "meta." << k << '=' << v << '\n';
  }
  for (const auto& [name, m] : model.groups()) {
    os << "group=" << name << ' ' << m->rows() << ' ' << m->cols() << '\n';
  }
  os << "end_header\n";
  for (const auto& [name, m] : model.groups()) {
    for (Eigen::Index i = 0; i < m->size(); ++i) detail::put_f32_le(os, m->data()[i]);
  }
  if (!os) throw DataError("checkpoint: write failed");
}

inline ModelParams<float> load_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) throw DataError("checkpoint: bad magic");
  ModelShape shape{0, 0, 0};
  int version = -1;
  std::map<std::string, std::string> meta;
  struct Declared {
    std::string name;
    long rows, cols;
  };
  std::vector<Declared> declared;
  while (true) {
    if (!std::getline(is, line)) throw DataError("checkpoint: header not terminated");
    if (line == "end_header") break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed header line '" + line + "'");
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "format_version") {
      version = std::stoi(value);
    } else if (key == "dim") {
      shape.dim = std::stoul(value);
    } else if (key == "rel_layers") {
      shape.rel_layers = std::stoul(value);
    } else if (key == "ent_layers") {
      shape.ent_layers = std::stoul(value);
    } else if (key.rfind("meta.", 0) == 0) {
      meta[key.substr(5)] = value;
    } else if (key == "group") {
      std::istringstream ss(value);
      Declared d;
      if (!(ss >> d.name >> d.rows >> d.cols)) throw DataError("checkpoint: malformed group line");
      declared.push_back(d);
    } else {
      throw DataError("checkpoint: unknown header key '" + key + "'");
    }
  }
  if (version != ModelParams<float>::kFormatVersion) {
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));
  }
  if (shape.dim == 0 || shape.rel_layers == 0 || shape.ent_layers == 0) throw DataError("checkpoint: missing shape");
  ModelParams<float> model = ModelParams<float>::zeros(shape);
  model.metadata = std::move(meta);
  auto groups = model.groups();
  if (groups.size() != declared.size()) throw DataError("checkpoint: parameter group count mismatch");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const auto& [name, m] = groups[i];
    if (declared[i].name != name || declared[i].rows != m->rows() || declared[i].cols != m->cols()) {
      throw DataError("checkpoint: group " + declared[i].name + " does not match expected " + name);
    }
  }
  for (auto& [name, m] : groups) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = detail::get_f32_le(is);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes");
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  save_checkpoint(os, model);
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  return load_checkpoint(is);
}

}  // namespace eafm
