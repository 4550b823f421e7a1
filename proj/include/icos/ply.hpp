#pragma once

#include <Eigen/Core>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "icos/core.hpp"

namespace icos {

enum class PlyFormat { Ascii, BinaryLittleEndian };

namespace detail {

inline int ply_scalar_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8")
    return 1;
  if (type == "short" || type == "ushort" || type == "int16" ||
      type == "uint16")
    return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
      type == "float" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

inline bool ply_is_real(const std::string& type) {
  return type == "float" || type == "float32" || type == "double" ||
         type == "float64";
}

inline float read_le_float(const unsigned char* bytes) {
  std::uint32_t raw = std::uint32_t(bytes[0]) | std::uint32_t(bytes[1]) << 8 |
                      std::uint32_t(bytes[2]) << 16 |
                      std::uint32_t(bytes[3]) << 24;
  return std::bit_cast<float>(raw);
}

inline double read_le_double(const unsigned char* bytes) {
  std::uint64_t raw = 0;
  for (int i = 7; i >= 0; --i) raw = raw << 8 | bytes[i];
  return std::bit_cast<double>(raw);
}

inline void write_le_float(std::ostream& out, float value) {
  const std::uint32_t raw = std::bit_cast<std::uint32_t>(value);
  const unsigned char bytes[4] = {
      static_cast<unsigned char>(raw), static_cast<unsigned char>(raw >> 8),
      static_cast<unsigned char>(raw >> 16),
      static_cast<unsigned char>(raw >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

struct PlyVertexLayout {
  PlyFormat format = PlyFormat::Ascii;
  long vertex_count = 0;
  int property_count = 0;
  int coordinate_slot[3] = {-1, -1, -1};  // property index of x, y, z
  std::vector<std::string> property_types;
  int stride = 0;  // bytes per binary vertex
  int coordinate_offset[3] = {0, 0, 0};
};

// Parses the header up to end_header. Only the leading vertex element is
// consumed by the loader; anything after its data is ignored, so meshes with
// trailing face elements still load their coordinates.
inline PlyVertexLayout parse_ply_header(std::istream& in,
                                        const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") throw UnsupportedFormat(path + ": not a PLY file");

  PlyVertexLayout layout;
  bool format_seen = false;
  bool in_vertex_element = false;
  bool vertex_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream words(line);
    std::string keyword;
    words >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info")
      continue;
    if (keyword == "format") {
      std::string kind, version;
      words >> kind >> version;
      if (kind == "ascii")
        layout.format = PlyFormat::Ascii;
      else if (kind == "binary_little_endian")
        layout.format = PlyFormat::BinaryLittleEndian;
      else
        throw UnsupportedFormat(path + ": unsupported PLY format " + kind);
      format_seen = true;
      continue;
    }
    if (keyword == "element") {
      std::string name;
      long count = 0;
      words >> name >> count;
      if (!vertex_seen) {
        if (name != "vertex")
          throw UnsupportedFormat(path + ": first element must be vertex");
        if (count < 0) throw UnsupportedFormat(path + ": bad vertex count");
        layout.vertex_count = count;
        vertex_seen = true;
        in_vertex_element = true;
      } else {
        in_vertex_element = false;  // later elements are ignored
      }
      continue;
    }
    if (keyword == "property") {
      if (!in_vertex_element) continue;
      std::string type;
      words >> type;
      if (type == "list")
        throw UnsupportedFormat(path + ": list property in vertex element");
      std::string name;
      words >> name;
      const int size = ply_scalar_size(type);
      if (size == 0)
        throw UnsupportedFormat(path + ": unknown property type " + type);
      const int slot = layout.property_count;
      if (name == "x" || name == "y" || name == "z") {
        if (!ply_is_real(type))
          throw UnsupportedFormat(path + ": coordinate property " + name +
                                  " must be float or double");
        layout.coordinate_slot[name[0] - 'x'] = slot;
        layout.coordinate_offset[name[0] - 'x'] = layout.stride;
      }
      layout.property_types.push_back(type);
      layout.stride += size;
      ++layout.property_count;
      continue;
    }
    if (keyword == "end_header") {
      if (!format_seen) throw UnsupportedFormat(path + ": missing format line");
      if (!vertex_seen)
        throw UnsupportedFormat(path + ": missing vertex element");
      for (int axis = 0; axis < 3; ++axis)
        if (layout.coordinate_slot[axis] < 0)
          throw UnsupportedFormat(path + ": vertex element lacks x/y/z");
      return layout;
    }
    throw UnsupportedFormat(path + ": unexpected header line '" + line + "'");
  }
  throw UnsupportedFormat(path + ": header ended before end_header");
}

}  // namespace detail

inline std::vector<Eigen::Vector3d> load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  const detail::PlyVertexLayout layout = detail::parse_ply_header(in, path);

  std::vector<Eigen::Vector3d> points;
  points.reserve(layout.vertex_count);
  if (layout.format == PlyFormat::Ascii) {
    std::vector<double> values(layout.property_count);
    for (long v = 0; v < layout.vertex_count; ++v) {
      for (int p = 0; p < layout.property_count; ++p)
        if (!(in >> values[p]))
          throw IoError(path + ": truncated vertex data");
      points.emplace_back(values[layout.coordinate_slot[0]],
                          values[layout.coordinate_slot[1]],
                          values[layout.coordinate_slot[2]]);
    }
  } else {
    std::vector<unsigned char> record(layout.stride);
    for (long v = 0; v < layout.vertex_count; ++v) {
      in.read(reinterpret_cast<char*>(record.data()), layout.stride);
      if (in.gcount() != layout.stride)
        throw IoError(path + ": truncated vertex data");
      Eigen::Vector3d p;
      for (int axis = 0; axis < 3; ++axis) {
        const unsigned char* at = record.data() + layout.coordinate_offset[axis];
        const std::string& type =
            layout.property_types[layout.coordinate_slot[axis]];
        p[axis] = (type == "double" || type == "float64")
                      ? detail::read_le_double(at)
                      : detail::read_le_float(at);
      }
      points.push_back(p);
    }
  }
  return points;
}

inline void save_ply(const std::string& path,
                     const std::vector<Eigen::Vector3d>& points,
                     PlyFormat format = PlyFormat::Ascii) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "ply\n"
      << (format == PlyFormat::Ascii ? "format ascii 1.0\n"
                                     : "format binary_little_endian 1.0\n")
      << "element vertex " << points.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "end_header\n";
  if (format == PlyFormat::Ascii) {
    char line[96];
    for (const Eigen::Vector3d& p : points) {
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g\n", p.x(), p.y(),
                    p.z());
      out << line;
    }
  } else {
    for (const Eigen::Vector3d& p : points) {
      detail::write_le_float(out, static_cast<float>(p.x()));
      detail::write_le_float(out, static_cast<float>(p.y()));
      detail::write_le_float(out, static_cast<float>(p.z()));
    }
  }
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace icos
