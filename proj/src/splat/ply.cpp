#include "nsplat/splat/ply.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nsplat/core/error.hpp"

namespace nsplat::splat {

namespace {

constexpr const char* kProperties[14] = {
    "x",       "y",       "z",       "f_dc_0", "f_dc_1",
    "f_dc_2",  "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0",   "rot_1",   "rot_2",   "rot_3"};

void put_f32le(std::string& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

float get_f32le(const unsigned char* p) {
  const std::uint32_t u = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                          std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

struct PlyHeader {
  bool has_vertex_element = false;
  std::size_t vertex_count = 0;
  std::vector<std::string> property_names;  // float32 vertex properties
  std::size_t body_offset = 0;
};

PlyHeader parse_header(const std::string& blob, const std::string& path) {
  PlyHeader hdr;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = blob.find('\n', pos);
    if (nl == std::string::npos)
      throw_validation("'" + path + "': truncated ply header");
    std::string line = blob.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl + 1;
    return line;
  };

  if (next_line() != "ply") throw_validation("'" + path + "' is not a ply file");
  if (next_line() != "format binary_little_endian 1.0")
    throw_validation("'" + path + "': only binary_little_endian 1.0 ply is supported");

  bool in_vertex = false;
  for (;;) {
    const std::string line = next_line();
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string name;
      std::size_t count = 0;
      ss >> name >> count;
      if (name == "vertex") {
        hdr.has_vertex_element = true;
        hdr.vertex_count = count;
        in_vertex = true;
      } else {
        in_vertex = false;
        if (count != 0)
          throw_validation("'" + path + "': only vertex elements are supported");
      }
      continue;
    }
    if (word == "property") {
      if (!in_vertex) continue;
      std::string type, name;
      ss >> type >> name;
      if (type != "float" && type != "float32")
        throw_validation("'" + path + "': unsupported vertex property type '" +
                         type + "'");
      hdr.property_names.push_back(name);
      continue;
    }
    throw_validation("'" + path + "': unexpected header line '" + line + "'");
  }
  if (!hdr.has_vertex_element)
    throw_validation("'" + path + "': ply declares no vertex element");
  if (hdr.property_names.empty())
    throw_validation("'" + path + "': ply vertex element has no properties");
  hdr.body_offset = pos;
  const std::size_t need =
      hdr.body_offset + 4ull * hdr.property_names.size() * hdr.vertex_count;
  if (blob.size() < need)
    throw_validation("'" + path + "': ply body shorter than the header declares");
  return hdr;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_validation("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int property_index(const PlyHeader& hdr, const std::string& name,
                   const std::string& path) {
  for (std::size_t i = 0; i < hdr.property_names.size(); ++i)
    if (hdr.property_names[i] == name) return static_cast<int>(i);
  throw_validation("'" + path + "': ply is missing property '" + name + "'");
}

}  // namespace

void write_ply(const std::vector<Gaussian3D>& scene, const std::string& path) {
  std::string out;
  out += "ply\n";
  out += "format binary_little_endian 1.0\n";
  out += "element vertex " + std::to_string(scene.size()) + "\n";
  for (const char* p : kProperties)
    out += std::string("property float ") + p + "\n";
  out += "end_header\n";
  for (const Gaussian3D& g : scene) {
    const double fields[14] = {g.mu.x,       g.mu.y,       g.mu.z,
                               g.color.x,    g.color.y,    g.color.z,
                               g.opacity,    g.scale.x,    g.scale.y,
                               g.scale.z,    g.rotation.w, g.rotation.x,
                               g.rotation.y, g.rotation.z};
    for (const double f : fields) put_f32le(out, static_cast<float>(f));
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw_validation("cannot write '" + path + "'");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<Gaussian3D> read_ply(const std::string& path) {
  const std::string blob = slurp(path);
  const PlyHeader hdr = parse_header(blob, path);
  int idx[14];
  for (int i = 0; i < 14; ++i) idx[i] = property_index(hdr, kProperties[i], path);

  const std::size_t stride = 4 * hdr.property_names.size();
  const auto* base =
      reinterpret_cast<const unsigned char*>(blob.data()) + hdr.body_offset;
  std::vector<Gaussian3D> scene(hdr.vertex_count);
  for (std::size_t v = 0; v < hdr.vertex_count; ++v) {
    const unsigned char* rec = base + v * stride;
    auto f = [&](int i) {
      return static_cast<double>(get_f32le(rec + 4 * idx[i]));
    };
    Gaussian3D& g = scene[v];
    g.mu = {f(0), f(1), f(2)};
    g.color = {f(3), f(4), f(5)};
    g.opacity = f(6);
    g.scale = {f(7), f(8), f(9)};
    g.rotation = Quat{f(10), f(11), f(12), f(13)};
    if (g.rotation.norm() < 1e-12)
      throw_validation("'" + path + "': vertex with zero quaternion");
    g.rotation = g.rotation.normalized();
    validate_gaussian(g);
  }
  return scene;
}

std::vector<Vec3> read_ply_positions(const std::string& path) {
  const std::string blob = slurp(path);
  const PlyHeader hdr = parse_header(blob, path);
  const int ix = property_index(hdr, "x", path);
  const int iy = property_index(hdr, "y", path);
  const int iz = property_index(hdr, "z", path);

  const std::size_t stride = 4 * hdr.property_names.size();
  const auto* base =
      reinterpret_cast<const unsigned char*>(blob.data()) + hdr.body_offset;
  std::vector<Vec3> out(hdr.vertex_count);
  for (std::size_t v = 0; v < hdr.vertex_count; ++v) {
    const unsigned char* rec = base + v * stride;
    out[v] = {static_cast<double>(get_f32le(rec + 4 * ix)),
              static_cast<double>(get_f32le(rec + 4 * iy)),
              static_cast<double>(get_f32le(rec + 4 * iz))};
  }
  return out;
}

}  // namespace nsplat::splat
