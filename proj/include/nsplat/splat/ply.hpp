#pragma once

#include <string>
#include <vector>

#include "nsplat/splat/types.hpp"

namespace nsplat::splat {

// Binary little-endian PLY. write_ply emits exactly these float32 vertex
// properties, in order:
//   x y z f_dc_0 f_dc_1 f_dc_2 opacity scale_0 scale_1 scale_2
//   rot_0 rot_1 rot_2 rot_3
// with rot_0..3 = (w, x, y, z). read_ply accepts extra float properties and
// any property order; quaternions are renormalized after the float32
// round-trip. Identical scenes serialize to identical bytes.
void write_ply(const std::vector<Gaussian3D>& scene, const std::string& path);
std::vector<Gaussian3D> read_ply(const std::string& path);

// Vertex positions only; needs just x, y, z properties.
std::vector<Vec3> read_ply_positions(const std::string& path);

}  // namespace nsplat::splat
