#pragma once

#include <vector>

#include "nsplat/core/linalg.hpp"

namespace nsplat::splat {

// One anisotropic 3D Gaussian primitive: position, rotation (unit
// quaternion), per-axis scale, constant color, opacity.
struct Gaussian3D {
  Vec3 mu;
  Quat rotation;
  Vec3 scale{1.0, 1.0, 1.0};
  Vec3 color{0.5, 0.5, 0.5};
  double opacity = 0.5;
};

// Strict invariants (used at IO boundaries and initialization; the renderer
// itself only needs positive scales and finite values).
void validate_gaussian(const Gaussian3D& g);

// Pinhole camera. Camera space looks down +z; a point is in front of the
// camera when its camera-space z exceeds `near`. Pixel (x, y) samples the
// continuous image plane at (x + 0.5, y + 0.5).
struct Camera {
  Mat4 world_to_camera = Mat4::identity();
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  double near = 0.01;
};

void validate_camera(const Camera& cam);

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                      double fov_y_deg, int width, int height,
                      double near = 0.01);

// Composited output; rgb is row-major, interleaved, values in [0, 1].
struct RenderedImage {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;    // height * width * 3
  std::vector<double> alpha;  // height * width

  RenderedImage() = default;
  RenderedImage(int w, int h)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.0),
        alpha(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y, int c) {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

}  // namespace nsplat::splat
