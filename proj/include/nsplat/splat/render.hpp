#pragma once

#include <vector>

#include "nsplat/splat/types.hpp"

namespace nsplat::splat {

// Low-pass floor added to the projected 2D covariance (pixel^2).
inline constexpr double kCovRegularization = 0.3;

// Sigma = R S S^T R^T; symmetric, PSD, eigenvalues scale^2.
Mat3 covariance_from_rs(const Quat& rotation, const Vec3& scale);

// exp(-1/2 (p-mu)^T Sigma^-1 (p-mu)); 1 at p = mu.
double gaussian_eval(const Vec3& mu, const Mat3& sigma, const Vec3& p);

struct Projected {
  bool culled = false;  // camera-space z <= near
  Vec2 mean2d;          // pixel coordinates
  double cov_xx = 0.0, cov_xy = 0.0, cov_yy = 0.0;  // regularized Sigma'
  double depth = 0.0;   // camera-space z
};

Projected project_gaussian(const Gaussian3D& g, const Camera& cam,
                           double cov_reg = kCovRegularization);

// One pixel's front-to-back stack entry: effective alpha already includes
// the 2D footprint term.
struct PixelContribution {
  Vec3 color;
  double effective_alpha = 0.0;
};

struct CompositeResult {
  Vec3 color;
  double alpha = 0.0;  // 1 - product of (1 - a'_i)
};

CompositeResult composite_pixel(const std::vector<PixelContribution>& contribs);

// Depth-sorted (stable index tie-break) alpha compositing of the whole
// scene; background fills through the residual transmittance.
RenderedImage render(const std::vector<Gaussian3D>& scene, const Camera& cam,
                     const Vec3& background);

struct GaussianGrads {
  Vec3 mu;
  double rotation[4] = {0, 0, 0, 0};  // d/d(w,x,y,z) of the raw quaternion
  Vec3 scale;
  Vec3 color;
  double opacity = 0.0;
};

// Gradients of L = sum(dL_dpixels . pixels) for every Gaussian parameter.
// dL_dpixels has the same layout as RenderedImage::rgb.
std::vector<GaussianGrads> render_backward(const std::vector<Gaussian3D>& scene,
                                           const Camera& cam,
                                           const Vec3& background,
                                           const std::vector<double>& dL_dpixels);

}  // namespace nsplat::splat
