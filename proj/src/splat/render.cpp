#include "nsplat/splat/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nsplat/core/error.hpp"
#include "nsplat/kernels/kernels.hpp"

namespace nsplat::splat {

void validate_gaussian(const Gaussian3D& g) {
  const double values[] = {g.mu.x,    g.mu.y,    g.mu.z,    g.rotation.w,
                           g.rotation.x, g.rotation.y, g.rotation.z,
                           g.scale.x, g.scale.y, g.scale.z, g.color.x,
                           g.color.y, g.color.z, g.opacity};
  for (const double v : values)
    if (!std::isfinite(v)) throw_validation("gaussian has non-finite fields");
  if (std::abs(g.rotation.norm() - 1.0) > 1e-9)
    throw_validation("gaussian rotation must be a unit quaternion");
  if (!(g.scale.x > 0.0) || !(g.scale.y > 0.0) || !(g.scale.z > 0.0))
    throw_validation("gaussian scales must be positive");
  if (g.opacity < 0.0 || g.opacity > 1.0)
    throw_validation("gaussian opacity must lie in [0, 1]");
  for (const double c : {g.color.x, g.color.y, g.color.z})
    if (c < 0.0 || c > 1.0)
      throw_validation("gaussian color must lie in [0, 1]");
}

void validate_camera(const Camera& cam) {
  if (cam.width < 1 || cam.height < 1)
    throw_validation("camera resolution must be at least 1x1");
  if (!(cam.near > 0.0)) throw_validation("camera near plane must be positive");
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0))
    throw_validation("camera focal lengths must be positive");
  const Mat3 r = cam.world_to_camera.rotation();
  const Mat3 rrt = r * r.transposed();
  const Mat3 eye = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    if (std::abs(rrt.m[i] - eye.m[i]) > 1e-9)
      throw_validation("camera rotation block must be orthonormal");
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up,
                      double fov_y_deg, int width, int height, double near) {
  const Vec3 fwd = normalized(target - eye);
  Vec3 side = cross(up, fwd);
  if (norm(side) < 1e-9)
    throw_validation("camera look direction is parallel to the up vector");
  side = normalized(side);
  const Vec3 cam_up = cross(fwd, side);

  Mat3 rot;  // rows: right, up, forward -> camera space
  rot.m = {side.x, side.y, side.z, cam_up.x, cam_up.y,
           cam_up.z, fwd.x,  fwd.y,  fwd.z};

  Camera cam;
  cam.world_to_camera = Mat4::from_rt(rot, rot * (eye * -1.0));
  cam.width = width;
  cam.height = height;
  const double f =
      (height / 2.0) / std::tan(fov_y_deg * std::numbers::pi / 360.0);
  cam.fx = f;
  cam.fy = f;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.near = near;
  validate_camera(cam);
  return cam;
}

Mat3 covariance_from_rs(const Quat& rotation, const Vec3& scale) {
  const Mat3 m = rotation_matrix(rotation) * Mat3::diag(scale);
  return m * m.transposed();
}

double gaussian_eval(const Vec3& mu, const Mat3& sigma, const Vec3& p) {
  const double d = det(sigma);
  if (!(std::abs(d) > 1e-300))
    throw_numeric("covariance is numerically singular");
  const Vec3 diff = p - mu;
  const Vec3 solved = inverse(sigma) * diff;
  return std::exp(-0.5 * dot(diff, solved));
}

Projected project_gaussian(const Gaussian3D& g, const Camera& cam,
                           double cov_reg) {
  const Vec3 t = cam.world_to_camera.transform_point(g.mu);
  Projected out;
  if (t.z <= cam.near) {
    out.culled = true;
    return out;
  }
  out.depth = t.z;
  out.mean2d = {cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy};

  // J is the Jacobian of the perspective map at the camera-space mean.
  const double j00 = cam.fx / t.z;
  const double j02 = -cam.fx * t.x / (t.z * t.z);
  const double j11 = cam.fy / t.z;
  const double j12 = -cam.fy * t.y / (t.z * t.z);

  const Mat3 w = cam.world_to_camera.rotation();
  const Mat3 cov = covariance_from_rs(g.rotation, g.scale);
  const Mat3 cw = w * cov * w.transposed();  // camera-space covariance

  // Sigma' = J (W Sigma W^T) J^T with J = [[j00, 0, j02], [0, j11, j12]].
  const double r0x = j00 * cw(0, 0) + j02 * cw(2, 0);
  const double r0z = j00 * cw(0, 2) + j02 * cw(2, 2);
  const double r1x = j11 * cw(1, 0) + j12 * cw(2, 0);
  const double r1y = j11 * cw(1, 1) + j12 * cw(2, 1);
  const double r1z = j11 * cw(1, 2) + j12 * cw(2, 2);

  out.cov_xx = r0x * j00 + r0z * j02 + cov_reg;
  out.cov_xy = r1x * j00 + r1z * j02;
  out.cov_yy = r1y * j11 + r1z * j12 + cov_reg;
  return out;
}

CompositeResult composite_pixel(const std::vector<PixelContribution>& contribs) {
  CompositeResult out;
  double transmittance = 1.0;
  for (const PixelContribution& c : contribs) {
    if (c.effective_alpha < 0.0 || c.effective_alpha > 1.0)
      throw_validation("effective alpha must lie in [0, 1]");
    const double w = c.effective_alpha * transmittance;
    out.color += c.color * w;
    transmittance *= 1.0 - c.effective_alpha;
  }
  out.alpha = 1.0 - transmittance;
  return out;
}

namespace {

struct SplatRecord {
  int index = 0;
  double depth = 0.0;
  Vec2 mean;
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  double radius = 0.0;
  Vec3 color;
  double opacity = 0.0;
};

// Projection, culling, conic inversion, and the global front-to-back order
// shared by the forward and backward passes.
std::vector<SplatRecord> prepare_splats(const std::vector<Gaussian3D>& scene,
                                        const Camera& cam) {
  std::vector<SplatRecord> splats;
  splats.reserve(scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Projected p = project_gaussian(scene[i], cam);
    if (p.culled) continue;
    SplatRecord s;
    s.index = static_cast<int>(i);
    s.depth = p.depth;
    s.mean = p.mean2d;
    const double d = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
    s.conic_a = p.cov_yy / d;
    s.conic_b = -p.cov_xy / d;
    s.conic_c = p.cov_xx / d;
    const double mid = 0.5 * (p.cov_xx + p.cov_yy);
    const double lam_max =
        mid + std::sqrt(std::max(0.0, mid * mid - d));
    s.radius = 3.0 * std::sqrt(lam_max);
    s.color = scene[i].color;
    s.opacity = scene[i].opacity;
    splats.push_back(s);
  }
  std::sort(splats.begin(), splats.end(),
            [](const SplatRecord& a, const SplatRecord& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              return a.index < b.index;
            });
  return splats;
}

struct PixelSpan {
  int x0 = 0, x1 = -1;  // inclusive pixel columns
  int y0 = 0, y1 = -1;
};

PixelSpan splat_extent(const SplatRecord& s, int width, int height) {
  PixelSpan e;
  e.x0 = std::max(0, static_cast<int>(std::ceil(s.mean.x - s.radius - 0.5)));
  e.x1 = std::min(width - 1,
                  static_cast<int>(std::floor(s.mean.x + s.radius - 0.5)));
  e.y0 = std::max(0, static_cast<int>(std::ceil(s.mean.y - s.radius - 0.5)));
  e.y1 = std::min(height - 1,
                  static_cast<int>(std::floor(s.mean.y + s.radius - 0.5)));
  return e;
}

}  // namespace

RenderedImage render(const std::vector<Gaussian3D>& scene, const Camera& cam,
                     const Vec3& background) {
  validate_camera(cam);
  const int w = cam.width, h = cam.height;
  const std::size_t px = static_cast<std::size_t>(w) * h;
  std::vector<double> red(px, 0.0), green(px, 0.0), blue(px, 0.0);
  std::vector<double> trans(px, 1.0);

  // Splats are processed one at a time in global depth order, so every pixel
  // sees its own stack front-to-back; the row kernel keeps per-pixel state.
  for (const SplatRecord& s : prepare_splats(scene, cam)) {
    const PixelSpan e = splat_extent(s, w, h);
    if (e.x1 < e.x0 || e.y1 < e.y0) continue;
    for (int y = e.y0; y <= e.y1; ++y) {
      const std::size_t off = static_cast<std::size_t>(y) * w + e.x0;
      const double dx0 = (e.x0 + 0.5) - s.mean.x;
      const double dy = (y + 0.5) - s.mean.y;
      kernels::splat_row(red.data() + off, green.data() + off,
                         blue.data() + off, trans.data() + off,
                         static_cast<std::size_t>(e.x1 - e.x0 + 1), dx0, dy,
                         s.conic_a, s.conic_b, s.conic_c, s.opacity, s.color.x,
                         s.color.y, s.color.z);
    }
  }

  RenderedImage img(w, h);
  for (std::size_t i = 0; i < px; ++i) {
    const double t = trans[i];
    img.rgb[3 * i + 0] = std::clamp(red[i] + t * background.x, 0.0, 1.0);
    img.rgb[3 * i + 1] = std::clamp(green[i] + t * background.y, 0.0, 1.0);
    img.rgb[3 * i + 2] = std::clamp(blue[i] + t * background.z, 0.0, 1.0);
    img.alpha[i] = 1.0 - t;
  }
  return img;
}

namespace {

struct Contribution {
  const SplatRecord* splat = nullptr;
  double alpha = 0.0;  // effective alpha (after any clamp)
  double gauss = 0.0;  // exp(-q/2)
  double transmittance = 0.0;  // before this contribution
  double dx = 0.0, dy = 0.0;
  bool clamped = false;
};

// Accumulators per scene Gaussian in screen-space terms.
struct ScreenGrads {
  double mean_x = 0.0, mean_y = 0.0;
  double conic_a = 0.0, conic_b = 0.0, conic_c = 0.0;
  Vec3 color;
  double opacity = 0.0;
  bool touched = false;
};

}  // namespace

std::vector<GaussianGrads> render_backward(const std::vector<Gaussian3D>& scene,
                                           const Camera& cam,
                                           const Vec3& background,
                                           const std::vector<double>& dL_dpixels) {
  validate_camera(cam);
  const int w = cam.width, h = cam.height;
  if (dL_dpixels.size() != static_cast<std::size_t>(w) * h * 3)
    throw_validation("dL_dpixels size does not match the camera resolution");

  const std::vector<SplatRecord> splats = prepare_splats(scene, cam);
  std::vector<ScreenGrads> sg(scene.size());

  std::vector<Contribution> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t pix = static_cast<std::size_t>(y) * w + x;
      const double dldr = dL_dpixels[3 * pix + 0];
      const double dldg = dL_dpixels[3 * pix + 1];
      const double dldb = dL_dpixels[3 * pix + 2];
      if (dldr == 0.0 && dldg == 0.0 && dldb == 0.0) continue;

      // Forward replay for this pixel, same order and arithmetic as render().
      stack.clear();
      double trans = 1.0;
      for (const SplatRecord& s : splats) {
        const double dx = (x + 0.5) - s.mean.x;
        const double dy = (y + 0.5) - s.mean.y;
        const double q =
            ((s.conic_a * dx) * dx + (2.0 * s.conic_b * dy) * dx) +
            (s.conic_c * dy) * dy;
        if (!(q <= kernels::splat_cutoff_q)) continue;
        Contribution c;
        c.splat = &s;
        c.gauss = std::exp(-0.5 * q);
        double a = s.opacity * c.gauss;
        c.clamped = a > kernels::splat_alpha_max;
        if (c.clamped) a = kernels::splat_alpha_max;
        c.alpha = a;
        c.transmittance = trans;
        c.dx = dx;
        c.dy = dy;
        stack.push_back(c);
        trans *= 1.0 - a;
      }
      if (stack.empty()) continue;

      // Back-to-front: A is the color the ray would collect past index i
      // under unit transmittance, so dC/da'_i = T_i * (c_i - A).
      Vec3 after = background;
      for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
        const Contribution& c = *it;
        ScreenGrads& g = sg[c.splat->index];
        g.touched = true;

        const double wgt = c.alpha * c.transmittance;
        g.color.x += dldr * wgt;
        g.color.y += dldg * wgt;
        g.color.z += dldb * wgt;

        const double dalpha =
            dldr * c.transmittance * (c.splat->color.x - after.x) +
            dldg * c.transmittance * (c.splat->color.y - after.y) +
            dldb * c.transmittance * (c.splat->color.z - after.z);

        if (!c.clamped) {
          g.opacity += dalpha * c.gauss;
          const double dgauss = dalpha * c.splat->opacity;
          const double dq = dgauss * (-0.5 * c.gauss);
          g.conic_a += dq * c.dx * c.dx;
          g.conic_b += dq * 2.0 * c.dx * c.dy;
          g.conic_c += dq * c.dy * c.dy;
          g.mean_x -= dq * (2.0 * c.splat->conic_a * c.dx +
                            2.0 * c.splat->conic_b * c.dy);
          g.mean_y -= dq * (2.0 * c.splat->conic_b * c.dx +
                            2.0 * c.splat->conic_c * c.dy);
        }

        after = c.splat->color * c.alpha + after * (1.0 - c.alpha);
      }
    }
  }

  // Chain screen-space gradients back to world-space parameters.
  std::vector<GaussianGrads> grads(scene.size());
  const Mat3 wrot = cam.world_to_camera.rotation();
  for (const SplatRecord& s : splats) {
    const ScreenGrads& g = sg[s.index];
    if (!g.touched) continue;
    const Gaussian3D& gs = scene[s.index];
    GaussianGrads& out = grads[s.index];

    out.color = g.color;
    out.opacity = g.opacity;

    // conic = inverse(Sigma'): dL/dSigma' = -Q G Q with Q the conic matrix.
    const double qa = s.conic_a, qb = s.conic_b, qc = s.conic_c;
    const double ga = g.conic_a, gb2 = 0.5 * g.conic_b, gc = g.conic_c;
    // M = Q * G_Q
    const double m00 = qa * ga + qb * gb2;
    const double m01 = qa * gb2 + qb * gc;
    const double m10 = qb * ga + qc * gb2;
    const double m11 = qb * gb2 + qc * gc;
    // dSigma' = -(M * Q)
    const double dsp00 = -(m00 * qa + m01 * qb);
    const double dsp01 = -(m00 * qb + m01 * qc);
    const double dsp11 = -(m10 * qb + m11 * qc);

    const Vec3 t = cam.world_to_camera.transform_point(gs.mu);
    const double j00 = cam.fx / t.z;
    const double j02 = -cam.fx * t.x / (t.z * t.z);
    const double j11 = cam.fy / t.z;
    const double j12 = -cam.fy * t.y / (t.z * t.z);

    // U = J * W (2x3)
    double u[2][3];
    for (int c = 0; c < 3; ++c) {
      u[0][c] = j00 * wrot(0, c) + j02 * wrot(2, c);
      u[1][c] = j11 * wrot(1, c) + j12 * wrot(2, c);
    }

    // dSigma (3x3, symmetric) = U^T dSigma' U
    Mat3 dsigma;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        dsigma(i, j) = u[0][i] * (dsp00 * u[0][j] + dsp01 * u[1][j]) +
                       u[1][i] * (dsp01 * u[0][j] + dsp11 * u[1][j]);

    // dU = 2 dSigma' U Sigma
    const Mat3 cov = covariance_from_rs(gs.rotation, gs.scale);
    double usig[2][3];
    for (int rr = 0; rr < 2; ++rr)
      for (int c = 0; c < 3; ++c)
        usig[rr][c] = u[rr][0] * cov(0, c) + u[rr][1] * cov(1, c) +
                      u[rr][2] * cov(2, c);
    double du[2][3];
    for (int c = 0; c < 3; ++c) {
      du[0][c] = 2.0 * (dsp00 * usig[0][c] + dsp01 * usig[1][c]);
      du[1][c] = 2.0 * (dsp01 * usig[0][c] + dsp11 * usig[1][c]);
    }

    // dJ = dU W^T; only the four live entries of J matter.
    double dj00 = 0.0, dj02 = 0.0, dj11 = 0.0, dj12 = 0.0;
    for (int c = 0; c < 3; ++c) {
      dj00 += du[0][c] * wrot(0, c);
      dj02 += du[0][c] * wrot(2, c);
      dj11 += du[1][c] * wrot(1, c);
      dj12 += du[1][c] * wrot(2, c);
    }

    // Camera-space mean gradient: projection of the 2D mean plus the
    // dependence of J on t.
    const double z2 = t.z * t.z;
    const double z3 = z2 * t.z;
    Vec3 dt;
    dt.x = g.mean_x * (cam.fx / t.z) + dj02 * (-cam.fx / z2);
    dt.y = g.mean_y * (cam.fy / t.z) + dj12 * (-cam.fy / z2);
    dt.z = g.mean_x * (-cam.fx * t.x / z2) + g.mean_y * (-cam.fy * t.y / z2) +
           dj00 * (-cam.fx / z2) + dj11 * (-cam.fy / z2) +
           dj02 * (2.0 * cam.fx * t.x / z3) + dj12 * (2.0 * cam.fy * t.y / z3);
    out.mu = wrot.transposed() * dt;

    // dSigma -> scale and quaternion through Sigma = (R S)(R S)^T.
    const Mat3 rot = rotation_matrix(gs.rotation);
    const Mat3 m = rot * Mat3::diag(gs.scale);
    const Mat3 dm = dsigma * m * 2.0;
    out.scale = {rot(0, 0) * dm(0, 0) + rot(1, 0) * dm(1, 0) + rot(2, 0) * dm(2, 0),
                 rot(0, 1) * dm(0, 1) + rot(1, 1) * dm(1, 1) + rot(2, 1) * dm(2, 1),
                 rot(0, 2) * dm(0, 2) + rot(1, 2) * dm(1, 2) + rot(2, 2) * dm(2, 2)};

    Mat3 dr;
    for (int i = 0; i < 3; ++i) {
      dr(i, 0) = dm(i, 0) * gs.scale.x;
      dr(i, 1) = dm(i, 1) * gs.scale.y;
      dr(i, 2) = dm(i, 2) * gs.scale.z;
    }

    const Quat qn = gs.rotation.normalized();
    const double qw = qn.w, qx = qn.x, qy = qn.y, qz = qn.z;
    double dq[4];
    dq[0] = dr(0, 1) * (-2 * qz) + dr(0, 2) * (2 * qy) + dr(1, 0) * (2 * qz) +
            dr(1, 2) * (-2 * qx) + dr(2, 0) * (-2 * qy) + dr(2, 1) * (2 * qx);
    dq[1] = dr(0, 1) * (2 * qy) + dr(0, 2) * (2 * qz) + dr(1, 0) * (2 * qy) +
            dr(1, 1) * (-4 * qx) + dr(1, 2) * (-2 * qw) + dr(2, 0) * (2 * qz) +
            dr(2, 1) * (2 * qw) + dr(2, 2) * (-4 * qx);
    dq[2] = dr(0, 0) * (-4 * qy) + dr(0, 1) * (2 * qx) + dr(0, 2) * (2 * qw) +
            dr(1, 0) * (2 * qx) + dr(1, 2) * (2 * qz) + dr(2, 0) * (-2 * qw) +
            dr(2, 1) * (2 * qz) + dr(2, 2) * (-4 * qy);
    dq[3] = dr(0, 0) * (-4 * qz) + dr(0, 1) * (-2 * qw) + dr(1, 0) * (2 * qw) +
            dr(1, 1) * (-4 * qz) + dr(0, 2) * (2 * qx) + dr(2, 0) * (2 * qx) +
            dr(1, 2) * (2 * qy) + dr(2, 1) * (2 * qy);

    // Through the normalization q_hat = q / |q|.
    const double qnorm = gs.rotation.norm();
    const double qhat[4] = {qw, qx, qy, qz};
    double proj = 0.0;
    for (int c = 0; c < 4; ++c) proj += dq[c] * qhat[c];
    for (int c = 0; c < 4; ++c)
      out.rotation[c] = (dq[c] - proj * qhat[c]) / qnorm;
  }
  return grads;
}

}  // namespace nsplat::splat
