#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "nsplat/core/error.hpp"
#include "nsplat/kernels/kernels.hpp"
#include "nsplat/splat/image.hpp"
#include "nsplat/splat/ply.hpp"
#include "nsplat/splat/render.hpp"

using namespace nsplat;
using splat::Camera;
using splat::Gaussian3D;
using splat::RenderedImage;

namespace {

Quat random_unit_quat(Rng& rng) {
  Quat q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
         rng.uniform(-1, 1)};
  return q.normalized();
}

Gaussian3D random_gaussian(Rng& rng) {
  Gaussian3D g;
  g.mu = {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
  g.rotation = random_unit_quat(rng);
  g.scale = {rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5), rng.uniform(0.1, 0.5)};
  g.color = {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95)};
  g.opacity = rng.uniform(0.2, 0.9);
  return g;
}

Camera test_camera(int w = 24, int h = 20) {
  return splat::look_at_camera({0, 0.8, -3.2}, {0, 0, 0}, {0, 1, 0}, 45.0, w, h);
}

// Jacobi eigenvalue iteration for symmetric 3x3, independent of the library.
std::vector<double> sym3_eigenvalues(Mat3 a) {
  for (int sweep = 0; sweep < 64; ++sweep) {
    int p = 0, q = 1;
    double biggest = std::abs(a(0, 1));
    if (std::abs(a(0, 2)) > biggest) { biggest = std::abs(a(0, 2)); p = 0; q = 2; }
    if (std::abs(a(1, 2)) > biggest) { biggest = std::abs(a(1, 2)); p = 1; q = 2; }
    if (biggest < 1e-15) break;
    const double theta = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
    const double c = std::cos(theta), s = std::sin(theta);
    Mat3 rot = Mat3::identity();
    rot(p, p) = c; rot(q, q) = c;
    rot(p, q) = s; rot(q, p) = -s;
    a = rot.transposed() * a * rot;
  }
  std::vector<double> eig = {a(0, 0), a(1, 1), a(2, 2)};
  std::sort(eig.begin(), eig.end());
  return eig;
}

// Per-pixel gather reference: project, cull, sort, composite one pixel at a
// time through composite_pixel.
RenderedImage reference_render(const std::vector<Gaussian3D>& scene,
                               const Camera& cam, const Vec3& bg) {
  struct Rec {
    int index;
    splat::Projected p;
    double ca, cb, cc;
  };
  std::vector<Rec> recs;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const splat::Projected p = splat::project_gaussian(scene[i], cam);
    if (p.culled) continue;
    const double det = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
    recs.push_back({static_cast<int>(i), p, p.cov_yy / det, -p.cov_xy / det,
                    p.cov_xx / det});
  }
  std::sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
    if (a.p.depth != b.p.depth) return a.p.depth < b.p.depth;
    return a.index < b.index;
  });

  RenderedImage img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      std::vector<splat::PixelContribution> contribs;
      for (const Rec& r : recs) {
        const double dx = (x + 0.5) - r.p.mean2d.x;
        const double dy = (y + 0.5) - r.p.mean2d.y;
        const double q = r.ca * dx * dx + 2.0 * r.cb * dx * dy + r.cc * dy * dy;
        if (!(q <= kernels::splat_cutoff_q)) continue;
        const double a = std::min(
            scene[r.index].opacity * std::exp(-0.5 * q), kernels::splat_alpha_max);
        contribs.push_back({scene[r.index].color, a});
      }
      const splat::CompositeResult c = splat::composite_pixel(contribs);
      const double t = 1.0 - c.alpha;
      img.at(x, y, 0) = std::clamp(c.color.x + t * bg.x, 0.0, 1.0);
      img.at(x, y, 1) = std::clamp(c.color.y + t * bg.y, 0.0, 1.0);
      img.at(x, y, 2) = std::clamp(c.color.z + t * bg.z, 0.0, 1.0);
      img.alpha[static_cast<std::size_t>(y) * cam.width + x] = c.alpha;
    }
  return img;
}

}  // namespace

TEST_CASE("covariance of identity rotation") {
  const Mat3 eye = splat::covariance_from_rs(Quat{}, {1, 1, 1});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(eye(i, j) == doctest::Approx(i == j ? 1.0 : 0.0));
  const Mat3 stretched = splat::covariance_from_rs(Quat{}, {2, 1, 1});
  CHECK(stretched(0, 0) == doctest::Approx(4.0));
  CHECK(stretched(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("covariance eigenvalues are the squared scales") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Quat q = random_unit_quat(rng);
    const Vec3 s{rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0)};
    const Mat3 cov = splat::covariance_from_rs(q, s);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        CHECK(std::abs(cov(i, j) - cov(j, i)) <= 1e-12);
    std::vector<double> want = {s.x * s.x, s.y * s.y, s.z * s.z};
    std::sort(want.begin(), want.end());
    const std::vector<double> got = sym3_eigenvalues(cov);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(got[k] - want[k]) <= 1e-9);
  }
  const Mat3 cov = splat::covariance_from_rs(random_unit_quat(rng), {3, 2, 1});
  const std::vector<double> eig = sym3_eigenvalues(cov);
  CHECK(std::abs(eig[0] - 1.0) <= 1e-9);
  CHECK(std::abs(eig[1] - 4.0) <= 1e-9);
  CHECK(std::abs(eig[2] - 9.0) <= 1e-9);
}

TEST_CASE("gaussian_eval values") {
  const Mat3 eye = Mat3::identity();
  CHECK(splat::gaussian_eval({0.3, -1, 2}, eye, {0.3, -1, 2}) == 1.0);
  CHECK(splat::gaussian_eval({0, 0, 0}, eye, {1, 0, 0}) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  // Anisotropic case against an explicit cofactor inverse.
  Rng rng(33);
  const Mat3 cov = splat::covariance_from_rs(random_unit_quat(rng), {1.5, 0.7, 0.3});
  const Vec3 mu{0.2, -0.4, 0.9};
  const Vec3 p{0.5, 0.1, 0.4};
  const Vec3 d = p - mu;
  const Mat3 inv = inverse(cov);
  double quad = 0.0;
  const double dv[3] = {d.x, d.y, d.z};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) quad += dv[i] * inv(i, j) * dv[j];
  CHECK(std::abs(splat::gaussian_eval(mu, cov, p) - std::exp(-0.5 * quad)) <= 1e-12);

  const double v = splat::gaussian_eval(mu, cov, p);
  CHECK(v > 0.0);
  CHECK(v <= 1.0);
}

TEST_CASE("projection culls points behind the camera") {
  Camera cam = test_camera();
  Gaussian3D g;
  g.mu = {0, 0.8, -5.0};  // behind the eye at z=-3.2 looking toward origin
  CHECK(splat::project_gaussian(g, cam).culled);
}

TEST_CASE("on-axis projection matches the matrix-product oracle") {
  Camera cam;
  cam.world_to_camera = Mat4::identity();
  cam.fx = cam.fy = 32.0;
  cam.cx = cam.cy = 16.0;
  cam.width = cam.height = 32;
  Gaussian3D g;
  g.mu = {0, 0, 32.0};  // z equals fx, so J scales the xy block by 1
  g.scale = {1, 1, 1};
  const splat::Projected p = splat::project_gaussian(g, cam);
  REQUIRE(!p.culled);
  CHECK(p.mean2d.x == doctest::Approx(16.0));
  CHECK(p.cov_xx == doctest::Approx(1.0 + splat::kCovRegularization).epsilon(1e-12));
  CHECK(p.cov_yy == doctest::Approx(1.0 + splat::kCovRegularization).epsilon(1e-12));
  CHECK(std::abs(p.cov_xy) <= 1e-12);
  CHECK(p.depth == doctest::Approx(32.0));
}

TEST_CASE("projected covariance equals J W Sigma Wt Jt plus the floor") {
  Rng rng(35);
  const Camera cam = test_camera();
  for (int trial = 0; trial < 50; ++trial) {
    const Gaussian3D g = random_gaussian(rng);
    const splat::Projected p = splat::project_gaussian(g, cam);
    if (p.culled) continue;

    const Vec3 t = cam.world_to_camera.transform_point(g.mu);
    const Mat3 w = cam.world_to_camera.rotation();
    const Mat3 cov = splat::covariance_from_rs(g.rotation, g.scale);
    double jmat[2][3] = {{cam.fx / t.z, 0, -cam.fx * t.x / (t.z * t.z)},
                         {0, cam.fy / t.z, -cam.fy * t.y / (t.z * t.z)}};
    double u[2][3] = {{0, 0, 0}, {0, 0, 0}};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        for (int k = 0; k < 3; ++k) u[r][c] += jmat[r][k] * w(k, c);
    double want[2][2] = {{0, 0}, {0, 0}};
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            want[r][c] += u[r][i] * cov(i, j) * u[c][j];
    CHECK(std::abs(p.cov_xx - (want[0][0] + splat::kCovRegularization)) <= 1e-10);
    CHECK(std::abs(p.cov_xy - want[0][1]) <= 1e-10);
    CHECK(std::abs(p.cov_yy - (want[1][1] + splat::kCovRegularization)) <= 1e-10);
  }
}

TEST_CASE("projected covariance is symmetric for 1000 random inputs") {
  Rng rng(36);
  const Camera cam = test_camera();
  int checked = 0;
  while (checked < 1000) {
    const Gaussian3D g = random_gaussian(rng);
    const splat::Projected p = splat::project_gaussian(g, cam);
    if (p.culled) continue;
    // cov_xy is stored once; assert the quadratic form is finite and the
    // eigenvalues are positive (PSD plus the floor).
    CHECK(std::isfinite(p.cov_xy));
    const double tr = p.cov_xx + p.cov_yy;
    const double det = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
    CHECK(tr > 0.0);
    CHECK(det > 0.0);
    ++checked;
  }
}

TEST_CASE("composite_pixel trivial stacks") {
  using splat::PixelContribution;
  const splat::CompositeResult one =
      splat::composite_pixel({{Vec3{0.2, 0.4, 0.6}, 1.0}});
  CHECK(one.color.x == doctest::Approx(0.2));
  CHECK(one.alpha == 1.0);

  const splat::CompositeResult occluded = splat::composite_pixel(
      {{Vec3{1, 0, 0}, 1.0}, {Vec3{0, 1, 0}, 0.7}});
  CHECK(occluded.color.x == doctest::Approx(1.0));
  CHECK(occluded.color.y == doctest::Approx(0.0));

  const splat::CompositeResult blended = splat::composite_pixel(
      {{Vec3{1, 0, 0}, 0.5}, {Vec3{0, 1, 0}, 1.0}});
  CHECK(blended.color.x == doctest::Approx(0.5));
  CHECK(blended.color.y == doctest::Approx(0.5));
  CHECK(blended.alpha == doctest::Approx(1.0));

  CHECK_THROWS_AS(splat::composite_pixel({{Vec3{1, 0, 0}, 1.5}}), Error);
}

TEST_CASE("compositing invariants on random stacks") {
  Rng rng(37);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<splat::PixelContribution> stack;
    const std::size_t n = 1 + rng.below(10);
    for (std::size_t i = 0; i < n; ++i)
      stack.push_back({{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)},
                       rng.uniform(0.0, 1.0)});
    // Transmittance is monotone nonincreasing and weights sum to <= 1.
    double trans = 1.0, wsum = 0.0;
    for (const auto& c : stack) {
      const double w = c.effective_alpha * trans;
      wsum += w;
      const double next = trans * (1.0 - c.effective_alpha);
      CHECK(next <= trans);
      trans = next;
    }
    CHECK(wsum <= 1.0 + 1e-12);
    const splat::CompositeResult out = splat::composite_pixel(stack);
    CHECK(out.alpha >= 0.0);
    CHECK(out.alpha <= 1.0);
    CHECK(std::abs(out.alpha - (1.0 - trans)) <= 1e-12);
  }
}

TEST_CASE("empty scene renders the background") {
  const Camera cam = test_camera(9, 7);
  const RenderedImage img = splat::render({}, cam, {0.1, 0.2, 0.3});
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) {
      CHECK(img.at(x, y, 0) == 0.1);
      CHECK(img.at(x, y, 1) == 0.2);
      CHECK(img.at(x, y, 2) == 0.3);
      CHECK(img.alpha[y * 9 + x] == 0.0);
    }
}

TEST_CASE("an opaque gaussian covers its pixel, far pixels stay background") {
  Camera cam;
  cam.world_to_camera = Mat4::identity();
  cam.fx = cam.fy = 40.0;
  cam.cx = 8.5;  // center of pixel (8, 8)
  cam.cy = 8.5;
  cam.width = cam.height = 17;
  Gaussian3D g;
  g.mu = {0, 0, 5};
  g.scale = {0.05, 0.05, 0.05};
  g.color = {0.9, 0.1, 0.4};
  g.opacity = 1.0;
  const RenderedImage img = splat::render({g}, cam, {0, 0, 0});
  CHECK(std::abs(img.at(8, 8, 0) - 0.9) < 1e-3);
  CHECK(std::abs(img.at(8, 8, 1) - 0.1) < 1e-3);
  CHECK(img.at(0, 0, 0) == 0.0);
  CHECK(img.at(16, 16, 2) == 0.0);
}

TEST_CASE("render matches the per-pixel gather reference") {
  Rng rng(38);
  const Camera cam = test_camera();
  const Vec3 bg{0.05, 0.0, 0.1};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Gaussian3D> scene;
    for (int i = 0; i < 6; ++i) scene.push_back(random_gaussian(rng));
    const RenderedImage got = splat::render(scene, cam, bg);
    const RenderedImage want = reference_render(scene, cam, bg);
    double worst = 0.0;
    for (std::size_t i = 0; i < got.rgb.size(); ++i)
      worst = std::max(worst, std::abs(got.rgb[i] - want.rgb[i]));
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("scene order does not change the image") {
  Rng rng(39);
  const Camera cam = test_camera();
  std::vector<Gaussian3D> scene;
  for (int i = 0; i < 8; ++i) scene.push_back(random_gaussian(rng));
  const RenderedImage base = splat::render(scene, cam, {0, 0, 0});

  std::vector<Gaussian3D> shuffled = scene;
  for (std::size_t i = shuffled.size() - 1; i > 0; --i)
    std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
  const RenderedImage moved = splat::render(shuffled, cam, {0, 0, 0});
  CHECK(base.rgb == moved.rgb);
  CHECK(base.alpha == moved.alpha);
}

TEST_CASE("a rigid remap of scene and camera leaves the image unchanged") {
  Rng rng(40);
  const Camera cam = test_camera();
  std::vector<Gaussian3D> scene;
  for (int i = 0; i < 5; ++i) scene.push_back(random_gaussian(rng));
  const RenderedImage base = splat::render(scene, cam, {0, 0, 0});

  const Quat aq = random_unit_quat(rng);
  const Mat3 arot = rotation_matrix(aq);
  const Vec3 at{0.7, -1.2, 2.5};
  const Mat4 a = Mat4::from_rt(arot, at);

  std::vector<Gaussian3D> moved = scene;
  for (Gaussian3D& g : moved) {
    g.mu = a.transform_point(g.mu);
    g.rotation = (aq * g.rotation).normalized();
  }
  Camera moved_cam = cam;
  moved_cam.world_to_camera = cam.world_to_camera * rigid_inverse(a);
  // Re-orthonormalize within validate_camera tolerance is unnecessary; the
  // product of rigid transforms stays rigid to rounding.
  const RenderedImage remapped = splat::render(moved, moved_cam, {0, 0, 0});
  double worst = 0.0;
  for (std::size_t i = 0; i < base.rgb.size(); ++i)
    worst = std::max(worst, std::abs(base.rgb[i] - remapped.rgb[i]));
  CHECK(worst <= 1e-9);
}

TEST_CASE("render is identical across kernel variants") {
  if (!kernels::avx2_supported()) return;
  Rng rng(41);
  const Camera cam = test_camera();
  std::vector<Gaussian3D> scene;
  for (int i = 0; i < 7; ++i) scene.push_back(random_gaussian(rng));
  const kernels::Isa before = kernels::active_isa();
  kernels::force_isa(kernels::Isa::scalar);
  const RenderedImage scalar_img = splat::render(scene, cam, {0.2, 0.2, 0.2});
  kernels::force_isa(kernels::Isa::avx2);
  const RenderedImage avx_img = splat::render(scene, cam, {0.2, 0.2, 0.2});
  kernels::force_isa(before);
  CHECK(scalar_img.rgb == avx_img.rgb);
  CHECK(scalar_img.alpha == avx_img.alpha);
}

TEST_CASE("ply round trip and byte determinism") {
  testutil::TempDir dir("ply");
  Rng rng(42);
  std::vector<Gaussian3D> scene;
  for (int i = 0; i < 9; ++i) scene.push_back(random_gaussian(rng));
  splat::write_ply(scene, dir.file("a.ply"));
  splat::write_ply(scene, dir.file("b.ply"));
  CHECK(testutil::read_file(dir.file("a.ply")) ==
        testutil::read_file(dir.file("b.ply")));

  const std::vector<Gaussian3D> back = splat::read_ply(dir.file("a.ply"));
  REQUIRE(back.size() == scene.size());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    CHECK(back[i].mu.x == static_cast<double>(static_cast<float>(scene[i].mu.x)));
    CHECK(back[i].color.z ==
          static_cast<double>(static_cast<float>(scene[i].color.z)));
    CHECK(std::abs(back[i].rotation.norm() - 1.0) <= 1e-9);
  }

  const auto positions = splat::read_ply_positions(dir.file("a.ply"));
  REQUIRE(positions.size() == scene.size());
  CHECK(positions[3].y == static_cast<double>(static_cast<float>(scene[3].mu.y)));
}

TEST_CASE("ply rejects garbage") {
  testutil::TempDir dir("ply_bad");
  testutil::write_file(dir.file("junk.ply"), "not a ply at all");
  CHECK_THROWS_AS(splat::read_ply(dir.file("junk.ply")), Error);
  testutil::write_file(dir.file("ascii.ply"),
                       "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n");
  CHECK_THROWS_AS(splat::read_ply(dir.file("ascii.ply")), Error);
}

TEST_CASE("f32 image dump round trips exactly") {
  testutil::TempDir dir("imgf");
  const Camera cam = test_camera(5, 4);
  Rng rng(43);
  std::vector<Gaussian3D> scene;
  for (int i = 0; i < 3; ++i) scene.push_back(random_gaussian(rng));
  const RenderedImage img = splat::render(scene, cam, {0.3, 0.1, 0.2});
  splat::write_f32_image(img, dir.file("img.f32"));
  const RenderedImage back = splat::read_f32_image(dir.file("img.f32"));
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 4);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    CHECK(back.rgb[i] == static_cast<double>(static_cast<float>(img.rgb[i])));
}

TEST_CASE("png writer emits a valid signature and is deterministic") {
  testutil::TempDir dir("png");
  const Camera cam = test_camera(6, 6);
  const RenderedImage img = splat::render({}, cam, {1.0, 0.5, 0.25});
  splat::write_png(img, dir.file("a.png"));
  splat::write_png(img, dir.file("b.png"));
  const std::string bytes = testutil::read_file(dir.file("a.png"));
  REQUIRE(bytes.size() > 20);
  CHECK(static_cast<unsigned char>(bytes[0]) == 0x89);
  CHECK(bytes.substr(1, 3) == "PNG");
  CHECK(bytes == testutil::read_file(dir.file("b.png")));
}

TEST_CASE("psnr of identical images is infinite, of different finite") {
  const Camera cam = test_camera(8, 8);
  Rng rng(44);
  std::vector<Gaussian3D> scene{random_gaussian(rng)};
  const RenderedImage a = splat::render(scene, cam, {0, 0, 0});
  CHECK(std::isinf(splat::image_psnr(a, a)));
  RenderedImage b = a;
  b.rgb[12] += 0.25;
  CHECK(splat::image_psnr(a, b) < 60.0);
  CHECK(splat::image_mse(a, b) > 0.0);
}
