// Acceptance suite: every criterion prints one [PASS]/[FAIL] line; the exit
// code is the number of failed criteria. Oracles (finite differences, brute
// force, enumeration) live here and stay independent of the library paths
// they check.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nsplat/align/align.hpp"
#include "nsplat/core/rng.hpp"
#include "nsplat/eeg/eeg.hpp"
#include "nsplat/gat/gat.hpp"
#include "nsplat/kernels/kernels.hpp"
#include "nsplat/layout/client.hpp"
#include "nsplat/layout/layout.hpp"
#include "nsplat/metrics/metrics.hpp"
#include "nsplat/sds/sds.hpp"
#include "nsplat/splat/image.hpp"
#include "nsplat/splat/ply.hpp"
#include "nsplat/splat/render.hpp"

using namespace nsplat;

namespace {

// ---------------------------------------------------------------- utilities

struct Check {
  bool ok = true;
  std::string detail;

  void fail(const std::string& why) {
    if (ok) detail = why;
    ok = false;
  }
  void expect(bool cond, const std::string& why) {
    if (!cond) fail(why);
  }
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double rel_err(double got, double want, double floor_scale) {
  return std::abs(got - want) / std::max(std::abs(want), floor_scale);
}

Quat random_unit_quat(Rng& rng) {
  Quat q{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
         rng.uniform(-1, 1)};
  return q.normalized();
}

splat::Gaussian3D random_gaussian(Rng& rng) {
  splat::Gaussian3D g;
  g.mu = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
  g.rotation = random_unit_quat(rng);
  g.scale = {rng.uniform(0.15, 0.45), rng.uniform(0.15, 0.45),
             rng.uniform(0.15, 0.45)};
  g.color = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
  g.opacity = rng.uniform(0.2, 0.8);
  return g;
}

splat::Camera grad_camera() {
  return splat::look_at_camera({0.3, 1.0, -3.4}, {0, 0, 0}, {0, 1, 0}, 45.0,
                               16, 16);
}

double* gaussian_param(splat::Gaussian3D& g, int p) {
  double* slots[14] = {&g.mu.x,     &g.mu.y,     &g.mu.z,      &g.color.x,
                       &g.color.y,  &g.color.z,  &g.opacity,   &g.scale.x,
                       &g.scale.y,  &g.scale.z,  &g.rotation.w, &g.rotation.x,
                       &g.rotation.y, &g.rotation.z};
  return slots[p];
}

double grad_component(const splat::GaussianGrads& g, int p) {
  const double slots[14] = {g.mu.x,     g.mu.y,     g.mu.z,      g.color.x,
                            g.color.y,  g.color.z,  g.opacity,   g.scale.x,
                            g.scale.y,  g.scale.z,  g.rotation[0], g.rotation[1],
                            g.rotation[2], g.rotation[3]};
  return slots[p];
}

// Discrete forward structure (splat order, cutoff membership, clamp flags);
// probes that change it cross a non-differentiable boundary and are skipped.
std::vector<std::uint8_t> forward_signature(
    const std::vector<splat::Gaussian3D>& scene, const splat::Camera& cam) {
  struct Rec {
    int index;
    double depth;
    Vec2 mean;
    double ca, cb, cc, opacity;
  };
  std::vector<Rec> recs;
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const splat::Projected p = splat::project_gaussian(scene[i], cam);
    if (p.culled) continue;
    const double det = p.cov_xx * p.cov_yy - p.cov_xy * p.cov_xy;
    recs.push_back({static_cast<int>(i), p.depth, p.mean2d, p.cov_yy / det,
                    -p.cov_xy / det, p.cov_xx / det, scene[i].opacity});
  }
  std::sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });
  std::vector<std::uint8_t> sig;
  for (const Rec& r : recs) sig.push_back(static_cast<std::uint8_t>(r.index));
  sig.push_back(255);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      for (const Rec& r : recs) {
        const double dx = (x + 0.5) - r.mean.x;
        const double dy = (y + 0.5) - r.mean.y;
        const double q = r.ca * dx * dx + 2.0 * r.cb * dx * dy + r.cc * dy * dy;
        const bool active = q <= kernels::splat_cutoff_q;
        const bool clamped =
            active && r.opacity * std::exp(-0.5 * q) > kernels::splat_alpha_max;
        sig.push_back(static_cast<std::uint8_t>(active ? (clamped ? 2 : 1) : 0));
      }
  return sig;
}

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

// ---------------------------------------------------------------- criteria

Check criterion_gradient_suite() {
  Check c;
  const auto start = std::chrono::steady_clock::now();

  // Renderer: 20 random 5-gaussian 16x16 scenes, central differences at
  // h = 1e-4, all five parameter groups, 1e-3 relative.
  {
    Rng rng(4021);
    const splat::Camera cam = grad_camera();
    const Vec3 bg{0.1, 0.05, 0.15};
    const double h = 1e-4;
    int tested = 0, excluded = 0;
    double worst = 0.0;
    for (int scene_i = 0; scene_i < 20 && c.ok; ++scene_i) {
      std::vector<splat::Gaussian3D> scene;
      for (int i = 0; i < 5; ++i) scene.push_back(random_gaussian(rng));
      std::vector<double> weights(cam.width * cam.height * 3);
      for (double& w : weights) w = rng.uniform(-1.0, 1.0);
      auto loss_of = [&](const std::vector<splat::Gaussian3D>& s) {
        const splat::RenderedImage img = splat::render(s, cam, bg);
        double loss = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i)
          loss += weights[i] * img.rgb[i];
        return loss;
      };
      const auto grads = splat::render_backward(scene, cam, bg, weights);
      for (std::size_t gi = 0; gi < scene.size() && c.ok; ++gi)
        for (int p = 0; p < 14; ++p) {
          auto plus = scene, minus = scene;
          *gaussian_param(plus[gi], p) += h;
          *gaussian_param(minus[gi], p) -= h;
          if (forward_signature(plus, cam) != forward_signature(minus, cam)) {
            ++excluded;
            continue;
          }
          const double fd = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
          const double err = rel_err(grad_component(grads[gi], p), fd, 1e-5);
          worst = std::max(worst, err);
          ++tested;
          if (err >= 1e-3) {
            c.fail("render gradient rel err " + fmt(err) + " at scene " +
                   std::to_string(scene_i) + " param " + std::to_string(p));
            break;
          }
        }
    }
    if (c.ok && tested < 20 * 5 * 14 / 2)
      c.fail("too many excluded probes: tested " + std::to_string(tested));
    if (c.ok)
      c.detail = "render worst rel err " + fmt(worst) + " (" +
                 std::to_string(tested) + " probes, " + std::to_string(excluded) +
                 " boundary exclusions)";
  }

  // Alignment gradients at 20 random points, h = 1e-5, 1e-4 relative.
  if (c.ok) {
    Rng rng(4022);
    align::LossConfig cfg;
    double worst = 0.0;
    int points = 0;
    while (points < 20) {
      align::EmbeddingBatch b;
      b.eeg = Matrix(3, 6);
      b.img = Matrix(3, 6);
      for (double& v : b.eeg.storage()) v = rng.uniform(-1.0, 1.0);
      for (double& v : b.img.storage()) v = rng.uniform(-1.0, 1.0);

      // Keep the hinge terms away from their kink so the FD probe is smooth.
      const Matrix s = align::similarity_matrix(b);
      double gap = 1e300;
      for (std::size_t i = 0; i < 3; ++i) {
        const double m = cfg.alpha_scale * (1.0 - s(i, i));
        for (std::size_t j = 0; j < 3; ++j)
          if (j != i) gap = std::min(gap, std::abs(m - (s(i, i) - s(i, j))));
      }
      if (gap < 1e-3) continue;
      ++points;

      auto loss_of = [&](const align::EmbeddingBatch& batch) {
        const Matrix sim = align::similarity_matrix(batch);
        return cfg.lambda1 * align::info_nce(sim, cfg.tau) +
               cfg.lambda2 * align::margin_loss(sim, cfg);
      };
      const Matrix grad = align::alignment_grads(b, cfg);
      const double h = 1e-5;
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 6; ++k) {
          auto plus = b, minus = b;
          plus.eeg(i, k) += h;
          minus.eeg(i, k) -= h;
          const double fd = (loss_of(plus) - loss_of(minus)) / (2.0 * h);
          worst = std::max(worst, rel_err(grad(i, k), fd, 1e-6));
        }
    }
    if (worst >= 1e-4)
      c.fail("alignment gradient rel err " + fmt(worst));
    else
      c.detail += "; alignment worst " + fmt(worst);
  }

  // Mapping-network Jacobians, h = 1e-5, 1e-4 relative.
  if (c.ok) {
    Rng rng(4023);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const align::MappingNet net =
          align::random_mapping_net(5, 7, 2, 3, 9000 + trial);
      std::vector<double> hvec(5);
      for (double& v : hvec) v = rng.uniform(-1.0, 1.0);
      const Matrix jac = align::mapping_jacobian(hvec, net);
      const double h = 1e-5;
      for (std::size_t cidx = 0; cidx < 5; ++cidx) {
        auto hp = hvec, hm = hvec;
        hp[cidx] += h;
        hm[cidx] -= h;
        const Matrix fp = align::mapping_forward(hp, net);
        const Matrix fm = align::mapping_forward(hm, net);
        for (std::size_t r = 0; r < 6; ++r) {
          const double fd = (fp.storage()[r] - fm.storage()[r]) / (2.0 * h);
          worst = std::max(worst, rel_err(jac(r, cidx), fd, 1e-6));
        }
      }
    }
    if (worst >= 1e-4)
      c.fail("mapping jacobian rel err " + fmt(worst));
    else
      c.detail += "; mapping worst " + fmt(worst);
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  c.expect(secs < 60.0, "gradient suite took " + fmt(secs) + " s (limit 60)");
  if (c.ok) c.detail += "; " + fmt(secs) + " s";
  return c;
}

Check criterion_compositing() {
  Check c;
  Rng rng(4031);
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    std::vector<splat::PixelContribution> stack;
    const std::size_t n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i)
      stack.push_back({{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0, 1)},
                       rng.uniform(0.0, 1.0)});
    double trans = 1.0, wsum = 0.0;
    for (const auto& contrib : stack) {
      const double w = contrib.effective_alpha * trans;
      wsum += w;
      const double next = trans * (1.0 - contrib.effective_alpha);
      c.expect(next <= trans, "transmittance increased");
      trans = next;
    }
    c.expect(wsum <= 1.0 + 1e-12, "weight sum " + fmt(wsum) + " exceeds 1");
    const auto out = splat::composite_pixel(stack);
    c.expect(out.alpha >= 0.0 && out.alpha <= 1.0, "alpha out of range");
  }

  // Order invariance: permuting the scene list leaves the image byte-exact.
  const splat::Camera cam = grad_camera();
  for (int trial = 0; trial < 10 && c.ok; ++trial) {
    std::vector<splat::Gaussian3D> scene;
    for (int i = 0; i < 8; ++i) scene.push_back(random_gaussian(rng));
    const splat::RenderedImage base = splat::render(scene, cam, {0, 0, 0});
    auto shuffled = scene;
    for (std::size_t i = shuffled.size() - 1; i > 0; --i)
      std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    const splat::RenderedImage moved = splat::render(shuffled, cam, {0, 0, 0});
    c.expect(base.rgb == moved.rgb && base.alpha == moved.alpha,
             "permuted scene rendered differently");
  }
  if (c.ok) c.detail = "1000 stacks, 10 permuted renders";
  return c;
}

Check criterion_covariance() {
  Check c;
  Rng rng(4041);
  const splat::Camera cam = grad_camera();
  double worst_eig = 0.0, worst_sym = 0.0;
  int projected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Quat q = random_unit_quat(rng);
    const Vec3 s{rng.uniform(0.1, 2.5), rng.uniform(0.1, 2.5),
                 rng.uniform(0.1, 2.5)};
    const Mat3 cov = splat::covariance_from_rs(q, s);
    std::vector<double> want = {s.x * s.x, s.y * s.y, s.z * s.z};
    std::sort(want.begin(), want.end());
    const std::vector<double> got = sym3_eigenvalues(cov);
    for (int k = 0; k < 3; ++k)
      worst_eig = std::max(worst_eig, std::abs(got[k] - want[k]));

    splat::Gaussian3D g = random_gaussian(rng);
    g.rotation = q;
    g.scale = {s.x * 0.2, s.y * 0.2, s.z * 0.2};
    const splat::Projected p = splat::project_gaussian(g, cam);
    if (p.culled) continue;
    ++projected;
    // Independent 2x2 oracle: U = J W, Sigma' = U Sigma U^T (+ floor).
    const Vec3 t = cam.world_to_camera.transform_point(g.mu);
    const Mat3 w = cam.world_to_camera.rotation();
    const Mat3 cov_g = splat::covariance_from_rs(g.rotation, g.scale);
    const double jm[2][3] = {{cam.fx / t.z, 0, -cam.fx * t.x / (t.z * t.z)},
                             {0, cam.fy / t.z, -cam.fy * t.y / (t.z * t.z)}};
    double u[2][3] = {{0, 0, 0}, {0, 0, 0}};
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 3; ++col)
        for (int k = 0; k < 3; ++k) u[r][col] += jm[r][k] * w(k, col);
    double m[2][2] = {{0, 0}, {0, 0}};
    for (int r = 0; r < 2; ++r)
      for (int col = 0; col < 2; ++col)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            m[r][col] += u[r][i] * cov_g(i, j) * u[col][j];
    worst_sym = std::max(worst_sym, std::abs(m[0][1] - m[1][0]));
    if (std::abs(p.cov_xy - m[0][1]) > 1e-9)
      c.fail("projected covariance deviates from the oracle");
  }
  c.expect(worst_eig <= 1e-9, "eigenvalue error " + fmt(worst_eig));
  c.expect(worst_sym <= 1e-12, "asymmetry " + fmt(worst_sym));
  if (c.ok)
    c.detail = "eig err " + fmt(worst_eig) + ", asym " + fmt(worst_sym) + ", " +
               std::to_string(projected) + " projections";
  return c;
}

Check criterion_loss_identities() {
  Check c;
  Matrix one(1, 1, 0.4);
  c.expect(align::info_nce(one, 0.07) == 0.0, "info_nce(N=1) != 0");

  Matrix flat(7, 7, 0.31);
  c.expect(std::abs(align::info_nce(flat, 0.07) - std::log(7.0)) <= 1e-12,
           "constant-matrix info_nce != log N");

  align::LossConfig cfg;
  cfg.alpha_scale = 0.4;
  Matrix good(3, 3, -0.8);
  for (int i = 0; i < 3; ++i) good(i, i) = 0.95;
  c.expect(align::margin_loss(good, cfg) == 0.0,
           "hinge-inactive margin loss != 0");

  Rng rng(4051);
  for (int t = 0; t < 50 && c.ok; ++t) {
    const double ce = rng.uniform(0, 3), nce = rng.uniform(0, 3),
                 ml = rng.uniform(0, 3);
    cfg.lambda1 = 0.25 * static_cast<double>(rng.below(9));
    cfg.lambda2 = 0.25 * static_cast<double>(rng.below(9));
    c.expect(align::total_loss(ce, nce, ml, cfg) ==
                 ce + cfg.lambda1 * nce + cfg.lambda2 * ml,
             "total_loss deviates from exact linearity");
  }

  const std::vector<double> uniform(40, 1.0 / 40.0);
  c.expect(std::abs(align::cross_entropy(uniform, 13) - std::log(40.0)) <= 1e-12,
           "uniform-over-40 cross entropy != ln 40");
  if (c.ok) c.detail = "all identities hold";
  return c;
}

Check criterion_attention() {
  Check c;
  Rng rng(4061);

  // Row sums over random graphs.
  double worst_row = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Vec3> pos;
    for (int i = 0; i < 10; ++i)
      pos.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const gat::ElectrodeGraph g = gat::build_montage_graph(pos, 3);
    const gat::AttentionParams p =
        gat::random_attention_params(2, 4, 5, 0.2, 7000 + trial);
    Matrix feat(10, 4);
    for (double& v : feat.storage()) v = rng.uniform(-1, 1);
    for (int head = 0; head < 2; ++head) {
      const Matrix alpha = gat::attention_coefficients(feat, g, p, head);
      for (std::size_t i = 0; i < 10; ++i) {
        double row = 0.0;
        for (std::size_t k = 0; k < 10; ++k) row += alpha(i, k);
        worst_row = std::max(worst_row, std::abs(row - 1.0));
      }
    }
  }
  c.expect(worst_row <= 1e-12, "row sum error " + fmt(worst_row));

  // Uniform features -> uniform attention.
  {
    std::vector<Vec3> pos;
    for (int i = 0; i < 6; ++i)
      pos.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const gat::ElectrodeGraph g = gat::build_montage_graph(pos, 2);
    const gat::AttentionParams p = gat::random_attention_params(1, 4, 3, 0.2, 7100);
    Matrix feat(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 4; ++k) feat(i, k) = 0.25 * (k + 1);
    const Matrix alpha = gat::attention_coefficients(feat, g, p, 0);
    for (std::size_t i = 0; i < 6 && c.ok; ++i) {
      const double expect = 1.0 / (g.neighbors[i].size() + 1.0);
      for (const int k : g.neighbors[i])
        c.expect(std::abs(alpha(i, k) - expect) <= 1e-13,
                 "uniform-feature attention is not uniform");
      c.expect(std::abs(alpha(i, i) - expect) <= 1e-13,
               "uniform-feature self attention is not uniform");
    }
  }

  // Fixed 3-node path against the direct formula.
  {
    gat::ElectrodeGraph g;
    g.n_nodes = 3;
    g.neighbors = {{1}, {0, 2}, {1}};
    gat::AttentionParams p;
    p.n_heads = 1;
    p.d_in = 2;
    p.d_out = 2;
    p.leaky_slope = 0.2;
    gat::HeadParams hp;
    hp.W = Matrix(2, 2);
    hp.W(0, 0) = 0.5; hp.W(0, 1) = -0.3;
    hp.W(1, 0) = 0.1; hp.W(1, 1) = 0.7;
    hp.a = {0.2, -0.4, 0.6, 0.3};
    p.heads.push_back(hp);
    Matrix feat(3, 2);
    feat(0, 0) = 1.0;  feat(0, 1) = 0.5;
    feat(1, 0) = -0.2; feat(1, 1) = 0.9;
    feat(2, 0) = 0.4;  feat(2, 1) = -0.6;
    auto wh = [&](int i, int r) {
      return hp.W(r, 0) * feat(i, 0) + hp.W(r, 1) * feat(i, 1);
    };
    auto logit = [&](int i, int j) {
      const double e = hp.a[0] * wh(i, 0) + hp.a[1] * wh(i, 1) +
                       hp.a[2] * wh(j, 0) + hp.a[3] * wh(j, 1);
      return e >= 0 ? e : 0.2 * e;
    };
    const Matrix alpha = gat::attention_coefficients(feat, g, p, 0);
    for (int i = 0; i < 3 && c.ok; ++i) {
      std::vector<int> members = g.neighbors[i];
      members.push_back(i);
      std::sort(members.begin(), members.end());
      double denom = 0.0;
      for (const int k : members) denom += std::exp(logit(i, k));
      for (const int k : members)
        c.expect(std::abs(alpha(i, k) - std::exp(logit(i, k)) / denom) <= 1e-10,
                 "3-node case deviates from the formula");
    }
  }

  // Exact permutation equivariance.
  {
    const std::size_t n = 7;
    std::vector<Vec3> pos;
    for (std::size_t i = 0; i < n; ++i)
      pos.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const gat::ElectrodeGraph g = gat::build_montage_graph(pos, 2);
    const gat::AttentionParams p = gat::random_attention_params(2, 3, 4, 0.2, 7200);
    Matrix feat(n, 3);
    for (double& v : feat.storage()) v = rng.uniform(-1, 1);

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.below(i + 1)]);

    gat::ElectrodeGraph pg;
    pg.n_nodes = n;
    pg.neighbors.resize(n);
    Matrix pfeat(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
      for (const int j : g.neighbors[i])
        pg.neighbors[perm[i]].push_back(perm[j]);
      for (std::size_t k = 0; k < 3; ++k) pfeat(perm[i], k) = feat(i, k);
    }
    for (auto& nbr : pg.neighbors) std::sort(nbr.begin(), nbr.end());

    const Matrix base = gat::ga_forward(feat, g, p);
    const Matrix moved = gat::ga_forward(pfeat, pg, p);
    for (std::size_t i = 0; i < n && c.ok; ++i)
      for (std::size_t k = 0; k < base.cols(); ++k)
        c.expect(moved(perm[i], k) == base(i, k),
                 "permutation equivariance is not exact");
  }
  if (c.ok) c.detail = "row sums, uniformity, path case, equivariance";
  return c;
}

Check criterion_metrics_oracles() {
  Check c;
  Rng rng(4071);

  // Chamfer vs the O(n^2) loop on sets up to 200 points.
  for (int trial = 0; trial < 3 && c.ok; ++trial) {
    metrics::PointSet a, b;
    for (int i = 0; i < 200; ++i)
      a.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    for (int i = 0; i < 163; ++i)
      b.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    auto directed = [](const metrics::PointSet& from, const metrics::PointSet& to) {
      double sum = 0.0;
      for (const Vec3& p : from.points) {
        double best = 1e300;
        for (const Vec3& q : to.points) {
          const Vec3 d = p - q;
          best = std::min(best, dot(d, d));
        }
        sum += best;
      }
      return sum / static_cast<double>(from.points.size());
    };
    const double want = directed(a, b) + directed(b, a);
    c.expect(std::abs(metrics::chamfer(a, b) - want) <= 1e-12,
             "chamfer deviates from the double-loop oracle");
  }

  // EMD vs exhaustive 7! enumeration, 50 trials, exact.
  for (int trial = 0; trial < 50 && c.ok; ++trial) {
    metrics::PointSet a, b;
    for (int i = 0; i < 7; ++i) {
      a.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      b.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    std::vector<int> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double sum = 0.0;
      for (int i = 0; i < 7; ++i) sum += norm(a.points[i] - b.points[perm[i]]);
      best = std::min(best, sum / 7.0);
    } while (std::next_permutation(perm.begin(), perm.end()));
    c.expect(metrics::emd(a, b) == best, "emd deviates from enumeration");
  }

  // ROUGE-1 and BLEU against hand-counted fixtures, exact.
  {
    const metrics::TokenSequence hyp = {"a", "white", "cat"};
    const metrics::TokenSequence ref = {"a", "white", "cat", "sits"};
    const auto r = metrics::rouge1(hyp, ref);
    c.expect(r.recall == 3.0 / 4.0 && r.precision == 1.0 &&
                 r.f1 == 2.0 * (3.0 / 4.0) * 1.0 / (3.0 / 4.0 + 1.0),
             "rouge fixture mismatch");
    const auto perfect = metrics::rouge1(ref, ref);
    c.expect(perfect.recall == 1.0 && perfect.precision == 1.0 && perfect.f1 == 1.0,
             "identical-sequence rouge is not exactly 1");

    const metrics::TokenSequence h2 = {"the", "cat", "sat", "on", "mat"};
    const metrics::TokenSequence r2 = {"the", "cat", "sat", "on", "the", "mat"};
    // Hand-counted clipped precisions 5/5, 3/4, 2/3, 1/2 pushed through the
    // documented cumulative formula.
    const double p[4] = {1.0, 3.0 / 4.0, 2.0 / 3.0, 1.0 / 2.0};
    const double bp = std::exp(1.0 - 6.0 / 5.0);
    const auto scores = metrics::bleu(h2, r2, 4);
    double log_sum = 0.0;
    for (int n = 1; n <= 4 && c.ok; ++n) {
      log_sum += std::log(p[n - 1]);
      c.expect(scores[n - 1] == bp * std::exp(log_sum / n),
               "bleu fixture mismatch at order " + std::to_string(n));
    }
    const auto ones = metrics::bleu(r2, r2, 4);
    for (const double s : ones)
      c.expect(s == 1.0, "identical-sequence bleu is not exactly 1");
  }
  if (c.ok) c.detail = "chamfer n=200, emd 50x7!, text fixtures";
  return c;
}

Check criterion_reconstruction() {
  Check c;
  const auto start = std::chrono::steady_clock::now();

  // Ground truth of three gaussians.
  std::vector<splat::Gaussian3D> gt(3);
  gt[0].mu = {-0.35, 0.1, 0.05};
  gt[0].scale = {0.28, 0.22, 0.25};
  gt[0].color = {0.85, 0.25, 0.2};
  gt[0].opacity = 0.9;
  gt[0].rotation = Quat::from_axis_angle({0, 1, 0}, 0.5);
  gt[1].mu = {0.3, -0.1, -0.1};
  gt[1].scale = {0.22, 0.3, 0.2};
  gt[1].color = {0.2, 0.7, 0.9};
  gt[1].opacity = 0.85;
  gt[1].rotation = Quat::from_axis_angle({1, 0, 0}, -0.4);
  gt[2].mu = {0.0, 0.35, 0.15};
  gt[2].scale = {0.24, 0.2, 0.26};
  gt[2].color = {0.95, 0.85, 0.3};
  gt[2].opacity = 0.8;
  gt[2].rotation = Quat::from_axis_angle({0, 0, 1}, 0.9);

  sds::OptConfig cfg;
  cfg.ring.views = 8;
  cfg.ring.radius = 3.2;
  cfg.ring.elevation_deg = 15.0;
  cfg.ring.fov_deg = 40.0;
  cfg.ring.width = 48;
  cfg.ring.height = 48;
  cfg.steps_object = 700;   // 1400 total, under the 2000-step budget
  cfg.steps_scene = 700;
  cfg.init_per_object = 16;
  cfg.seed = 2024;
  cfg.lr.mu = 2e-3;
  cfg.lr_decay = 0.015;

  const auto cams = sds::make_camera_ring(cfg.ring);
  std::vector<splat::RenderedImage> targets;
  for (const auto& cam : cams)
    targets.push_back(splat::render(gt, cam, cfg.background));
  sds::PhotometricGuidance photo(targets);

  layout::SceneLayout lay;
  lay.objects.push_back(
      {"scene", "scene", {{0, 0.05, 0}, {1.4, 1.2, 1.3}, 0.0}});
  const auto result = sds::optimize(lay, photo, photo, cfg, cams);

  // Held-out ninth view halfway between ring samples.
  const splat::Camera held =
      sds::ring_camera(cfg.ring, std::numbers::pi / 8.0);
  const auto gt_view = splat::render(gt, held, cfg.background);
  const auto got_view =
      splat::render(result.state.flatten(), held, cfg.background);
  const double psnr = splat::image_psnr(gt_view, got_view);
  c.expect(psnr >= 30.0, "held-out psnr " + fmt(psnr) + " dB < 30");

  // 50-step moving averages of the logged loss must be nonincreasing from
  // step 100 on.
  std::vector<double> losses;
  for (const auto& r : result.loss_log) losses.push_back(r.loss);
  c.expect(losses.size() == 1400, "unexpected loss log size");
  if (c.ok) {
    std::vector<double> wm;
    for (std::size_t t = 0; t + 50 <= losses.size(); ++t) {
      double m = 0.0;
      for (int k = 0; k < 50; ++k) m += losses[t + k];
      wm.push_back(m / 50.0);
    }
    for (std::size_t t = 100; t + 1 < wm.size(); ++t)
      if (wm[t + 1] > wm[t] + 1e-12) {
        c.fail("windowed loss rose at step " + std::to_string(t) + " (+" +
               fmt(wm[t + 1] - wm[t]) + ")");
        break;
      }
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  c.expect(secs < 120.0, "reconstruction took " + fmt(secs) + " s (limit 120)");
  if (c.ok)
    c.detail = "psnr " + fmt(psnr) + " dB, monotone windows, " + fmt(secs) + " s";
  return c;
}

Check criterion_preprocessing() {
  Check c;

  eeg::EegSegment seg;
  seg.n_channels = 1;
  seg.n_samples = 500;
  seg.sample_rate_hz = 1000.0;
  seg.data = Matrix(1, 500);
  for (std::size_t i = 0; i < 500; ++i) seg.data(0, i) = std::sin(0.02 * i);
  const eeg::EegSegment cropped = eeg::crop_window(seg, 40.0, 480.0);
  c.expect(cropped.n_samples == 440,
           "crop gave " + std::to_string(cropped.n_samples) + " samples");

  auto tone = [](double freq) {
    eeg::EegSegment s;
    s.n_channels = 1;
    s.n_samples = 1200;
    s.sample_rate_hz = 1000.0;
    s.data = Matrix(1, 1200);
    for (std::size_t i = 0; i < 1200; ++i)
      s.data(0, i) = std::sin(2.0 * std::numbers::pi * freq * i / 1000.0);
    return s;
  };
  auto rms_middle = [](const eeg::EegSegment& s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 100; i + 100 < s.n_samples; ++i, ++n)
      sum += s.data(0, i) * s.data(0, i);
    return std::sqrt(sum / n);
  };

  const eeg::EegSegment pass = tone(75.0);
  const double pass_ratio =
      rms_middle(eeg::bandpass_filter(pass)) / rms_middle(pass);
  c.expect(std::abs(pass_ratio - 1.0) < 0.05,
           "75 Hz rms ratio " + fmt(pass_ratio));

  const eeg::EegSegment stop = tone(10.0);
  const double stop_db = 20.0 * std::log10(rms_middle(stop) /
                                           rms_middle(eeg::bandpass_filter(stop)));
  c.expect(stop_db >= 20.0, "10 Hz attenuation " + fmt(stop_db) + " dB");
  if (c.ok)
    c.detail = "440 samples, 75 Hz ratio " + fmt(pass_ratio) + ", 10 Hz -" +
               fmt(stop_db) + " dB";
  return c;
}

Check criterion_layout() {
  Check c;

  // Round trip.
  const char* doc = R"({"objects":[
    {"name":"cat","prompt":"a cat","center":[0.5,0.2,-1],"size":[0.5,0.25,0.4],"yaw":0.7},
    {"name":"table","prompt":"a table","center":[2,0.4,0],"size":[1.4,0.8,0.75]}]})";
  const layout::SceneLayout parsed = layout::parse_layout_json(doc);
  const std::string text = layout::serialize_layout(parsed);
  const layout::SceneLayout back = layout::parse_layout_json(text);
  c.expect(back.objects.size() == 2, "round trip changed the object count");
  for (std::size_t i = 0; i < 2 && c.ok; ++i) {
    c.expect(back.objects[i].name == parsed.objects[i].name &&
                 back.objects[i].prompt == parsed.objects[i].prompt &&
                 back.objects[i].box.center.x == parsed.objects[i].box.center.x &&
                 back.objects[i].box.center.y == parsed.objects[i].box.center.y &&
                 back.objects[i].box.center.z == parsed.objects[i].box.center.z &&
                 back.objects[i].box.size.x == parsed.objects[i].box.size.x &&
                 back.objects[i].box.size.y == parsed.objects[i].box.size.y &&
                 back.objects[i].box.size.z == parsed.objects[i].box.size.z &&
                 back.objects[i].box.yaw == parsed.objects[i].box.yaw,
             "round trip is not field-identical");
  }
  c.expect(layout::serialize_layout(back) == text, "serialization not stable");

  // Containment on 1000 random boxes.
  Rng rng(4091);
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    layout::BoundingBox box;
    box.center = {rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    box.size = {rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.1, 3)};
    box.yaw = rng.uniform(-3.1, 3.1);
    const auto gs = layout::init_gaussians_in_box(box, 3, 5000 + trial);
    const Mat3 inv = rotation_matrix(Quat::from_axis_angle({0, 1, 0}, -box.yaw));
    for (const auto& g : gs) {
      const Vec3 local = inv * (g.mu - box.center);
      c.expect(std::abs(local.x) <= box.size.x / 2.0 + 1e-9 &&
                   std::abs(local.y) <= box.size.z / 2.0 + 1e-9 &&
                   std::abs(local.z) <= box.size.y / 2.0 + 1e-9,
               "sample escaped its box");
    }
  }

  // Fallback determinism, byte for byte.
  const std::string a =
      layout::serialize_layout(layout::fallback_layout("a cat on a table"));
  const std::string b =
      layout::serialize_layout(layout::fallback_layout("a cat on a table"));
  c.expect(a == b, "fallback layout not byte-stable");

  // Mock endpoint: success, malformed body, timeout.
  {
    httplib::Server server;
    server.Post("/ok", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(
          R"({"objects":[{"name":"cat","prompt":"cat","center":[0,0.2,0],"size":[0.5,0.25,0.4],"yaw":0}]})",
          "application/json");
    });
    server.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"objects\": [", "application/json");
    });
    server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(600));
      res.set_content("{}", "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&server] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    const auto ok = layout::request_layout(base + "/ok", "a cat",
                                           std::chrono::milliseconds(2000));
    c.expect(ok.ok() && ok.layout.objects.size() == 1,
             "mock success path failed: " + ok.message);
    const auto bad = layout::request_layout(base + "/bad", "a cat",
                                            std::chrono::milliseconds(2000));
    c.expect(bad.status == layout::FetchStatus::validation_error,
             "malformed body not a validation failure");
    const auto slow = layout::request_layout(base + "/slow", "a cat",
                                             std::chrono::milliseconds(150));
    c.expect(slow.status == layout::FetchStatus::transport_error,
             "timeout not a transport failure");
    server.stop();
    listener.join();
  }
  if (c.ok) c.detail = "round trip, 1000 boxes, fallback bytes, mock server";
  return c;
}

Check criterion_determinism() {
  Check c;
  const std::string dir =
      (std::filesystem::temp_directory_path() / "nsplat_acceptance_det").string();
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);

  // Targets for a small photometric run.
  std::vector<splat::Gaussian3D> gt(2);
  gt[0].mu = {-0.2, 0.1, 0};
  gt[0].scale = {0.25, 0.25, 0.25};
  gt[0].color = {0.8, 0.3, 0.2};
  gt[0].opacity = 0.8;
  gt[1].mu = {0.25, -0.05, 0.1};
  gt[1].scale = {0.2, 0.25, 0.2};
  gt[1].color = {0.2, 0.5, 0.9};
  gt[1].opacity = 0.8;
  sds::CameraRing ring;
  ring.views = 4;
  ring.radius = 3.0;
  ring.width = 24;
  ring.height = 24;
  const auto cams = sds::make_camera_ring(ring);
  std::vector<splat::RenderedImage> images;
  for (const auto& cam : cams) images.push_back(splat::render(gt, cam, {0, 0, 0}));
  sds::save_targets(dir + "/targets", cams, images);

  {
    std::ofstream lay(dir + "/layout.json");
    lay << R"({"objects":[{"name":"blob","prompt":"blob","center":[0,0,0],"size":[1,1,1]}]})";
  }
  {
    std::ofstream cfg(dir + "/cfg.json");
    cfg << R"({"steps_object":40,"steps_scene":40,"init_per_object":6,
               "ring":{"views":4,"width":24,"height":24,"radius":3.0}})";
  }

  auto run = [&](const std::string& out) {
    const std::string cmd = std::string(NSPLAT_CLI_PATH) + " optimize --layout " +
                            dir + "/layout.json --config " + dir +
                            "/cfg.json --targets " + dir + "/targets --seed 17 --out " +
                            out + " > " + out + "_log.txt 2>&1";
    return std::system(cmd.c_str());
  };
  c.expect(run(dir + "/run1") == 0, "first optimize run failed");
  c.expect(run(dir + "/run2") == 0, "second optimize run failed");

  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string ply1 = slurp(dir + "/run1/scene.ply");
  c.expect(!ply1.empty(), "run produced no scene.ply");
  c.expect(ply1 == slurp(dir + "/run2/scene.ply"), "scene.ply differs between runs");
  c.expect(slurp(dir + "/run1/object_stage.ply") ==
               slurp(dir + "/run2/object_stage.ply"),
           "object_stage.ply differs between runs");
  c.expect(slurp(dir + "/run1/loss.csv") == slurp(dir + "/run2/loss.csv"),
           "loss.csv differs between runs");
  std::filesystem::remove_all(dir);
  if (c.ok) c.detail = "byte-identical ply and loss log across two runs";
  return c;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    std::function<Check()> fn;
  };
  const std::vector<Entry> criteria = {
      {"gradient-suite", criterion_gradient_suite},
      {"compositing-invariants", criterion_compositing},
      {"covariance", criterion_covariance},
      {"loss-identities", criterion_loss_identities},
      {"attention", criterion_attention},
      {"metrics-oracles", criterion_metrics_oracles},
      {"desk-scale-reconstruction", criterion_reconstruction},
      {"preprocessing", criterion_preprocessing},
      {"layout", criterion_layout},
      {"determinism", criterion_determinism},
  };

  int failures = 0;
  for (const Entry& entry : criteria) {
    const Check result = entry.fn();
    if (result.ok) {
      std::printf("[PASS] %-26s %s\n", entry.name, result.detail.c_str());
    } else {
      std::printf("[FAIL] %-26s %s\n", entry.name, result.detail.c_str());
      ++failures;
    }
    std::fflush(stdout);
  }
  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures;
}
