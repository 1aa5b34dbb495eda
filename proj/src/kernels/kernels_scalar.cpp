// Scalar reference kernels. This TU is compiled with -ffp-contract=off so the
// operation sequence below is the exact IEEE semantics the AVX2 variants must
// reproduce (see kernels_avx2.cpp, which mirrors the op order lane-wise).

#include <cmath>
#include <cstddef>

namespace nsplat::kernels::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_sq_scalar(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double min_sqdist_scalar(const double* xs, const double* ys, const double* zs,
                         std::size_t n, double qx, double qy, double qz) {
  double best = (xs[0] - qx) * (xs[0] - qx);
  best = (best + (ys[0] - qy) * (ys[0] - qy)) + (zs[0] - qz) * (zs[0] - qz);
  for (std::size_t i = 1; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    const double d = (dx * dx + dy * dy) + dz * dz;
    if (d < best) best = d;
  }
  return best;
}

void splat_row_scalar(double* r, double* g, double* b, double* transmittance,
                      std::size_t n, double dx0, double dy, double conic_a,
                      double conic_b, double conic_c, double opacity,
                      double col_r, double col_g, double col_b) {
  const double b2 = conic_b + conic_b;
  const double qy = (conic_c * dy) * dy;
  const double bdy = b2 * dy;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = dx0 + static_cast<double>(i);
    const double q = ((conic_a * dx) * dx + bdy * dx) + qy;
    if (!(q <= 9.0)) continue;  // splat_cutoff_q
    double a = opacity * std::exp(-0.5 * q);
    if (a > 0.9999) a = 0.9999;  // splat_alpha_max
    const double t = transmittance[i];
    const double w = a * t;
    r[i] = r[i] + col_r * w;
    g[i] = g[i] + col_g * w;
    b[i] = b[i] + col_b * w;
    transmittance[i] = t * (1.0 - a);
  }
}

}  // namespace nsplat::kernels::detail
