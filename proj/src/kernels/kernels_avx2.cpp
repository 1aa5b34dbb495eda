// AVX2 variants. Compiled with -mavx2 -ffp-contract=off; only reached after a
// runtime CPU check. splat_row and min_sqdist mirror the scalar reference
// op-for-op (no FMA, same rounding sequence per lane), so they are bit-exact
// against kernels_scalar.cpp; dot/sum_sq use a 4-wide accumulator and only
// agree to rounding.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

namespace nsplat::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    const __m256d vb = _mm256_loadu_pd(b + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, vb));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_sq_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(va, va));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * a[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i);
    const __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(vy, _mm256_mul_pd(va, vx)));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double min_sqdist_avx2(const double* xs, const double* ys, const double* zs,
                       std::size_t n, double qx, double qy, double qz) {
  const __m256d vqx = _mm256_set1_pd(qx);
  const __m256d vqy = _mm256_set1_pd(qy);
  const __m256d vqz = _mm256_set1_pd(qz);
  __m256d vbest = _mm256_set1_pd(1.0 / 0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), vqx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), vqy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), vqz);
    // (dx*dx + dy*dy) + dz*dz, same order as the scalar reference
    const __m256d d = _mm256_add_pd(
        _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
        _mm256_mul_pd(dz, dz));
    vbest = _mm256_min_pd(vbest, d);
  }
  double lanes[4];
  _mm256_storeu_pd(lanes, vbest);
  double best = lanes[0];
  for (int k = 1; k < 4; ++k)
    if (lanes[k] < best) best = lanes[k];
  for (; i < n; ++i) {
    const double dx = xs[i] - qx;
    const double dy = ys[i] - qy;
    const double dz = zs[i] - qz;
    const double d = (dx * dx + dy * dy) + dz * dz;
    if (d < best) best = d;
  }
  return best;
}

void splat_row_avx2(double* r, double* g, double* b, double* transmittance,
                    std::size_t n, double dx0, double dy, double conic_a,
                    double conic_b, double conic_c, double opacity,
                    double col_r, double col_g, double col_b) {
  const double b2 = conic_b + conic_b;
  const double qy = (conic_c * dy) * dy;
  const double bdy = b2 * dy;

  const __m256d vdx0 = _mm256_set1_pd(dx0);
  const __m256d va_c = _mm256_set1_pd(conic_a);
  const __m256d vbdy = _mm256_set1_pd(bdy);
  const __m256d vqy = _mm256_set1_pd(qy);
  const __m256d vcut = _mm256_set1_pd(9.0);
  const __m256d vone = _mm256_set1_pd(1.0);
  const __m256d vcr = _mm256_set1_pd(col_r);
  const __m256d vcg = _mm256_set1_pd(col_g);
  const __m256d vcb = _mm256_set1_pd(col_b);

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d idx = _mm256_set_pd(static_cast<double>(i + 3),
                                      static_cast<double>(i + 2),
                                      static_cast<double>(i + 1),
                                      static_cast<double>(i + 0));
    const __m256d dx = _mm256_add_pd(vdx0, idx);
    // q = ((a*dx)*dx + bdy*dx) + qy
    __m256d q = _mm256_mul_pd(_mm256_mul_pd(va_c, dx), dx);
    q = _mm256_add_pd(q, _mm256_mul_pd(vbdy, dx));
    q = _mm256_add_pd(q, vqy);

    const __m256d mask = _mm256_cmp_pd(q, vcut, _CMP_LE_OQ);
    if (_mm256_testz_pd(mask, mask)) continue;

    // exp through libm per lane so the result matches the scalar path bit
    // for bit; everything around it stays vectorized.
    alignas(32) double ql[4], al[4];
    _mm256_store_pd(ql, q);
    const int mbits = _mm256_movemask_pd(mask);
    for (int k = 0; k < 4; ++k) {
      if (mbits & (1 << k)) {
        double a = opacity * std::exp(-0.5 * ql[k]);
        if (a > 0.9999) a = 0.9999;
        al[k] = a;
      } else {
        al[k] = 0.0;
      }
    }
    const __m256d va = _mm256_load_pd(al);

    const __m256d vt = _mm256_loadu_pd(transmittance + i);
    const __m256d vw = _mm256_mul_pd(va, vt);

    const __m256d vr0 = _mm256_loadu_pd(r + i);
    const __m256d vg0 = _mm256_loadu_pd(g + i);
    const __m256d vb0 = _mm256_loadu_pd(b + i);
    const __m256d vr1 = _mm256_add_pd(vr0, _mm256_mul_pd(vcr, vw));
    const __m256d vg1 = _mm256_add_pd(vg0, _mm256_mul_pd(vcg, vw));
    const __m256d vb1 = _mm256_add_pd(vb0, _mm256_mul_pd(vcb, vw));
    const __m256d vt1 = _mm256_mul_pd(vt, _mm256_sub_pd(vone, va));

    _mm256_storeu_pd(r + i, _mm256_blendv_pd(vr0, vr1, mask));
    _mm256_storeu_pd(g + i, _mm256_blendv_pd(vg0, vg1, mask));
    _mm256_storeu_pd(b + i, _mm256_blendv_pd(vb0, vb1, mask));
    _mm256_storeu_pd(transmittance + i, _mm256_blendv_pd(vt, vt1, mask));
  }
  // Scalar tail, same expression order as the reference.
  for (; i < n; ++i) {
    const double dx = dx0 + static_cast<double>(i);
    const double q = ((conic_a * dx) * dx + bdy * dx) + qy;
    if (!(q <= 9.0)) continue;
    double a = opacity * std::exp(-0.5 * q);
    if (a > 0.9999) a = 0.9999;
    const double t = transmittance[i];
    const double w = a * t;
    r[i] = r[i] + col_r * w;
    g[i] = g[i] + col_g * w;
    b[i] = b[i] + col_b * w;
    transmittance[i] = t * (1.0 - a);
  }
}

}  // namespace nsplat::kernels::detail
