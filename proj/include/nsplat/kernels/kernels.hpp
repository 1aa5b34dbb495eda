#pragma once

#include <cstddef>
#include <string>

namespace nsplat::kernels {

// Hot inner loops come in a scalar reference build and an AVX2 build compiled
// into separate translation units (both with FP contraction off). The active
// variant is picked once at startup: NSPLAT_KERNEL_ISA=scalar|avx2|auto
// overrides CPU detection. splat_row and min_sqdist are bit-compatible across
// variants; the reductions (dot, sum_sq) reassociate and agree to ~1e-15
// relative. Equivalence is enforced by tests/test_kernels.cpp.

enum class Isa {
  scalar,
  avx2,
};

// ISA selected for this process (env override, else CPU detection).
Isa active_isa();
// Force a variant (tests); throws nsplat::Error if unsupported on this CPU.
void force_isa(Isa isa);
bool avx2_supported();
std::string isa_name(Isa isa);

double dot(const double* a, const double* b, std::size_t n);
double sum_sq(const double* a, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// Smallest squared Euclidean distance from query (qx,qy,qz) to the point set
// given as three coordinate arrays of length n (n >= 1).
double min_sqdist(const double* xs, const double* ys, const double* zs,
                  std::size_t n, double qx, double qy, double qz);

// Front-to-back compositing of one projected splat across a contiguous span
// of one image row. For pixel k in [0,n):
//   dx   = dx0 + k
//   q    = A*dx*dx + 2B*dx*dy + C*dy*dy          (2D Mahalanobis, squared)
//   skip the pixel if q > splat_cutoff_q
//   a'   = min(opacity * exp(-q/2), splat_alpha_max)
//   rgb[k] += color * a' * T[k];  T[k] *= (1 - a')
inline constexpr double splat_cutoff_q = 9.0;   // 3 sigma support
inline constexpr double splat_alpha_max = 0.9999;
void splat_row(double* r, double* g, double* b, double* transmittance,
               std::size_t n, double dx0, double dy, double conic_a,
               double conic_b, double conic_c, double opacity, double col_r,
               double col_g, double col_b);

}  // namespace nsplat::kernels
