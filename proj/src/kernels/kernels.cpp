#include "nsplat/kernels/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <string>

#include "nsplat/core/error.hpp"

namespace nsplat::kernels {

namespace detail {

double dot_scalar(const double*, const double*, std::size_t);
double sum_sq_scalar(const double*, std::size_t);
void axpy_scalar(double, const double*, double*, std::size_t);
double min_sqdist_scalar(const double*, const double*, const double*,
                         std::size_t, double, double, double);
void splat_row_scalar(double*, double*, double*, double*, std::size_t, double,
                      double, double, double, double, double, double, double,
                      double);

#ifdef NSPLAT_HAVE_AVX2
double dot_avx2(const double*, const double*, std::size_t);
double sum_sq_avx2(const double*, std::size_t);
void axpy_avx2(double, const double*, double*, std::size_t);
double min_sqdist_avx2(const double*, const double*, const double*,
                       std::size_t, double, double, double);
void splat_row_avx2(double*, double*, double*, double*, std::size_t, double,
                    double, double, double, double, double, double, double,
                    double);
#endif

}  // namespace detail

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum_sq)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*min_sqdist)(const double*, const double*, const double*,
                       std::size_t, double, double, double);
  void (*splat_row)(double*, double*, double*, double*, std::size_t, double,
                    double, double, double, double, double, double, double,
                    double);
};

constexpr Table scalar_table{detail::dot_scalar, detail::sum_sq_scalar,
                             detail::axpy_scalar, detail::min_sqdist_scalar,
                             detail::splat_row_scalar};

#ifdef NSPLAT_HAVE_AVX2
constexpr Table avx2_table{detail::dot_avx2, detail::sum_sq_avx2,
                           detail::axpy_avx2, detail::min_sqdist_avx2,
                           detail::splat_row_avx2};
#endif

Isa g_isa = [] {
  const char* env = std::getenv("NSPLAT_KERNEL_ISA");
  const std::string want = env ? env : "auto";
  if (want == "scalar") return Isa::scalar;
  if (want == "avx2") {
    if (avx2_supported()) return Isa::avx2;
    // Static init cannot propagate an exception; degrade instead.
    std::fprintf(stderr,
                 "NSPLAT_KERNEL_ISA=avx2 requested but the CPU lacks AVX2; "
                 "using scalar kernels\n");
    return Isa::scalar;
  }
  return avx2_supported() ? Isa::avx2 : Isa::scalar;
}();

const Table& table() {
#ifdef NSPLAT_HAVE_AVX2
  if (g_isa == Isa::avx2) return avx2_table;
#endif
  return scalar_table;
}

}  // namespace

bool avx2_supported() {
#if defined(NSPLAT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

Isa active_isa() { return g_isa; }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_supported())
    throw Error(ErrorKind::validation, "AVX2 kernels unavailable on this CPU");
  g_isa = isa;
}

std::string isa_name(Isa isa) {
  return isa == Isa::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) {
  return table().dot(a, b, n);
}
double sum_sq(const double* a, std::size_t n) { return table().sum_sq(a, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  table().axpy(alpha, x, y, n);
}
double min_sqdist(const double* xs, const double* ys, const double* zs,
                  std::size_t n, double qx, double qy, double qz) {
  return table().min_sqdist(xs, ys, zs, n, qx, qy, qz);
}
void splat_row(double* r, double* g, double* b, double* transmittance,
               std::size_t n, double dx0, double dy, double conic_a,
               double conic_b, double conic_c, double opacity, double col_r,
               double col_g, double col_b) {
  table().splat_row(r, g, b, transmittance, n, dx0, dy, conic_a, conic_b,
                    conic_c, opacity, col_r, col_g, col_b);
}

}  // namespace nsplat::kernels
