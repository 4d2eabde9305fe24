#include "milgan/kernels.hpp"

#include <algorithm>

namespace milgan::kern {

// ---------------------------------------------------------------------------
// scalar reference kernels
// ---------------------------------------------------------------------------

namespace scalar {

void add(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(double alpha, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// i-p-j order: every output element accumulates over p in increasing order,
// the invariant the AVX2 variant preserves for bit equality.
void matmul(const double* a, const double* b, double* out,
            std::size_t m, std::size_t k, std::size_t n) {
  std::fill(out, out + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] = orow[j] + av * brow[j];
    }
  }
}

}  // namespace scalar

#ifdef MILGAN_HAVE_AVX2
namespace avx2 {
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
void matmul(const double* a, const double* b, double* out,
            std::size_t m, std::size_t k, std::size_t n);
bool supported();
}  // namespace avx2
#endif

// ---------------------------------------------------------------------------
// runtime dispatch
// ---------------------------------------------------------------------------

namespace {

struct Table {
  void (*add)(const double*, const double*, double*, std::size_t);
  void (*sub)(const double*, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(double, const double*, double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  double (*dot)(const double*, const double*, std::size_t);
  void (*matmul)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
};

constexpr Table kScalarTable{scalar::add, scalar::sub, scalar::mul, scalar::scale,
                             scalar::axpy, scalar::dot, scalar::matmul};

#ifdef MILGAN_HAVE_AVX2
constexpr Table kAvx2Table{avx2::add, avx2::sub, avx2::mul, avx2::scale,
                           avx2::axpy, avx2::dot, avx2::matmul};
#endif

Table g_table = kScalarTable;
Backend g_backend = Backend::scalar;
bool g_initialized = false;

void ensure_init() {
  if (!g_initialized) {
    g_initialized = true;
    set_backend(best_backend());
  }
}

}  // namespace

Backend best_backend() {
#ifdef MILGAN_HAVE_AVX2
  if (avx2::supported()) return Backend::avx2;
#endif
  return Backend::scalar;
}

Backend active_backend() {
  ensure_init();
  return g_backend;
}

bool set_backend(Backend b) {
  g_initialized = true;
#ifdef MILGAN_HAVE_AVX2
  if (b == Backend::avx2 && avx2::supported()) {
    g_table = kAvx2Table;
    g_backend = Backend::avx2;
    return true;
  }
#endif
  g_table = kScalarTable;
  g_backend = Backend::scalar;
  return b == Backend::scalar;
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  ensure_init();
  g_table.add(a, b, out, n);
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  ensure_init();
  g_table.sub(a, b, out, n);
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  ensure_init();
  g_table.mul(a, b, out, n);
}

void scale(double alpha, const double* x, double* out, std::size_t n) {
  ensure_init();
  g_table.scale(alpha, x, out, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  ensure_init();
  g_table.axpy(alpha, x, y, n);
}

double dot(const double* a, const double* b, std::size_t n) {
  ensure_init();
  return g_table.dot(a, b, n);
}

void matmul(const double* a, const double* b, double* out,
            std::size_t m, std::size_t k, std::size_t n) {
  ensure_init();
  g_table.matmul(a, b, out, m, k, n);
}

}  // namespace milgan::kern
