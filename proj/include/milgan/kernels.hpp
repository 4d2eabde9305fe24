#pragma once

#include <cstddef>

// Dense double-precision inner loops behind every tensor operation.
//
// Each kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant selected at runtime. The vector variants of add/sub/mul/scale/axpy
// and matmul perform the same per-element operations in the same order as the
// scalar reference and are bit-identical to it (no FMA contraction). `dot`
// reassociates its reduction in the vector backend and may differ from scalar
// in the last ulps; callers that freeze expected values use tolerances well
// above that.

namespace milgan::kern {

enum class Backend { scalar, avx2 };

/// Backend currently installed in the dispatch table.
Backend active_backend();

/// Best backend the running CPU supports.
Backend best_backend();

/// Install a backend. Returns false (and installs scalar) if the requested
/// backend is not available on this CPU/build.
bool set_backend(Backend b);

const char* backend_name(Backend b);

void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);

/// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

double dot(const double* a, const double* b, std::size_t n);

/// out[m x n] = a[m x k] * b[k x n], row-major. out is overwritten.
void matmul(const double* a, const double* b, double* out,
            std::size_t m, std::size_t k, std::size_t n);

}  // namespace milgan::kern
