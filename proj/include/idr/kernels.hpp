#pragma once

#include <cstddef>

// Data-parallel inner loops used by the tensor ops. Two implementations are
// provided: a scalar reference and an AVX2/FMA variant. The active one is
// picked at startup from CPUID, overridable with IDR_KERNELS=scalar|avx2.
// The dispatch decision is made once, so a fixed-seed run always executes
// the same code path on a given machine.
namespace idr::kern {

struct Impl {
    const char* name;

    // out[i] = a[i] + b[i]
    void (*add)(const double* a, const double* b, double* out, std::size_t n);
    // out[i] = a[i] * b[i]
    void (*mul)(const double* a, const double* b, double* out, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[i] = alpha * a[i]
    void (*scale)(const double* a, double alpha, double* out, std::size_t n);
    // out[i] = max(a[i], 0)
    void (*relu)(const double* a, double* out, std::size_t n);
    // dx[i] += (x[i] > 0) ? dy[i] : 0
    void (*relu_backward)(const double* x, const double* dy, double* dx, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);

    // Row-major GEMM. C is [m x n]; accumulate=false zeroes C first.
    // nn: C += A[m x k] * B[k x n]
    // nt: C += A[m x k] * B[n x k]^T
    // tn: C += A[k x m]^T * B[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c, bool accumulate);
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c, bool accumulate);
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c, bool accumulate);
};

const Impl& scalar_impl();
const Impl& avx2_impl();
bool avx2_available();

// Selected implementation (stable for the lifetime of the process).
const Impl& active();

}  // namespace idr::kern
