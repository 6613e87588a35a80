#pragma once

#include <cstddef>

#include "uwdiff/kernels_ref.hpp"

namespace uwdiff::kernels {

// Function-pointer table for the float32 inner loops. One scalar reference
// table always exists; an AVX2 table is registered when compiled in and the
// CPU supports avx2+fma. Selection happens once at first use and can be
// forced with UWDIFF_KERNELS=scalar|avx2.
struct Table {
    const char* name;
    void (*gemm_nn)(const float*, const float*, float*, int, int, int, bool);
    void (*gemm_nt)(const float*, const float*, float*, int, int, int, bool);
    void (*gemm_tn)(const float*, const float*, float*, int, int, int, bool);
    void (*axpy)(float, const float*, float*, size_t);
    void (*scale)(float, float*, size_t);
    void (*adds)(float, float*, size_t);
    void (*vadd)(const float*, const float*, float*, size_t);
    void (*vsub)(const float*, const float*, float*, size_t);
    void (*vmul)(const float*, const float*, float*, size_t);
    void (*vexp)(const float*, float*, size_t);
    void (*silu)(const float*, float*, size_t);
    void (*silu_grad)(const float*, const float*, float*, size_t);
    float (*dot)(const float*, const float*, size_t);
    float (*sum)(const float*, size_t);
    float (*sumsq)(const float*, size_t);
    float (*maxv)(const float*, size_t);
};

enum class Backend { Scalar, Avx2 };

const Table& active();
Backend active_backend();

// Force a backend; returns false (and leaves the active table unchanged)
// if it is not available on this build/CPU.
bool set_backend(Backend b);

// nullptr if the backend is unavailable.
const Table* table_for(Backend b);

bool avx2_supported();

// Dispatch shim for code templated on the scalar type: float goes through
// the runtime table, double always uses the scalar reference (the gradient
// oracle path must not depend on CPU features).
template <typename T>
struct Kern {
    static void gemm_nn(const T* a, const T* b, T* c, int m, int n, int k, bool acc) {
        ref::gemm_nn(a, b, c, m, n, k, acc);
    }
    static void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k, bool acc) {
        ref::gemm_nt(a, b, c, m, n, k, acc);
    }
    static void gemm_tn(const T* a, const T* b, T* c, int m, int n, int k, bool acc) {
        ref::gemm_tn(a, b, c, m, n, k, acc);
    }
    static void axpy(T a, const T* x, T* y, size_t n) { ref::axpy(a, x, y, n); }
    static void scale(T a, T* x, size_t n) { ref::scale(a, x, n); }
    static void adds(T a, T* x, size_t n) { ref::adds(a, x, n); }
    static void vadd(const T* a, const T* b, T* o, size_t n) { ref::vadd(a, b, o, n); }
    static void vsub(const T* a, const T* b, T* o, size_t n) { ref::vsub(a, b, o, n); }
    static void vmul(const T* a, const T* b, T* o, size_t n) { ref::vmul(a, b, o, n); }
    static void vexp(const T* x, T* o, size_t n) { ref::vexp(x, o, n); }
    static void silu(const T* x, T* o, size_t n) { ref::silu(x, o, n); }
    static void silu_grad(const T* x, const T* dy, T* dx, size_t n) { ref::silu_grad(x, dy, dx, n); }
    static T dot(const T* a, const T* b, size_t n) { return ref::dot(a, b, n); }
    static T sum(const T* x, size_t n) { return ref::sum(x, n); }
    static T sumsq(const T* x, size_t n) { return ref::sumsq(x, n); }
    static T maxv(const T* x, size_t n) { return ref::maxv(x, n); }
};

template <>
struct Kern<float> {
    static void gemm_nn(const float* a, const float* b, float* c, int m, int n, int k, bool acc) {
        active().gemm_nn(a, b, c, m, n, k, acc);
    }
    static void gemm_nt(const float* a, const float* b, float* c, int m, int n, int k, bool acc) {
        active().gemm_nt(a, b, c, m, n, k, acc);
    }
    static void gemm_tn(const float* a, const float* b, float* c, int m, int n, int k, bool acc) {
        active().gemm_tn(a, b, c, m, n, k, acc);
    }
    static void axpy(float a, const float* x, float* y, size_t n) { active().axpy(a, x, y, n); }
    static void scale(float a, float* x, size_t n) { active().scale(a, x, n); }
    static void adds(float a, float* x, size_t n) { active().adds(a, x, n); }
    static void vadd(const float* a, const float* b, float* o, size_t n) { active().vadd(a, b, o, n); }
    static void vsub(const float* a, const float* b, float* o, size_t n) { active().vsub(a, b, o, n); }
    static void vmul(const float* a, const float* b, float* o, size_t n) { active().vmul(a, b, o, n); }
    static void vexp(const float* x, float* o, size_t n) { active().vexp(x, o, n); }
    static void silu(const float* x, float* o, size_t n) { active().silu(x, o, n); }
    static void silu_grad(const float* x, const float* dy, float* dx, size_t n) {
        active().silu_grad(x, dy, dx, n);
    }
    static float dot(const float* a, const float* b, size_t n) { return active().dot(a, b, n); }
    static float sum(const float* x, size_t n) { return active().sum(x, n); }
    static float sumsq(const float* x, size_t n) { return active().sumsq(x, n); }
    static float maxv(const float* x, size_t n) { return active().maxv(x, n); }
};

}  // namespace uwdiff::kernels
