#pragma once

#include <cmath>
#include <cstddef>

// Scalar reference kernels, templated so the float table and the
// double-precision gradient-check path share one implementation. These
// define the semantics; the AVX2 variants must match them within
// accumulation-order tolerance (see tests/test_kernels.cpp).

namespace uwdiff::kernels::ref {

// C[M x N] (+)= A[M x K] * B[K x N], all row-major.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) crow[j] = T{0};
        }
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M x N] (+)= A[M x K] * B^T where B is [N x K].
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T acc{0};
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + acc : acc;
        }
    }
}

// C[M x N] (+)= A^T * B where A is [K x M], B is [K x N].
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int n, int k, bool accumulate) {
    if (!accumulate) {
        for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] = T{0};
    }
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<size_t>(p) * m;
        const T* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T{0}) continue;
            T* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void axpy(T alpha, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale(T alpha, T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <typename T>
void adds(T alpha, T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] += alpha;
}

template <typename T>
void vadd(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void vsub(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void vmul(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void vexp(const T* x, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

template <typename T>
void silu(const T* x, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = x[i] / (T{1} + std::exp(-x[i]));
}

// dx = dy * d/dx silu(x); overwrite.
template <typename T>
void silu_grad(const T* x, const T* dy, T* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T s = T{1} / (T{1} + std::exp(-x[i]));
        dx[i] = dy[i] * (s * (T{1} + x[i] * (T{1} - s)));
    }
}

template <typename T>
T dot(const T* a, const T* b, size_t n) {
    T acc{0};
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum(const T* x, size_t n) {
    T acc{0};
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
T sumsq(const T* x, size_t n) {
    T acc{0};
    for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <typename T>
T maxv(const T* x, size_t n) {
    T m = x[0];
    for (size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

}  // namespace uwdiff::kernels::ref
