// AVX2/FMA variants of the float32 kernels. Compiled with -mavx2 -mfma in
// this translation unit only; selected at runtime after a cpuid check.
//
// Accumulation order differs from the scalar reference (8 partial lanes,
// blocked tiles), so results match the reference to rounding, not bitwise.

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "uwdiff/kernels.hpp"

namespace uwdiff::kernels {

namespace {

inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

// Polynomial exp after Cephes (same coefficients as the widely used
// avx_mathfun port); ~1 ulp over the float range we use.
inline __m256 exp8(__m256 x) {
    const __m256 hi = _mm256_set1_ps(88.3762626647950f);
    const __m256 lo = _mm256_set1_ps(-88.3762626647949f);
    const __m256 log2e = _mm256_set1_ps(1.44269504088896341f);
    const __m256 c1 = _mm256_set1_ps(0.693359375f);
    const __m256 c2 = _mm256_set1_ps(-2.12194440e-4f);
    const __m256 one = _mm256_set1_ps(1.0f);

    x = _mm256_min_ps(x, hi);
    x = _mm256_max_ps(x, lo);

    __m256 fx = _mm256_fmadd_ps(x, log2e, _mm256_set1_ps(0.5f));
    fx = _mm256_floor_ps(fx);
    x = _mm256_fnmadd_ps(fx, c1, x);
    x = _mm256_fnmadd_ps(fx, c2, x);

    const __m256 z = _mm256_mul_ps(x, x);
    __m256 y = _mm256_set1_ps(1.9875691500e-4f);
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.3981999507e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(8.3334519073e-3f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(4.1665795894e-2f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(1.6666665459e-1f));
    y = _mm256_fmadd_ps(y, x, _mm256_set1_ps(5.0000001201e-1f));
    y = _mm256_fmadd_ps(y, z, _mm256_add_ps(x, one));

    __m256i imm = _mm256_cvtps_epi32(fx);
    imm = _mm256_add_epi32(imm, _mm256_set1_epi32(0x7f));
    imm = _mm256_slli_epi32(imm, 23);
    return _mm256_mul_ps(y, _mm256_castsi256_ps(imm));
}

inline __m256 sigmoid8(__m256 x) {
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 e = exp8(_mm256_sub_ps(_mm256_setzero_ps(), x));
    return _mm256_div_ps(one, _mm256_add_ps(one, e));
}

// ---- GEMM: C[M x N] (+)= A[M x K] * B[K x N] ----
// 4-row by 16-column register tile, K innermost with broadcast/FMA.

void gemm_nn_avx2(const float* a, const float* b, float* c, int m, int n, int k,
                  bool accumulate) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        const float* a0 = a + static_cast<size_t>(i) * k;
        const float* a1 = a0 + k;
        const float* a2 = a1 + k;
        const float* a3 = a2 + k;
        float* c0 = c + static_cast<size_t>(i) * n;
        float* c1 = c0 + n;
        float* c2 = c1 + n;
        float* c3 = c2 + n;

        int j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256 acc00, acc01, acc10, acc11, acc20, acc21, acc30, acc31;
            if (accumulate) {
                acc00 = _mm256_loadu_ps(c0 + j);
                acc01 = _mm256_loadu_ps(c0 + j + 8);
                acc10 = _mm256_loadu_ps(c1 + j);
                acc11 = _mm256_loadu_ps(c1 + j + 8);
                acc20 = _mm256_loadu_ps(c2 + j);
                acc21 = _mm256_loadu_ps(c2 + j + 8);
                acc30 = _mm256_loadu_ps(c3 + j);
                acc31 = _mm256_loadu_ps(c3 + j + 8);
            } else {
                acc00 = acc01 = acc10 = acc11 = _mm256_setzero_ps();
                acc20 = acc21 = acc30 = acc31 = _mm256_setzero_ps();
            }
            for (int p = 0; p < k; ++p) {
                const float* brow = b + static_cast<size_t>(p) * n + j;
                const __m256 b0 = _mm256_loadu_ps(brow);
                const __m256 b1 = _mm256_loadu_ps(brow + 8);
                const __m256 av0 = _mm256_broadcast_ss(a0 + p);
                const __m256 av1 = _mm256_broadcast_ss(a1 + p);
                const __m256 av2 = _mm256_broadcast_ss(a2 + p);
                const __m256 av3 = _mm256_broadcast_ss(a3 + p);
                acc00 = _mm256_fmadd_ps(av0, b0, acc00);
                acc01 = _mm256_fmadd_ps(av0, b1, acc01);
                acc10 = _mm256_fmadd_ps(av1, b0, acc10);
                acc11 = _mm256_fmadd_ps(av1, b1, acc11);
                acc20 = _mm256_fmadd_ps(av2, b0, acc20);
                acc21 = _mm256_fmadd_ps(av2, b1, acc21);
                acc30 = _mm256_fmadd_ps(av3, b0, acc30);
                acc31 = _mm256_fmadd_ps(av3, b1, acc31);
            }
            _mm256_storeu_ps(c0 + j, acc00);
            _mm256_storeu_ps(c0 + j + 8, acc01);
            _mm256_storeu_ps(c1 + j, acc10);
            _mm256_storeu_ps(c1 + j + 8, acc11);
            _mm256_storeu_ps(c2 + j, acc20);
            _mm256_storeu_ps(c2 + j + 8, acc21);
            _mm256_storeu_ps(c3 + j, acc30);
            _mm256_storeu_ps(c3 + j + 8, acc31);
        }
        for (; j + 8 <= n; j += 8) {
            __m256 r0, r1, r2, r3;
            if (accumulate) {
                r0 = _mm256_loadu_ps(c0 + j);
                r1 = _mm256_loadu_ps(c1 + j);
                r2 = _mm256_loadu_ps(c2 + j);
                r3 = _mm256_loadu_ps(c3 + j);
            } else {
                r0 = r1 = r2 = r3 = _mm256_setzero_ps();
            }
            for (int p = 0; p < k; ++p) {
                const __m256 bv = _mm256_loadu_ps(b + static_cast<size_t>(p) * n + j);
                r0 = _mm256_fmadd_ps(_mm256_broadcast_ss(a0 + p), bv, r0);
                r1 = _mm256_fmadd_ps(_mm256_broadcast_ss(a1 + p), bv, r1);
                r2 = _mm256_fmadd_ps(_mm256_broadcast_ss(a2 + p), bv, r2);
                r3 = _mm256_fmadd_ps(_mm256_broadcast_ss(a3 + p), bv, r3);
            }
            _mm256_storeu_ps(c0 + j, r0);
            _mm256_storeu_ps(c1 + j, r1);
            _mm256_storeu_ps(c2 + j, r2);
            _mm256_storeu_ps(c3 + j, r3);
        }
        for (; j < n; ++j) {
            float s0 = accumulate ? c0[j] : 0.0f;
            float s1 = accumulate ? c1[j] : 0.0f;
            float s2 = accumulate ? c2[j] : 0.0f;
            float s3 = accumulate ? c3[j] : 0.0f;
            for (int p = 0; p < k; ++p) {
                const float bv = b[static_cast<size_t>(p) * n + j];
                s0 += a0[p] * bv;
                s1 += a1[p] * bv;
                s2 += a2[p] * bv;
                s3 += a3[p] * bv;
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    for (; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256 acc = accumulate ? _mm256_loadu_ps(crow + j) : _mm256_setzero_ps();
            for (int p = 0; p < k; ++p) {
                const __m256 bv = _mm256_loadu_ps(b + static_cast<size_t>(p) * n + j);
                acc = _mm256_fmadd_ps(_mm256_broadcast_ss(arow + p), bv, acc);
            }
            _mm256_storeu_ps(crow + j, acc);
        }
        for (; j < n; ++j) {
            float s = accumulate ? crow[j] : 0.0f;
            for (int p = 0; p < k; ++p) s += arow[p] * b[static_cast<size_t>(p) * n + j];
            crow[j] = s;
        }
    }
}

// C[M x N] (+)= A[M x K] * B^T, B is [N x K]; dot-product form, 4 B rows
// per pass to reuse the A row.
void gemm_nt_avx2(const float* a, const float* b, float* c, int m, int n, int k,
                  bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        int j = 0;
        for (; j + 4 <= n; j += 4) {
            const float* b0 = b + static_cast<size_t>(j) * k;
            const float* b1 = b0 + k;
            const float* b2 = b1 + k;
            const float* b3 = b2 + k;
            __m256 acc0 = _mm256_setzero_ps();
            __m256 acc1 = _mm256_setzero_ps();
            __m256 acc2 = _mm256_setzero_ps();
            __m256 acc3 = _mm256_setzero_ps();
            int p = 0;
            for (; p + 8 <= k; p += 8) {
                const __m256 av = _mm256_loadu_ps(arow + p);
                acc0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), acc0);
                acc1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), acc1);
                acc2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), acc2);
                acc3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), acc3);
            }
            float s0 = hsum8(acc0), s1 = hsum8(acc1), s2 = hsum8(acc2), s3 = hsum8(acc3);
            for (; p < k; ++p) {
                const float av = arow[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            if (accumulate) {
                crow[j] += s0;
                crow[j + 1] += s1;
                crow[j + 2] += s2;
                crow[j + 3] += s3;
            } else {
                crow[j] = s0;
                crow[j + 1] = s1;
                crow[j + 2] = s2;
                crow[j + 3] = s3;
            }
        }
        for (; j < n; ++j) {
            const float* brow = b + static_cast<size_t>(j) * k;
            __m256 acc = _mm256_setzero_ps();
            int p = 0;
            for (; p + 8 <= k; p += 8)
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc);
            float s = hsum8(acc);
            for (; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// C[M x N] (+)= A^T * B, A is [K x M], B is [K x N]; axpy over C rows.
void gemm_tn_avx2(const float* a, const float* b, float* c, int m, int n, int k,
                  bool accumulate) {
    if (!accumulate) {
        const size_t total = static_cast<size_t>(m) * n;
        size_t z = 0;
        const __m256 zero = _mm256_setzero_ps();
        for (; z + 8 <= total; z += 8) _mm256_storeu_ps(c + z, zero);
        for (; z < total; ++z) c[z] = 0.0f;
    }
    for (int p = 0; p < k; ++p) {
        const float* arow = a + static_cast<size_t>(p) * m;
        const float* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const float av = arow[i];
            if (av == 0.0f) continue;
            float* crow = c + static_cast<size_t>(i) * n;
            const __m256 avv = _mm256_set1_ps(av);
            int j = 0;
            for (; j + 8 <= n; j += 8) {
                const __m256 cv = _mm256_loadu_ps(crow + j);
                _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(avv, _mm256_loadu_ps(brow + j), cv));
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void axpy_avx2(float alpha, const float* x, float* y, size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(float alpha, float* x, size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void adds_avx2(float alpha, float* x, size_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(x + i, _mm256_add_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) x[i] += alpha;
}

void vadd_avx2(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_avx2(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_avx2(const float* a, const float* b, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vexp_avx2(const float* x, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(out + i, exp8(_mm256_loadu_ps(x + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void silu_avx2(const float* x, float* out, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        _mm256_storeu_ps(out + i, _mm256_mul_ps(xv, sigmoid8(xv)));
    }
    for (; i < n; ++i) out[i] = x[i] / (1.0f + std::exp(-x[i]));
}

void silu_grad_avx2(const float* x, const float* dy, float* dx, size_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 s = sigmoid8(xv);
        // d silu = s * (1 + x*(1-s))
        const __m256 g = _mm256_mul_ps(s, _mm256_fmadd_ps(xv, _mm256_sub_ps(one, s), one));
        _mm256_storeu_ps(dx + i, _mm256_mul_ps(_mm256_loadu_ps(dy + i), g));
    }
    for (; i < n; ++i) {
        const float s = 1.0f / (1.0f + std::exp(-x[i]));
        dx[i] = dy[i] * (s * (1.0f + x[i] * (1.0f - s)));
    }
}

float dot_avx2(const float* a, const float* b, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc);
    float s = hsum8(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

float sum_avx2(const float* x, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

float sumsq_avx2(const float* x, size_t n) {
    __m256 acc = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        acc = _mm256_fmadd_ps(xv, xv, acc);
    }
    float s = hsum8(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

float maxv_avx2(const float* x, size_t n) {
    float m = x[0];
    size_t i = 0;
    if (n >= 8) {
        __m256 acc = _mm256_loadu_ps(x);
        for (i = 8; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
        alignas(32) float lanes[8];
        _mm256_store_ps(lanes, acc);
        for (float v : lanes) m = v > m ? v : m;
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

}  // namespace

const Table& avx2_table() {
    static const Table t = {
        "avx2",
        &gemm_nn_avx2,
        &gemm_nt_avx2,
        &gemm_tn_avx2,
        &axpy_avx2,
        &scale_avx2,
        &adds_avx2,
        &vadd_avx2,
        &vsub_avx2,
        &vmul_avx2,
        &vexp_avx2,
        &silu_avx2,
        &silu_grad_avx2,
        &dot_avx2,
        &sum_avx2,
        &sumsq_avx2,
        &maxv_avx2,
    };
    return t;
}

}  // namespace uwdiff::kernels
