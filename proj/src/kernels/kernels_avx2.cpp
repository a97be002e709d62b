#include "pcreg/kernels.hpp"

#include <cstring>
#include <immintrin.h>

// AVX2 variants. Compiled with -mavx2 and -ffp-contract=off; element-wise
// kernels keep the scalar association order so results match the reference
// bit for bit (see the contract in kernels.hpp). Only dot and gemm_nt use a
// lane-split reduction and therefore round differently.

namespace pcreg::kernels {

namespace {

void transform_points_avx2(const double* r, const double* t,
                           const double* in, double* out, std::size_t n) {
    const __m256d r0 = _mm256_set1_pd(r[0]), r1 = _mm256_set1_pd(r[1]), r2 = _mm256_set1_pd(r[2]);
    const __m256d r3 = _mm256_set1_pd(r[3]), r4 = _mm256_set1_pd(r[4]), r5 = _mm256_set1_pd(r[5]);
    const __m256d r6 = _mm256_set1_pd(r[6]), r7 = _mm256_set1_pd(r[7]), r8 = _mm256_set1_pd(r[8]);
    const __m256d t0 = _mm256_set1_pd(t[0]), t1 = _mm256_set1_pd(t[1]), t2 = _mm256_set1_pd(t[2]);

    std::size_t i = 0;
    alignas(32) double bx[4], by[4], bz[4];
    for (; i + 4 <= n; i += 4) {
        const double* p = in + 3 * i;
        const __m256d x = _mm256_set_pd(p[9], p[6], p[3], p[0]);
        const __m256d y = _mm256_set_pd(p[10], p[7], p[4], p[1]);
        const __m256d z = _mm256_set_pd(p[11], p[8], p[5], p[2]);
        const __m256d ox = _mm256_add_pd(
            _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r0, x), _mm256_mul_pd(r1, y)),
                          _mm256_mul_pd(r2, z)),
            t0);
        const __m256d oy = _mm256_add_pd(
            _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r3, x), _mm256_mul_pd(r4, y)),
                          _mm256_mul_pd(r5, z)),
            t1);
        const __m256d oz = _mm256_add_pd(
            _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(r6, x), _mm256_mul_pd(r7, y)),
                          _mm256_mul_pd(r8, z)),
            t2);
        _mm256_store_pd(bx, ox);
        _mm256_store_pd(by, oy);
        _mm256_store_pd(bz, oz);
        double* q = out + 3 * i;
        for (int l = 0; l < 4; ++l) {
            q[3 * l + 0] = bx[l];
            q[3 * l + 1] = by[l];
            q[3 * l + 2] = bz[l];
        }
    }
    for (; i < n; ++i) {
        const double x = in[3 * i + 0];
        const double y = in[3 * i + 1];
        const double z = in[3 * i + 2];
        out[3 * i + 0] = ((r[0] * x + r[1] * y) + r[2] * z) + t[0];
        out[3 * i + 1] = ((r[3] * x + r[4] * y) + r[5] * z) + t[1];
        out[3 * i + 2] = ((r[6] * x + r[7] * y) + r[8] * z) + t[2];
    }
}

void nearest_point_avx2(double qx, double qy, double qz,
                        const double* xs, const double* ys, const double* zs,
                        std::size_t n, std::size_t* best_index, double* best_sqdist) {
    std::size_t bi = 0;
    double bd = 1.0 / 0.0;
    std::size_t i = 0;

    if (n >= 4) {
        const __m256d qxv = _mm256_set1_pd(qx);
        const __m256d qyv = _mm256_set1_pd(qy);
        const __m256d qzv = _mm256_set1_pd(qz);
        __m256d bestd = _mm256_set1_pd(1.0 / 0.0);
        __m256d besti = _mm256_setzero_pd();
        __m256d idx = _mm256_set_pd(3.0, 2.0, 1.0, 0.0);
        const __m256d four = _mm256_set1_pd(4.0);
        for (; i + 4 <= n; i += 4) {
            const __m256d dx = _mm256_sub_pd(qxv, _mm256_loadu_pd(xs + i));
            const __m256d dy = _mm256_sub_pd(qyv, _mm256_loadu_pd(ys + i));
            const __m256d dz = _mm256_sub_pd(qzv, _mm256_loadu_pd(zs + i));
            const __m256d d2 = _mm256_add_pd(
                _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                _mm256_mul_pd(dz, dz));
            const __m256d lt = _mm256_cmp_pd(d2, bestd, _CMP_LT_OQ);
            bestd = _mm256_blendv_pd(bestd, d2, lt);
            besti = _mm256_blendv_pd(besti, idx, lt);
            idx = _mm256_add_pd(idx, four);
        }
        alignas(32) double ld[4], li[4];
        _mm256_store_pd(ld, bestd);
        _mm256_store_pd(li, besti);
        // Lexicographic (distance, index) merge keeps the lowest index on ties.
        for (int l = 0; l < 4; ++l) {
            const std::size_t cand = static_cast<std::size_t>(li[l]);
            if (ld[l] < bd || (ld[l] == bd && cand < bi)) {
                bd = ld[l];
                bi = cand;
            }
        }
    }
    for (; i < n; ++i) {
        const double dx = qx - xs[i];
        const double dy = qy - ys[i];
        const double dz = qz - zs[i];
        const double d2 = (dx * dx + dy * dy) + dz * dz;
        if (d2 < bd) {
            bd = d2;
            bi = i;
        }
    }
    *best_index = bi;
    *best_sqdist = bd;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void gemm_nt_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = dot_avx2(ai, b + j * k, k);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

void gemm_nn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double* bl = b + l * n;
            const __m256d av = _mm256_set1_pd(ail);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                const __m256d cv = _mm256_loadu_pd(ci + j);
                _mm256_storeu_pd(ci + j, _mm256_add_pd(cv, _mm256_mul_pd(av, _mm256_loadu_pd(bl + j))));
            }
            for (; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
}

void gemm_tn_avx2(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = a + l * m;
        const double* bl = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ali = al[i];
            double* ci = c + i * n;
            const __m256d av = _mm256_set1_pd(ali);
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                const __m256d cv = _mm256_loadu_pd(ci + j);
                _mm256_storeu_pd(ci + j, _mm256_add_pd(cv, _mm256_mul_pd(av, _mm256_loadu_pd(bl + j))));
            }
            for (; j < n; ++j) ci[j] += ali * bl[j];
        }
    }
}

void axpy_avx2(double s, const double* x, double* y, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d yv = _mm256_loadu_pd(y + i);
        _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(sv, _mm256_loadu_pd(x + i))));
    }
    for (; i < n; ++i) y[i] += s * x[i];
}

const Backend kAvx2{
    "avx2",
    transform_points_avx2,
    nearest_point_avx2,
    dot_avx2,
    gemm_nt_avx2,
    gemm_nn_avx2,
    gemm_tn_avx2,
    axpy_avx2,
};

} // namespace

bool avx2_available() {
    static const bool ok = __builtin_cpu_supports("avx2");
    return ok;
}

const Backend& avx2_backend() { return kAvx2; }

} // namespace pcreg::kernels
