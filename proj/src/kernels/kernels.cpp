#include "pcreg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

// Scalar reference kernels. This translation unit is compiled with
// -ffp-contract=off so the association order here is the exactness contract
// the vectorized variants must reproduce.

namespace pcreg::kernels {

namespace {

void transform_points_scalar(const double* r, const double* t,
                             const double* in, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double x = in[3 * i + 0];
        const double y = in[3 * i + 1];
        const double z = in[3 * i + 2];
        out[3 * i + 0] = ((r[0] * x + r[1] * y) + r[2] * z) + t[0];
        out[3 * i + 1] = ((r[3] * x + r[4] * y) + r[5] * z) + t[1];
        out[3 * i + 2] = ((r[6] * x + r[7] * y) + r[8] * z) + t[2];
    }
}

void nearest_point_scalar(double qx, double qy, double qz,
                          const double* xs, const double* ys, const double* zs,
                          std::size_t n, std::size_t* best_index, double* best_sqdist) {
    std::size_t bi = 0;
    double bd = 1.0 / 0.0;
    for (std::size_t i = 0; i < n; ++i) {
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

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void gemm_nt_scalar(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = dot_scalar(ai, b + j * k, k);
            c[i * n + j] = accumulate ? c[i * n + j] + v : v;
        }
    }
}

void gemm_nn_scalar(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double* bl = b + l * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
}

void gemm_tn_scalar(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = a + l * m;
        const double* bl = b + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ali = al[i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ali * bl[j];
        }
    }
}

void axpy_scalar(double s, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

const Backend kScalar{
    "scalar",
    transform_points_scalar,
    nearest_point_scalar,
    dot_scalar,
    gemm_nt_scalar,
    gemm_nn_scalar,
    gemm_tn_scalar,
    axpy_scalar,
};

const Backend* pick_default() {
    const char* env = std::getenv("PCREG_KERNELS");
    if (env != nullptr) {
        const std::string_view want(env);
        if (want == "scalar") return &kScalar;
        if (want == "avx2" && avx2_available()) return &avx2_backend();
        // "auto" or anything unrecognized falls through to detection.
    }
    return avx2_available() ? &avx2_backend() : &kScalar;
}

std::atomic<const Backend*>& active_slot() {
    static std::atomic<const Backend*> slot{pick_default()};
    return slot;
}

} // namespace

const Backend& scalar_backend() { return kScalar; }

#if !defined(PCREG_HAVE_AVX2_KERNELS)
bool avx2_available() { return false; }
const Backend& avx2_backend() { return kScalar; }
#endif

const Backend& active() { return *active_slot().load(std::memory_order_relaxed); }

bool set_active(std::string_view name) {
    if (name == "scalar") {
        active_slot().store(&kScalar, std::memory_order_relaxed);
        return true;
    }
    if (name == "avx2") {
        if (!avx2_available()) return false;
        active_slot().store(&avx2_backend(), std::memory_order_relaxed);
        return true;
    }
    if (name == "auto") {
        active_slot().store(avx2_available() ? &avx2_backend() : &kScalar,
                            std::memory_order_relaxed);
        return true;
    }
    return false;
}

} // namespace pcreg::kernels
