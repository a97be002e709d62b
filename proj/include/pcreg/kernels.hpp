#pragma once

#include <cstddef>
#include <string_view>

namespace pcreg::kernels {

/// Data-parallel inner loops used by the cloud, neighbor-search, and network
/// code. Every entry has a scalar reference implementation and may have a
/// vectorized variant; the active backend is picked once at startup from the
/// host CPU (overridable via set_active or the PCREG_KERNELS environment
/// variable: "auto", "scalar", "avx2").
///
/// Exactness contract, relied on by the equivalence tests:
///   - transform_points, nearest_point, gemm_nn, gemm_tn, axpy produce
///     bit-identical results across backends (element-wise operations keep
///     the scalar association order; both translation units are compiled
///     with floating-point contraction off).
///   - dot and gemm_nt reduce in a backend-dependent order and agree only
///     up to rounding.
struct Backend {
    const char* name;

    /// out[i] = R * in[i] + t over n xyz triples (row-major 3x3 R).
    void (*transform_points)(const double* rotation, const double* translation,
                             const double* xyz_in, double* xyz_out, std::size_t n);

    /// Index and squared distance of the point in (xs, ys, zs) closest to q.
    /// Ties resolve to the lowest index. n must be positive.
    void (*nearest_point)(double qx, double qy, double qz,
                          const double* xs, const double* ys, const double* zs,
                          std::size_t n, std::size_t* best_index, double* best_sqdist);

    double (*dot)(const double* a, const double* b, std::size_t n);

    /// c (m x n) = a (m x k) * b^T where b is n x k row-major; c[i][j] = a_i . b_j.
    /// accumulate adds into c instead of overwriting.
    void (*gemm_nt)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t n, std::size_t k, bool accumulate);

    /// c (m x n) = a (m x k) * b (k x n), all row-major.
    void (*gemm_nn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t n, std::size_t k, bool accumulate);

    /// c (m x n) = a^T * b with a (k x m) and b (k x n) row-major.
    void (*gemm_tn)(const double* a, const double* b, double* c,
                    std::size_t m, std::size_t n, std::size_t k, bool accumulate);

    /// y[i] += s * x[i]
    void (*axpy)(double s, const double* x, double* y, std::size_t n);
};

const Backend& scalar_backend();

/// True when the AVX2 variant is compiled in and the CPU supports it.
bool avx2_available();
const Backend& avx2_backend();

/// Backend selected at startup (or by the last successful set_active call).
const Backend& active();

/// Select "scalar", "avx2", or "auto". Returns false (and leaves the active
/// backend unchanged) if the name is unknown or unsupported on this host.
bool set_active(std::string_view name);

} // namespace pcreg::kernels
