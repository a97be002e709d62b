#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "pcreg/kernels.hpp"
#include "pcreg/rng.hpp"

using namespace pcreg;
using kernels::Backend;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// An orthonormal-ish matrix is not needed; the kernels are linear algebra on
// arbitrary reals.
std::vector<double> random_matrix9(Rng& rng) { return random_vec(rng, 9); }

} // namespace

TEST_CASE("transform_points matches direct arithmetic") {
    Rng rng(42);
    const auto r = random_matrix9(rng);
    const auto t = random_vec(rng, 3);
    const std::size_t n = 37;
    const auto in = random_vec(rng, 3 * n);
    std::vector<double> out(3 * n);

    kernels::scalar_backend().transform_points(r.data(), t.data(), in.data(), out.data(), n);

    for (std::size_t i = 0; i < n; ++i) {
        const double x = in[3 * i], y = in[3 * i + 1], z = in[3 * i + 2];
        CHECK(out[3 * i + 0] == ((r[0] * x + r[1] * y) + r[2] * z) + t[0]);
        CHECK(out[3 * i + 1] == ((r[3] * x + r[4] * y) + r[5] * z) + t[1]);
        CHECK(out[3 * i + 2] == ((r[6] * x + r[7] * y) + r[8] * z) + t[2]);
    }
}

TEST_CASE("nearest_point finds the true minimum and breaks ties low") {
    Rng rng(7);
    const std::size_t n = 101;
    auto xs = random_vec(rng, n), ys = random_vec(rng, n), zs = random_vec(rng, n);
    // Plant an exact duplicate pair; the lower index must win.
    xs[60] = xs[13];
    ys[60] = ys[13];
    zs[60] = zs[13];
    const double qx = xs[13] + 1e-12, qy = ys[13], qz = zs[13];

    std::size_t idx = 0;
    double d2 = 0.0;
    kernels::scalar_backend().nearest_point(qx, qy, qz, xs.data(), ys.data(), zs.data(), n,
                                            &idx, &d2);

    std::size_t want = 0;
    double best = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = qx - xs[i], dy = qy - ys[i], dz = qz - zs[i];
        const double d = (dx * dx + dy * dy) + dz * dz;
        if (d < best) {
            best = d;
            want = i;
        }
    }
    CHECK(idx == want);
    CHECK(idx == 13);
    CHECK(d2 == best);
}

TEST_CASE("gemm variants match a naive reference") {
    Rng rng(11);
    const std::size_t m = 9, n = 13, k = 21;
    const auto a_mk = random_vec(rng, m * k);
    const auto b_nk = random_vec(rng, n * k);
    const auto b_kn = random_vec(rng, k * n);
    const auto a_km = random_vec(rng, k * m);
    const Backend& s = kernels::scalar_backend();

    std::vector<double> c(m * n), want(m * n);

    SUBCASE("nt") {
        s.gemm_nt(a_mk.data(), b_nk.data(), c.data(), m, n, k, false);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < k; ++l) acc += a_mk[i * k + l] * b_nk[j * k + l];
                want[i * n + j] = acc;
            }
        CHECK(bit_equal(c, want));
    }
    SUBCASE("nn") {
        s.gemm_nn(a_mk.data(), b_kn.data(), c.data(), m, n, k, false);
        std::fill(want.begin(), want.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l)
                for (std::size_t j = 0; j < n; ++j)
                    want[i * n + j] += a_mk[i * k + l] * b_kn[l * n + j];
        CHECK(bit_equal(c, want));
    }
    SUBCASE("tn") {
        s.gemm_tn(a_km.data(), b_kn.data(), c.data(), m, n, k, false);
        std::fill(want.begin(), want.end(), 0.0);
        for (std::size_t l = 0; l < k; ++l)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    want[i * n + j] += a_km[l * m + i] * b_kn[l * n + j];
        CHECK(bit_equal(c, want));
    }
    SUBCASE("accumulate adds into c") {
        auto base = random_vec(rng, m * n);
        c = base;
        s.gemm_nt(a_mk.data(), b_nk.data(), c.data(), m, n, k, true);
        std::vector<double> fresh(m * n);
        s.gemm_nt(a_mk.data(), b_nk.data(), fresh.data(), m, n, k, false);
        for (std::size_t i = 0; i < m * n; ++i) CHECK(c[i] == base[i] + fresh[i]);
    }
}

TEST_CASE("axpy and dot reference behavior") {
    Rng rng(3);
    const std::size_t n = 257;
    const auto x = random_vec(rng, n);
    auto y = random_vec(rng, n);
    const auto y0 = y;
    const Backend& s = kernels::scalar_backend();

    s.axpy(0.75, x.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == y0[i] + 0.75 * x[i]);

    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y0[i];
    CHECK(s.dot(x.data(), y0.data(), n) == acc);
}

TEST_CASE("avx2 backend matches scalar") {
    if (!kernels::avx2_available()) {
        MESSAGE("avx2 not available on this host; skipping");
        return;
    }
    const Backend& s = kernels::scalar_backend();
    const Backend& v = kernels::avx2_backend();
    Rng rng(99);

    // Sizes straddle the vector width so remainder lanes get exercised.
    for (std::size_t n : {1u, 3u, 4u, 7u, 64u, 129u}) {
        const auto r = random_matrix9(rng);
        const auto t = random_vec(rng, 3);
        const auto in = random_vec(rng, 3 * n);
        std::vector<double> out_s(3 * n), out_v(3 * n);
        s.transform_points(r.data(), t.data(), in.data(), out_s.data(), n);
        v.transform_points(r.data(), t.data(), in.data(), out_v.data(), n);
        CHECK(bit_equal(out_s, out_v));

        auto xs = random_vec(rng, n), ys = random_vec(rng, n), zs = random_vec(rng, n);
        if (n >= 4) {
            xs[n - 1] = xs[0];
            ys[n - 1] = ys[0];
            zs[n - 1] = zs[0];
        }
        std::size_t is = 0, iv = 0;
        double ds = 0.0, dv = 0.0;
        s.nearest_point(0.1, -0.2, 0.3, xs.data(), ys.data(), zs.data(), n, &is, &ds);
        v.nearest_point(0.1, -0.2, 0.3, xs.data(), ys.data(), zs.data(), n, &iv, &dv);
        CHECK(is == iv);
        CHECK(ds == dv);

        const auto xv = random_vec(rng, n);
        auto ys_ = random_vec(rng, n);
        auto yv_ = ys_;
        s.axpy(-1.25, xv.data(), ys_.data(), n);
        v.axpy(-1.25, xv.data(), yv_.data(), n);
        CHECK(bit_equal(ys_, yv_));

        // Reductions only agree up to rounding.
        const double dots = s.dot(xv.data(), ys_.data(), n);
        const double dotv = v.dot(xv.data(), yv_.data(), n);
        CHECK(dots == doctest::Approx(dotv).epsilon(1e-13));
    }

    for (auto [m, n, k] : {std::array<std::size_t, 3>{5, 7, 9},
                           std::array<std::size_t, 3>{1, 1, 1},
                           std::array<std::size_t, 3>{16, 16, 16},
                           std::array<std::size_t, 3>{3, 11, 2}}) {
        const auto a = random_vec(rng, m * k);
        const auto b_nk = random_vec(rng, n * k);
        const auto b_kn = random_vec(rng, k * n);
        const auto a_km = random_vec(rng, k * m);
        std::vector<double> cs(m * n), cv(m * n);

        s.gemm_nn(a.data(), b_kn.data(), cs.data(), m, n, k, false);
        v.gemm_nn(a.data(), b_kn.data(), cv.data(), m, n, k, false);
        CHECK(bit_equal(cs, cv));

        s.gemm_tn(a_km.data(), b_kn.data(), cs.data(), m, n, k, false);
        v.gemm_tn(a_km.data(), b_kn.data(), cv.data(), m, n, k, false);
        CHECK(bit_equal(cs, cv));

        s.gemm_nt(a.data(), b_nk.data(), cs.data(), m, n, k, false);
        v.gemm_nt(a.data(), b_nk.data(), cv.data(), m, n, k, false);
        for (std::size_t i = 0; i < m * n; ++i)
            CHECK(cs[i] == doctest::Approx(cv[i]).epsilon(1e-13));
    }
}

TEST_CASE("backend selection") {
    const char* before = kernels::active().name;

    CHECK(kernels::set_active("scalar"));
    CHECK(std::string_view(kernels::active().name) == "scalar");
    CHECK_FALSE(kernels::set_active("bogus"));
    CHECK(std::string_view(kernels::active().name) == "scalar");
    if (kernels::avx2_available()) {
        CHECK(kernels::set_active("avx2"));
        CHECK(std::string_view(kernels::active().name) == "avx2");
    } else {
        CHECK_FALSE(kernels::set_active("avx2"));
    }
    CHECK(kernels::set_active("auto"));

    kernels::set_active(before);
}
