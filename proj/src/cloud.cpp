#include "pcreg/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pcreg/errors.hpp"
#include "pcreg/kernels.hpp"

namespace pcreg {

Vec3 PointCloud::centroid() const {
    Vec3 s{};
    for (const Vec3& p : points) s += p;
    const double inv = 1.0 / static_cast<double>(points.size());
    return s * inv;
}

bool PointCloud::all_finite() const {
    for (const Vec3& p : points)
        if (!p.finite()) return false;
    return true;
}

PointCloud normalize_unit_sphere(const PointCloud& c) {
    if (c.points.empty()) throw ValidationError("normalize_unit_sphere: empty cloud");
    if (!c.all_finite()) throw ValidationError("normalize_unit_sphere: non-finite coordinate");

    const Vec3 mean = c.centroid();
    PointCloud out;
    out.points.reserve(c.size());
    double max_norm = 0.0;
    for (const Vec3& p : c.points) {
        const Vec3 q = p - mean;
        max_norm = std::max(max_norm, q.norm());
        out.points.push_back(q);
    }
    if (max_norm > 1e-12) {
        const double inv = 1.0 / max_norm;
        for (Vec3& p : out.points) p = p * inv;
    }
    return out;
}

PointCloud subsample(const PointCloud& c, std::size_t n, Rng& rng) {
    if (n == 0) throw ValidationError("subsample: n must be positive");
    if (n > c.size()) throw ValidationError("subsample: n exceeds cloud size");

    std::vector<std::size_t> idx(c.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates; the first n slots end up a uniform ordered draw.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + rng.below(c.size() - i);
        std::swap(idx[i], idx[j]);
    }
    PointCloud out;
    out.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(c.points[idx[i]]);
    return out;
}

PointCloud add_noise(const PointCloud& c, double sigma, double clip, Rng& rng) {
    if (!(sigma >= 0.0)) throw ValidationError("add_noise: sigma must be >= 0");
    if (!(clip >= 0.0)) throw ValidationError("add_noise: clip must be >= 0");
    if (sigma == 0.0) return c;

    PointCloud out;
    out.points.reserve(c.size());
    for (const Vec3& p : c.points) {
        const double dx = std::clamp(sigma * rng.normal(), -clip, clip);
        const double dy = std::clamp(sigma * rng.normal(), -clip, clip);
        const double dz = std::clamp(sigma * rng.normal(), -clip, clip);
        out.points.push_back({p.x + dx, p.y + dy, p.z + dz});
    }
    return out;
}

PointCloud crop_halfspace(const PointCloud& c, const Vec3& unit_normal, double retain_fraction) {
    if (!(retain_fraction > 0.0 && retain_fraction <= 1.0))
        throw ValidationError("crop: retain_fraction must lie in (0, 1]");
    const std::size_t keep = static_cast<std::size_t>(
        std::ceil(retain_fraction * static_cast<double>(c.size())));
    if (keep >= c.size()) return c;

    std::vector<std::size_t> order(c.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = c.points[a].dot(unit_normal);
        const double db = c.points[b].dot(unit_normal);
        if (da != db) return da > db;
        return a < b;
    });
    order.resize(keep);
    std::sort(order.begin(), order.end());

    PointCloud out;
    out.points.reserve(keep);
    for (std::size_t i : order) out.points.push_back(c.points[i]);
    return out;
}

PointCloud crop_plane(const PointCloud& c, double retain_fraction, Rng& rng) {
    if (!(retain_fraction > 0.0 && retain_fraction <= 1.0))
        throw ValidationError("crop_plane: retain_fraction must lie in (0, 1]");
    if (retain_fraction == 1.0) return c;

    Vec3 normal;
    double n = 0.0;
    do {
        normal = Vec3{rng.normal(), rng.normal(), rng.normal()};
        n = normal.norm();
    } while (n < 1e-12);
    return crop_halfspace(c, normal * (1.0 / n), retain_fraction);
}

PointCloud apply_transform(const PointCloud& c, const RigidTransform& t) {
    PointCloud out;
    out.points.resize(c.size());
    if (c.size() == 0) return out;
    const double tr[3] = {t.translation.x, t.translation.y, t.translation.z};
    kernels::active().transform_points(t.rotation.matrix().m.data(), tr, c.xyz(), out.xyz(),
                                       c.size());
    return out;
}

namespace {

PointCloud cap_points(const PointCloud& c, std::size_t cap, Rng& rng) {
    if (cap == 0 || c.size() <= cap) return c;
    return subsample(c, cap, rng);
}

PointCloud perturb_side(const PointCloud& sample, const PerturbationConfig& pcfg,
                        Rng noise_rng, Rng crop_rng, Rng cap_rng) {
    PointCloud side = add_noise(sample, pcfg.noise_sigma, pcfg.noise_clip, noise_rng);
    if (pcfg.cap_before_crop) {
        side = cap_points(side, pcfg.partial_cap, cap_rng);
        if (pcfg.crop_fraction < 1.0) side = crop_plane(side, pcfg.crop_fraction, crop_rng);
    } else {
        if (pcfg.crop_fraction < 1.0) side = crop_plane(side, pcfg.crop_fraction, crop_rng);
        side = cap_points(side, pcfg.partial_cap, cap_rng);
    }
    return side;
}

} // namespace

CloudPair make_pair(const PointCloud& shape, const TransformSampleConfig& tcfg,
                    const PerturbationConfig& pcfg) {
    Rng trng(tcfg.seed);
    return make_pair(shape, sample_transform(tcfg, trng), pcfg);
}

CloudPair make_pair(const PointCloud& shape, const RigidTransform& gt,
                    const PerturbationConfig& pcfg) {
    if (pcfg.n_points == 0) throw ValidationError("make_pair: n_points must be positive");
    if (!(pcfg.crop_fraction > 0.0 && pcfg.crop_fraction <= 1.0))
        throw ValidationError("make_pair: crop_fraction must lie in (0, 1]");

    const PointCloud normalized = normalize_unit_sphere(shape);
    if (pcfg.n_points > normalized.size())
        throw ValidationError("make_pair: shape smaller than requested sample count");

    // Stage streams: 0/1 subsample, 2/3 noise, 4/5 crop, 6/7 cap
    // (source/target respectively).
    const Rng prng(pcfg.seed);
    Rng src_sample_rng = prng.derive(0);
    Rng tgt_sample_rng = prng.derive(1);

    CloudPair pair;
    pair.gt = gt;

    if (!pcfg.independent_resample) {
        const PointCloud s = subsample(normalized, pcfg.n_points, src_sample_rng);
        pair.clean_source = s;
        pair.source = perturb_side(s, pcfg, prng.derive(2), prng.derive(4), prng.derive(6));
        const PointCloud tgt =
            perturb_side(s, pcfg, prng.derive(3), prng.derive(5), prng.derive(7));
        pair.target = apply_transform(tgt, gt);
        return pair;
    }

    const PointCloud s_src = subsample(normalized, pcfg.n_points, src_sample_rng);
    const PointCloud s_tgt = subsample(normalized, pcfg.n_points, tgt_sample_rng);
    pair.clean_source = s_src;
    pair.source = perturb_side(s_src, pcfg, prng.derive(2), prng.derive(4), prng.derive(6));
    const PointCloud tgt =
        perturb_side(s_tgt, pcfg, prng.derive(3), prng.derive(5), prng.derive(7));
    pair.target = apply_transform(tgt, gt);
    return pair;
}

ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "sphere") return ShapeKind::sphere;
    if (s == "box") return ShapeKind::box;
    if (s == "helix") return ShapeKind::helix;
    if (s == "torus") return ShapeKind::torus;
    throw ValidationError("unknown shape kind: " + s);
}

const char* to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::sphere: return "sphere";
        case ShapeKind::box: return "box";
        case ShapeKind::helix: return "helix";
        case ShapeKind::torus: return "torus";
    }
    return "?";
}

namespace {

Vec3 sample_sphere_point(Rng& rng) {
    Vec3 v;
    double n = 0.0;
    do {
        v = Vec3{rng.normal(), rng.normal(), rng.normal()};
        n = v.norm();
    } while (n < 1e-12);
    return v * (1.0 / n);
}

Vec3 sample_box_point(Rng& rng, double half) {
    // Six equal-area faces of [-half, half]^3.
    const std::uint64_t face = rng.below(6);
    const double u = rng.uniform(-half, half);
    const double v = rng.uniform(-half, half);
    const double s = (face % 2 == 0) ? half : -half;
    switch (face / 2) {
        case 0: return {s, u, v};
        case 1: return {u, s, v};
        default: return {u, v, s};
    }
}

Vec3 helix_point(double t01) {
    const double radius = 0.7, half_height = 0.6, turns = 2.0;
    const double a = turns * 2.0 * kPi * t01;
    return {radius * std::cos(a), radius * std::sin(a), half_height * (2.0 * t01 - 1.0)};
}

Vec3 sample_torus_point(Rng& rng) {
    const double big = 0.7, small = 0.25;
    const double v = rng.uniform(0.0, 2.0 * kPi);
    // Area density around the tube is proportional to big + small*cos(u).
    double u = 0.0;
    for (;;) {
        u = rng.uniform(0.0, 2.0 * kPi);
        if (rng.uniform01() * (big + small) <= big + small * std::cos(u)) break;
    }
    const double ring = big + small * std::cos(u);
    return {ring * std::cos(v), ring * std::sin(v), small * std::sin(u)};
}

} // namespace

PointCloud synth_shape(ShapeKind kind, std::size_t n, Rng& rng) {
    if (n == 0) throw ValidationError("synth_shape: n must be positive");
    PointCloud out;
    out.points.reserve(n);
    switch (kind) {
        case ShapeKind::sphere:
            for (std::size_t i = 0; i < n; ++i) out.points.push_back(sample_sphere_point(rng));
            break;
        case ShapeKind::box: {
            const double half = 1.0 / std::sqrt(3.0);
            for (std::size_t i = 0; i < n; ++i)
                out.points.push_back(sample_box_point(rng, half));
            break;
        }
        case ShapeKind::helix: {
            std::vector<double> ts(n);
            for (double& t : ts) t = rng.uniform01();
            std::sort(ts.begin(), ts.end());
            for (double t : ts) out.points.push_back(helix_point(t));
            break;
        }
        case ShapeKind::torus:
            for (std::size_t i = 0; i < n; ++i) out.points.push_back(sample_torus_point(rng));
            break;
    }
    return out;
}

} // namespace pcreg
