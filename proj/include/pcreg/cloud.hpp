#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcreg/geom.hpp"
#include "pcreg/rng.hpp"
#include "pcreg/rotsample.hpp"

namespace pcreg {

static_assert(sizeof(Vec3) == 3 * sizeof(double), "Vec3 must be three packed doubles");

/// Ordered point set. Ops below treat clouds as immutable values.
struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const { return points.size(); }

    /// Contiguous x0 y0 z0 x1 y1 z1 ... view for the kernels.
    const double* xyz() const { return reinterpret_cast<const double*>(points.data()); }
    double* xyz() { return reinterpret_cast<double*>(points.data()); }

    Vec3 centroid() const;
    bool all_finite() const;
};

struct CloudPair {
    PointCloud source;       // observed, possibly noisy / cropped, source frame
    PointCloud target;       // observed, gt applied
    PointCloud clean_source; // complete, noiseless, pre-transform
    RigidTransform gt;
};

/// Perturbation pipeline settings. Stages run per side in the order
/// subsample, noise, crop, cap (cap_before_crop swaps the last two); each
/// stage draws from its own stream derived from seed, so disabling one
/// stage never shifts another's randomness.
struct PerturbationConfig {
    std::size_t n_points = 1024;
    double noise_sigma = 0.0;
    double noise_clip = 0.0;
    bool independent_resample = false;
    double crop_fraction = 1.0;  // in (0, 1]; 1 disables the crop
    std::size_t partial_cap = 0; // uniform downsample to this count when larger; 0 disables
    bool cap_before_crop = false;
    std::uint64_t seed = 0;
};

/// Center at the origin and scale so the farthest point sits on the unit
/// sphere. An all-identical cloud is centered and left unscaled.
PointCloud normalize_unit_sphere(const PointCloud& c);

/// n points uniformly without replacement, order randomized.
PointCloud subsample(const PointCloud& c, std::size_t n, Rng& rng);

/// Adds an independent Gaussian draw of standard deviation sigma to every
/// coordinate, clamping each perturbation to [-clip, +clip]. Draw order is
/// x, y, z per point. sigma = 0 copies the cloud without consuming draws.
PointCloud add_noise(const PointCloud& c, double sigma, double clip, Rng& rng);

/// Keeps the ceil(retain_fraction * count) points with the largest dot
/// product against a random unit normal, original order preserved, ties
/// broken toward the lower index.
PointCloud crop_plane(const PointCloud& c, double retain_fraction, Rng& rng);

/// Deterministic core of crop_plane for a caller-chosen normal.
PointCloud crop_halfspace(const PointCloud& c, const Vec3& unit_normal, double retain_fraction);

/// R p + t per point, order preserved. Runs on the active kernel backend.
PointCloud apply_transform(const PointCloud& c, const RigidTransform& t);

/// Draws gt from tcfg and builds observed source / target clouds per pcfg.
/// With independent_resample unset the two sides share one subsample and
/// target == gt(source) exactly when no other stage is enabled; when set,
/// each side gets its own subsample and its own noise / crop draws, and the
/// target side is perturbed first, then transformed. clean_source is always
/// the source-side subsample before noise / crop / cap.
CloudPair make_pair(const PointCloud& shape, const TransformSampleConfig& tcfg,
                    const PerturbationConfig& pcfg);

/// Same pair construction with a caller-supplied ground-truth transform.
CloudPair make_pair(const PointCloud& shape, const RigidTransform& gt,
                    const PerturbationConfig& pcfg);

enum class ShapeKind { sphere, box, helix, torus };

ShapeKind shape_kind_from_string(const std::string& s);
const char* to_string(ShapeKind k);

/// n samples of the named analytic surface. The shapes are centered and
/// sized to fit the unit sphere by construction: sphere radius 1, box
/// [-a, a]^3 with a = 1/sqrt(3), helix of radius 0.7 and half-height 0.6
/// (points ordered by increasing parameter), torus with radii 0.7 / 0.25
/// (area-uniform via tube-angle rejection).
PointCloud synth_shape(ShapeKind kind, std::size_t n, Rng& rng);

} // namespace pcreg
