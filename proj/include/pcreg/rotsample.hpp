#pragma once

#include <string>
#include <vector>

#include "pcreg/geom.hpp"
#include "pcreg/rng.hpp"

namespace pcreg {

enum class SampleMethod { haar, naive_euler };

SampleMethod sample_method_from_string(const std::string& s);
const char* to_string(SampleMethod m);

struct TransformSampleConfig {
    SampleMethod method = SampleMethod::haar;
    double max_angle = 0.0;       // radians; axis-angle cap (haar) or per-Euler-axis cap
    double max_translation = 0.0; // per-axis bound, model units
    std::uint64_t seed = 0;
};

/// CDF of the rotation angle under the rotation-invariant measure truncated
/// to [0, max_angle]: F(t) = (t - sin t) / (max_angle - sin max_angle).
double haar_angle_cdf(double angle, double max_angle);

/// Inverse CDF, solved by bisection to 1e-12 (no closed form exists).
double haar_angle_quantile(double u, double max_angle);

/// Rotation distributed per the invariant (Haar) measure conditioned on
/// angle <= max_angle: axis from a normalized 3-component standard Gaussian,
/// angle from density proportional to (1 - cos t) on [0, max_angle].
/// max_angle must lie in [0, pi]; a zero cap degenerates to the identity.
RotationMatrix sample_rotation_haar(Rng& rng, double max_angle);

/// Deliberately biased baseline: Euler angles each uniform in
/// [-max_euler, +max_euler], composed as Rz * Ry * Rx (draw order z, y, x).
/// Same cap domain as the haar sampler.
RotationMatrix sample_rotation_naive(Rng& rng, double max_euler);

/// Components i.i.d. uniform in [-max_component, +max_component].
Vec3 sample_translation(Rng& rng, double max_component);

/// Rotation per cfg.method then translation; rotation draws come first so
/// the stream layout is pinned.
RigidTransform sample_transform(const TransformSampleConfig& cfg, Rng& rng);

/// Sup-norm gap between the empirical CDF of the given angles and the
/// analytic truncated-Haar CDF. Angles outside [0, max_angle] count as full
/// CDF violations.
double haar_angle_ks_statistic(std::vector<double> angles, double max_angle);

/// Two-sample Kolmogorov-Smirnov statistic.
double two_sample_ks_statistic(std::vector<double> a, std::vector<double> b);

} // namespace pcreg
