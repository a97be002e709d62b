#include "pcreg/rotsample.hpp"

#include <algorithm>
#include <cmath>

#include "pcreg/errors.hpp"

namespace pcreg {

namespace {

void check_cap(double cap, const char* what) {
    if (!(cap >= 0.0 && cap <= kPi))
        throw ValidationError(std::string(what) + ": cap must lie in [0, pi]");
}

} // namespace

SampleMethod sample_method_from_string(const std::string& s) {
    if (s == "haar") return SampleMethod::haar;
    if (s == "naive_euler") return SampleMethod::naive_euler;
    throw ValidationError("unknown sample method: " + s);
}

const char* to_string(SampleMethod m) {
    return m == SampleMethod::haar ? "haar" : "naive_euler";
}

double haar_angle_cdf(double angle, double max_angle) {
    check_cap(max_angle, "haar_angle_cdf");
    if (angle <= 0.0) return 0.0;
    if (angle >= max_angle) return 1.0;
    return (angle - std::sin(angle)) / (max_angle - std::sin(max_angle));
}

double haar_angle_quantile(double u, double max_angle) {
    check_cap(max_angle, "haar_angle_quantile");
    if (!(u >= 0.0 && u <= 1.0))
        throw ValidationError("haar_angle_quantile: u outside [0, 1]");
    if (max_angle == 0.0) return 0.0;

    const double mass = max_angle - std::sin(max_angle);
    const double target = u * mass;
    double lo = 0.0, hi = max_angle;
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (mid - std::sin(mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

RotationMatrix sample_rotation_haar(Rng& rng, double max_angle) {
    check_cap(max_angle, "sample_rotation_haar");
    if (max_angle == 0.0) return RotationMatrix::identity();

    Vec3 axis;
    double n = 0.0;
    do {
        axis = Vec3{rng.normal(), rng.normal(), rng.normal()};
        n = axis.norm();
    } while (n < 1e-12);
    axis = axis * (1.0 / n);

    const double angle = haar_angle_quantile(rng.uniform01(), max_angle);
    return rotation_from_axis_angle_unchecked(axis, angle);
}

RotationMatrix sample_rotation_naive(Rng& rng, double max_euler) {
    check_cap(max_euler, "sample_rotation_naive");
    if (max_euler == 0.0) return RotationMatrix::identity();

    const double az = rng.uniform(-max_euler, max_euler);
    const double ay = rng.uniform(-max_euler, max_euler);
    const double ax = rng.uniform(-max_euler, max_euler);
    return rot_z(az) * rot_y(ay) * rot_x(ax);
}

Vec3 sample_translation(Rng& rng, double max_component) {
    if (!(max_component >= 0.0) || !std::isfinite(max_component))
        throw ValidationError("sample_translation: negative or non-finite bound");
    if (max_component == 0.0) return Vec3{};
    return Vec3{rng.uniform(-max_component, max_component),
                rng.uniform(-max_component, max_component),
                rng.uniform(-max_component, max_component)};
}

RigidTransform sample_transform(const TransformSampleConfig& cfg, Rng& rng) {
    const RotationMatrix r = cfg.method == SampleMethod::haar
                                 ? sample_rotation_haar(rng, cfg.max_angle)
                                 : sample_rotation_naive(rng, cfg.max_angle);
    return RigidTransform{r, sample_translation(rng, cfg.max_translation)};
}

double haar_angle_ks_statistic(std::vector<double> angles, double max_angle) {
    if (angles.empty()) throw ValidationError("haar_angle_ks_statistic: no samples");
    std::sort(angles.begin(), angles.end());
    const double n = static_cast<double>(angles.size());
    double d = 0.0;
    for (std::size_t i = 0; i < angles.size(); ++i) {
        const double f = haar_angle_cdf(angles[i], max_angle);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    }
    return d;
}

double two_sample_ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ValidationError("two_sample_ks_statistic: no samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

} // namespace pcreg
