#include "pcreg/metrics.hpp"

#include "pcreg/errors.hpp"
#include "pcreg/neighbors.hpp"

namespace pcreg {

double rot_error_iso(const RotationMatrix& est, const RotationMatrix& gt) {
    return rad_to_deg(rotation_distance(est, gt));
}

double trans_error(const Vec3& est, const Vec3& gt) { return (est - gt).norm(); }

double clean_l2(const CloudPair& pair, const RigidTransform& est) {
    if (pair.clean_source.points.empty())
        throw ValidationError("clean_l2: pair carries no clean source cloud");
    double sum = 0.0;
    for (const Vec3& p : pair.clean_source.points)
        sum += (est.apply(p) - pair.gt.apply(p)).norm();
    return sum / static_cast<double>(pair.clean_source.size());
}

namespace {

double mean_min_sqdist(const PointCloud& from, const NearestNeighborIndex& to) {
    double sum = 0.0;
    for (const Vec3& p : from.points) {
        double d2 = 0.0;
        to.nearest(p, &d2);
        sum += d2;
    }
    return sum / static_cast<double>(from.size());
}

} // namespace

double modified_chamfer(const CloudPair& pair, const RigidTransform& est, bool plain) {
    if (pair.source.points.empty() || pair.target.points.empty())
        throw ValidationError("modified_chamfer: empty observed cloud");
    const PointCloud x = apply_transform(pair.source, est);
    const PointCloud& y = pair.target;

    if (plain) {
        const NearestNeighborIndex to_y(y), to_x(x);
        return mean_min_sqdist(x, to_y) + mean_min_sqdist(y, to_x);
    }

    if (pair.clean_source.points.empty())
        throw ValidationError("modified_chamfer: pair carries no clean source cloud");
    const PointCloud y_clean = apply_transform(pair.clean_source, pair.gt);
    const PointCloud x_clean = apply_transform(pair.clean_source, est);
    const NearestNeighborIndex to_y_clean(y_clean), to_x_clean(x_clean);
    return mean_min_sqdist(x, to_y_clean) + mean_min_sqdist(y, to_x_clean);
}

EvalReport evaluate(const CloudPair& pair, const RigidTransform& est, bool plain_chamfer) {
    EvalReport r;
    r.rot_err_deg = rot_error_iso(est.rotation, pair.gt.rotation);
    r.trans_err = trans_error(est.translation, pair.gt.translation);
    r.clean_l2 = clean_l2(pair, est);
    r.mcd = modified_chamfer(pair, est, plain_chamfer);
    return r;
}

} // namespace pcreg
