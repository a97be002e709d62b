#pragma once

#include "pcreg/cloud.hpp"
#include "pcreg/geom.hpp"

namespace pcreg {

struct EvalReport {
    double rot_err_deg = 0.0;
    double trans_err = 0.0;
    double clean_l2 = 0.0;
    double mcd = 0.0;
};

/// Geodesic angle between the two rotations, in degrees.
double rot_error_iso(const RotationMatrix& est, const RotationMatrix& gt);

double trans_error(const Vec3& est, const Vec3& gt);

/// Mean per-point gap between est and gt applied to the clean complete
/// source: (1/N) sum ||est(p) - gt(p)||.
double clean_l2(const CloudPair& pair, const RigidTransform& est);

/// Symmetric squared-nearest-neighbor distance with the observed clouds
/// measured against clean complete counterparts:
///   (1/|X|) sum_x min_{y in Yc} ||x-y||^2 + (1/|Y|) sum_y min_{x in Xc} ||y-x||^2
/// where X = est(observed source), Y = observed target, Yc = gt(clean_source)
/// and Xc = est(clean_source). plain = true instead measures the observed
/// clouds against each other (ordinary symmetric Chamfer).
double modified_chamfer(const CloudPair& pair, const RigidTransform& est, bool plain = false);

EvalReport evaluate(const CloudPair& pair, const RigidTransform& est,
                    bool plain_chamfer = false);

} // namespace pcreg
