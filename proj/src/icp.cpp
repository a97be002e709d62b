#include "pcreg/icp.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "pcreg/errors.hpp"
#include "pcreg/neighbors.hpp"

namespace pcreg {

RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                      const std::vector<double>* weights) {
    const std::size_t n = src.size();
    if (dst.size() != n) throw ValidationError("kabsch: correspondence size mismatch");
    if (weights && weights->size() != n) throw ValidationError("kabsch: weight size mismatch");
    if (n < 3) throw DegenerateInputError("kabsch: fewer than 3 correspondences");

    double wsum = 0.0;
    Vec3 cs{}, cd{};
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        if (w < 0.0) throw ValidationError("kabsch: negative weight");
        wsum += w;
        cs += src[i] * w;
        cd += dst[i] * w;
    }
    if (!(wsum > 0.0)) throw DegenerateInputError("kabsch: zero total weight");
    cs = cs * (1.0 / wsum);
    cd = cd * (1.0 / wsum);

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        const Vec3 p = src[i] - cs, q = dst[i] - cd;
        h(0, 0) += w * p.x * q.x; h(0, 1) += w * p.x * q.y; h(0, 2) += w * p.x * q.z;
        h(1, 0) += w * p.y * q.x; h(1, 1) += w * p.y * q.y; h(1, 2) += w * p.y * q.z;
        h(2, 0) += w * p.z * q.x; h(2, 1) += w * p.z * q.y; h(2, 2) += w * p.z * q.z;
    }

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d sv = svd.singularValues();
    // The rotation is only determined when at least two directions carry
    // signal; collinear or coincident correspondence sets do not qualify.
    if (!(sv(1) > sv(0) * 1e-12))
        throw DegenerateInputError("kabsch: rank-deficient covariance");

    Eigen::Matrix3d r = svd.matrixV() * svd.matrixU().transpose();
    if (r.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixV() * flip * svd.matrixU().transpose();
    }

    Mat3 m;
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) m(row, col) = r(row, col);
    RigidTransform out;
    out.rotation = reorthonormalize(m);
    out.translation = cd - out.rotation * cs;
    return out;
}

IcpResult icp(const PointCloud& source, const PointCloud& target, const IcpConfig& cfg,
              const RigidTransform& init) {
    if (source.points.empty() || target.points.empty())
        throw ValidationError("icp: empty cloud");
    if (cfg.max_iterations == 0) throw ValidationError("icp: zero iteration cap");
    if (!(cfg.convergence_tol > 0.0)) throw ValidationError("icp: non-positive tolerance");
    if (cfg.max_correspondence_distance < 0.0)
        throw ValidationError("icp: negative correspondence gate");

    const NearestNeighborIndex index(target);
    const double gate_sq = cfg.max_correspondence_distance > 0.0
                               ? cfg.max_correspondence_distance * cfg.max_correspondence_distance
                               : std::numeric_limits<double>::infinity();

    IcpResult result;
    result.transform = init;
    double prev_mse = std::numeric_limits<double>::infinity();

    std::vector<Vec3> kept_src, kept_dst;
    for (std::size_t iter = 0; iter < cfg.max_iterations; ++iter) {
        const PointCloud moved = apply_transform(source, result.transform);
        kept_src.clear();
        kept_dst.clear();
        double sq_sum = 0.0;
        for (std::size_t i = 0; i < moved.size(); ++i) {
            double d2 = 0.0;
            const std::size_t j = index.nearest(moved.points[i], &d2);
            if (d2 > gate_sq) continue;
            // Solve in the source frame so each step replaces, rather than
            // stacks onto, the current estimate's round-off.
            kept_src.push_back(source.points[i]);
            kept_dst.push_back(target.points[j]);
            sq_sum += d2;
        }
        if (kept_src.empty()) {
            result.degenerate = true;
            return result;
        }
        const double mse = sq_sum / static_cast<double>(kept_src.size());
        result.mse_trace.push_back(mse);
        result.mean_sq_dist = mse;
        if (mse == 0.0 || std::abs(prev_mse - mse) < cfg.convergence_tol) {
            result.converged = true;
            return result;
        }
        prev_mse = mse;

        try {
            result.transform = kabsch(kept_src, kept_dst);
        } catch (const DegenerateInputError&) {
            result.degenerate = true;
            return result;
        }
        ++result.iterations;
    }

    // Cap reached: report the objective at the final transform.
    const PointCloud moved = apply_transform(source, result.transform);
    double sq_sum = 0.0;
    std::size_t kept = 0;
    for (const Vec3& p : moved.points) {
        double d2 = 0.0;
        index.nearest(p, &d2);
        if (d2 > gate_sq) continue;
        sq_sum += d2;
        ++kept;
    }
    if (kept > 0) {
        result.mean_sq_dist = sq_sum / static_cast<double>(kept);
        result.mse_trace.push_back(result.mean_sq_dist);
    }
    return result;
}

RigidTransform refine_v2(const CloudPair& pair, const RigidTransform& agent_estimate,
                         const IcpConfig& cfg) {
    return icp(pair.source, pair.target, cfg, agent_estimate).transform;
}

} // namespace pcreg
