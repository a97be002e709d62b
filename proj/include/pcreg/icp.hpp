#pragma once

#include <cstddef>
#include <vector>

#include "pcreg/cloud.hpp"
#include "pcreg/geom.hpp"

namespace pcreg {

struct IcpConfig {
    std::size_t max_iterations = 50;
    double convergence_tol = 1e-8; // change in mean squared correspondence distance
    // Correspondences farther than this are dropped; 0 disables the gate.
    double max_correspondence_distance = 0.0;
};

struct IcpResult {
    RigidTransform transform;
    std::size_t iterations = 0;   // kabsch steps taken
    double mean_sq_dist = 0.0;    // objective at the returned transform
    bool converged = false;
    bool degenerate = false;      // solve failed mid-run; transform is best-so-far
    std::vector<double> mse_trace; // objective before each step, then final
};

/// Least-squares rigid transform mapping src onto dst over given
/// correspondences (src[i] <-> dst[i]), optionally weighted. The SVD solution
/// carries a determinant sign correction, so the rotation is always proper
/// even for reflected inputs.
RigidTransform kabsch(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                      const std::vector<double>* weights = nullptr);

/// Point-to-point ICP from init: alternate nearest-neighbor correspondence
/// and kabsch until the objective change drops below tol or the iteration
/// cap. The objective (mean squared correspondence distance) never increases
/// while the gate is off.
IcpResult icp(const PointCloud& source, const PointCloud& target, const IcpConfig& cfg,
              const RigidTransform& init = RigidTransform::identity());

/// Refinement stage: ICP seeded with the agent's estimate.
RigidTransform refine_v2(const CloudPair& pair, const RigidTransform& agent_estimate,
                         const IcpConfig& cfg = {});

} // namespace pcreg
