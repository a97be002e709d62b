#pragma once

#include <cstddef>
#include <vector>

#include "pcreg/cloud.hpp"

namespace pcreg {

/// Nearest-neighbor search over a fixed reference cloud. References of more
/// than 512 points get a voxel grid, smaller ones a brute scan; both paths
/// run the same per-point arithmetic and the same (distance, index)
/// tie-break, so they agree exactly, which the tests assert.
class NearestNeighborIndex {
public:
    explicit NearestNeighborIndex(const PointCloud& reference);
    NearestNeighborIndex(const PointCloud& reference, bool force_brute);

    /// Index of the nearest reference point; equidistant ties resolve to the
    /// lowest index.
    std::size_t nearest(const Vec3& q, double* sqdist = nullptr) const;

    std::vector<std::size_t> nearest(const PointCloud& queries) const;

    bool uses_grid() const { return grid_; }
    std::size_t size() const { return xs_.size(); }

private:
    void build_grid();
    std::size_t nearest_brute(const Vec3& q, double* sqdist) const;
    std::size_t nearest_grid(const Vec3& q, double* sqdist) const;

    // Reference coordinates, original order (brute) and bucketed (grid).
    std::vector<double> xs_, ys_, zs_;
    bool grid_ = false;

    std::vector<double> bx_, by_, bz_;    // bucketed coordinates, CSR by cell
    std::vector<std::size_t> bidx_;       // bucketed original indices
    std::vector<std::size_t> cell_start_; // size nx*ny*nz + 1
    double h_ = 1.0;                      // cell edge
    Vec3 origin_{};
    std::size_t nx_ = 1, ny_ = 1, nz_ = 1;
};

/// Convenience wrapper matching the correspondence step of ICP.
std::vector<std::size_t> nearest_neighbors(const PointCloud& queries,
                                           const PointCloud& reference);

} // namespace pcreg
