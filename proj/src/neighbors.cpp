#include "pcreg/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "pcreg/errors.hpp"
#include "pcreg/kernels.hpp"

namespace pcreg {

namespace {
constexpr std::size_t kBruteLimit = 512;
}

NearestNeighborIndex::NearestNeighborIndex(const PointCloud& reference)
    : NearestNeighborIndex(reference, reference.size() <= kBruteLimit) {}

NearestNeighborIndex::NearestNeighborIndex(const PointCloud& reference, bool force_brute) {
    if (reference.points.empty())
        throw ValidationError("NearestNeighborIndex: empty reference cloud");
    const std::size_t n = reference.size();
    xs_.resize(n);
    ys_.resize(n);
    zs_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs_[i] = reference.points[i].x;
        ys_[i] = reference.points[i].y;
        zs_[i] = reference.points[i].z;
    }
    grid_ = !force_brute;
    if (grid_) build_grid();
}

void NearestNeighborIndex::build_grid() {
    const std::size_t n = xs_.size();
    Vec3 lo{xs_[0], ys_[0], zs_[0]}, hi = lo;
    for (std::size_t i = 1; i < n; ++i) {
        lo.x = std::min(lo.x, xs_[i]);
        lo.y = std::min(lo.y, ys_[i]);
        lo.z = std::min(lo.z, zs_[i]);
        hi.x = std::max(hi.x, xs_[i]);
        hi.y = std::max(hi.y, ys_[i]);
        hi.z = std::max(hi.z, zs_[i]);
    }
    origin_ = lo;
    const Vec3 extent = hi - lo;
    const double volume = std::max(extent.x, 1e-9) * std::max(extent.y, 1e-9) *
                          std::max(extent.z, 1e-9);
    // Aim for a handful of points per cell; degenerate (flat) extents would
    // explode the cell count, so grow h until the grid stays proportional.
    h_ = std::max(std::cbrt(volume * 4.0 / static_cast<double>(n)), 1e-9);
    for (;;) {
        nx_ = static_cast<std::size_t>(extent.x / h_) + 1;
        ny_ = static_cast<std::size_t>(extent.y / h_) + 1;
        nz_ = static_cast<std::size_t>(extent.z / h_) + 1;
        if (nx_ * ny_ * nz_ <= 8 * n) break;
        h_ *= 2.0;
    }

    auto cell_of = [&](std::size_t i) {
        const std::size_t cx = std::min(static_cast<std::size_t>((xs_[i] - origin_.x) / h_),
                                        nx_ - 1);
        const std::size_t cy = std::min(static_cast<std::size_t>((ys_[i] - origin_.y) / h_),
                                        ny_ - 1);
        const std::size_t cz = std::min(static_cast<std::size_t>((zs_[i] - origin_.z) / h_),
                                        nz_ - 1);
        return (cx * ny_ + cy) * nz_ + cz;
    };

    const std::size_t cells = nx_ * ny_ * nz_;
    cell_start_.assign(cells + 1, 0);
    for (std::size_t i = 0; i < n; ++i) ++cell_start_[cell_of(i) + 1];
    for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];

    bx_.resize(n);
    by_.resize(n);
    bz_.resize(n);
    bidx_.resize(n);
    std::vector<std::size_t> cursor(cell_start_.begin(), cell_start_.end() - 1);
    // Ascending i keeps each bucket sorted by original index, which makes the
    // per-bucket lowest-position tie-break equal to lowest-original-index.
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = cursor[cell_of(i)]++;
        bx_[at] = xs_[i];
        by_[at] = ys_[i];
        bz_[at] = zs_[i];
        bidx_[at] = i;
    }
}

std::size_t NearestNeighborIndex::nearest_brute(const Vec3& q, double* sqdist) const {
    std::size_t idx = 0;
    double d2 = 0.0;
    kernels::active().nearest_point(q.x, q.y, q.z, xs_.data(), ys_.data(), zs_.data(),
                                    xs_.size(), &idx, &d2);
    if (sqdist) *sqdist = d2;
    return idx;
}

std::size_t NearestNeighborIndex::nearest_grid(const Vec3& q, double* sqdist) const {
    const auto clamp_cell = [](double v, std::size_t n) {
        if (v < 0.0) return std::size_t{0};
        const std::size_t c = static_cast<std::size_t>(v);
        return std::min(c, n - 1);
    };
    const std::size_t qx = clamp_cell((q.x - origin_.x) / h_, nx_);
    const std::size_t qy = clamp_cell((q.y - origin_.y) / h_, ny_);
    const std::size_t qz = clamp_cell((q.z - origin_.z) / h_, nz_);

    const std::size_t max_shell =
        std::max({nx_, ny_, nz_});

    std::size_t best_idx = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    bool found = false;

    const auto scan_cell = [&](std::size_t cx, std::size_t cy, std::size_t cz) {
        const std::size_t cell = (cx * ny_ + cy) * nz_ + cz;
        const std::size_t a = cell_start_[cell], b = cell_start_[cell + 1];
        if (a == b) return;
        std::size_t pos = 0;
        double d2 = 0.0;
        kernels::active().nearest_point(q.x, q.y, q.z, bx_.data() + a, by_.data() + a,
                                        bz_.data() + a, b - a, &pos, &d2);
        const std::size_t idx = bidx_[a + pos];
        if (!found || d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
            found = true;
            best_d2 = d2;
            best_idx = idx;
        }
    };

    for (std::size_t shell = 0;; ++shell) {
        // Points in shells beyond this one are at least (shell - 1) * h away;
        // keep scanning until that provably exceeds the best squared distance
        // (conservatively shrunk) so exact ties are all seen and the
        // lowest-index rule can settle them.
        if (found && shell >= 2) {
            const double bound = (static_cast<double>(shell) - 1.0) * h_;
            if (bound * bound * (1.0 - 1e-12) > best_d2) break;
        }
        if (shell > max_shell) break;

        const long s = static_cast<long>(shell);
        const long cxq = static_cast<long>(qx), cyq = static_cast<long>(qy),
                   czq = static_cast<long>(qz);
        for (long dx = -s; dx <= s; ++dx) {
            const long cx = cxq + dx;
            if (cx < 0 || cx >= static_cast<long>(nx_)) continue;
            for (long dy = -s; dy <= s; ++dy) {
                const long cy = cyq + dy;
                if (cy < 0 || cy >= static_cast<long>(ny_)) continue;
                const bool face = std::labs(dx) == s || std::labs(dy) == s;
                for (long dz = -s; dz <= s; ++dz) {
                    if (!face && std::labs(dz) != s) continue;
                    const long cz = czq + dz;
                    if (cz < 0 || cz >= static_cast<long>(nz_)) continue;
                    scan_cell(static_cast<std::size_t>(cx), static_cast<std::size_t>(cy),
                              static_cast<std::size_t>(cz));
                }
            }
        }
    }

    if (sqdist) *sqdist = best_d2;
    return best_idx;
}

std::size_t NearestNeighborIndex::nearest(const Vec3& q, double* sqdist) const {
    return grid_ ? nearest_grid(q, sqdist) : nearest_brute(q, sqdist);
}

std::vector<std::size_t> NearestNeighborIndex::nearest(const PointCloud& queries) const {
    std::vector<std::size_t> out;
    out.reserve(queries.size());
    for (const Vec3& q : queries.points) out.push_back(nearest(q));
    return out;
}

std::vector<std::size_t> nearest_neighbors(const PointCloud& queries,
                                           const PointCloud& reference) {
    return NearestNeighborIndex(reference).nearest(queries);
}

} // namespace pcreg
