#pragma once

#include <array>
#include <string>
#include <vector>

#include "pcreg/cloud.hpp"

namespace pcreg {

enum class CloudFormat { xyz, ply_ascii, off };

CloudFormat cloud_format_from_string(const std::string& s);
const char* to_string(CloudFormat f);

/// Infers xyz / ply_ascii / off from the file extension.
CloudFormat cloud_format_from_path(const std::string& path);

/// Triangle mesh as stored in OFF files.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::size_t, 3>> faces;
};

/// Parse errors carry "path:line:" prefixes.
TriMesh read_off(const std::string& path);

/// Area-weighted triangle pick, barycentric-uniform point within it.
PointCloud sample_mesh_surface(const TriMesh& mesh, std::size_t n, Rng& rng);

/// xyz and ply_ascii only; OFF goes through read_off + sample_mesh_surface
/// (or the overload below). Coordinates round-trip exactly.
PointCloud read_cloud(const std::string& path, CloudFormat fmt);
void write_cloud(const std::string& path, const PointCloud& c, CloudFormat fmt);

/// All formats; off_samples and rng are consulted only for OFF input.
PointCloud read_cloud(const std::string& path, CloudFormat fmt, std::size_t off_samples,
                      Rng& rng);

/// Dataset manifest: one "file<TAB>category" line per entry, '#' comments.
struct ManifestEntry {
    std::string file;
    std::string category;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

} // namespace pcreg
