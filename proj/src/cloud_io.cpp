#include "pcreg/cloud_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pcreg/errors.hpp"

namespace pcreg {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& why) {
    throw DataError(path + ":" + std::to_string(line) + ": " + why);
}

std::string format_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool parse_three_doubles(const std::string& s, Vec3& out) {
    std::istringstream iss(s);
    if (!(iss >> out.x >> out.y >> out.z)) return false;
    std::string rest;
    if (iss >> rest) return false;
    return true;
}

std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path + ": cannot open for reading");
    return in;
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path + ": cannot open for writing");
    return out;
}

PointCloud read_xyz(const std::string& path) {
    std::ifstream in = open_for_read(path);
    PointCloud c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        Vec3 p;
        if (!parse_three_doubles(line, p)) parse_fail(path, lineno, "expected three reals");
        c.points.push_back(p);
    }
    if (c.points.empty()) throw DataError(path + ": no points");
    return c;
}

PointCloud read_ply_ascii(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::string line;
    std::size_t lineno = 0;

    auto next_line = [&]() -> bool {
        if (!std::getline(in, line)) return false;
        ++lineno;
        return true;
    };

    if (!next_line() || line != "ply") parse_fail(path, lineno ? lineno : 1, "missing ply magic");
    std::size_t vertex_count = 0;
    bool saw_format = false;
    for (;;) {
        if (!next_line()) parse_fail(path, lineno, "header ended before end_header");
        if (line == "end_header") break;
        std::istringstream iss(line);
        std::string word;
        iss >> word;
        if (word == "format") {
            std::string kind;
            iss >> kind;
            if (kind != "ascii") parse_fail(path, lineno, "only ascii ply is supported");
            saw_format = true;
        } else if (word == "element") {
            std::string name;
            std::size_t count = 0;
            if (!(iss >> name >> count)) parse_fail(path, lineno, "malformed element line");
            if (name == "vertex") vertex_count = count;
        } else if (word == "property" || word == "comment") {
            // accepted and ignored
        } else {
            parse_fail(path, lineno, "unrecognized header line");
        }
    }
    if (!saw_format) parse_fail(path, lineno, "header missing format line");
    if (vertex_count == 0) parse_fail(path, lineno, "header missing vertex element");

    PointCloud c;
    c.points.reserve(vertex_count);
    for (std::size_t i = 0; i < vertex_count; ++i) {
        if (!next_line()) parse_fail(path, lineno, "vertex list ended early");
        Vec3 p;
        if (!parse_three_doubles(line, p)) parse_fail(path, lineno, "expected three reals");
        c.points.push_back(p);
    }
    return c;
}

void write_xyz(const std::string& path, const PointCloud& c) {
    std::ofstream out = open_for_write(path);
    for (const Vec3& p : c.points)
        out << format_coord(p.x) << ' ' << format_coord(p.y) << ' ' << format_coord(p.z)
            << '\n';
    if (!out) throw DataError(path + ": write failed");
}

void write_ply_ascii(const std::string& path, const PointCloud& c) {
    std::ofstream out = open_for_write(path);
    out << "ply\nformat ascii 1.0\nelement vertex " << c.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const Vec3& p : c.points)
        out << format_coord(p.x) << ' ' << format_coord(p.y) << ' ' << format_coord(p.z)
            << '\n';
    if (!out) throw DataError(path + ": write failed");
}

} // namespace

CloudFormat cloud_format_from_string(const std::string& s) {
    if (s == "xyz") return CloudFormat::xyz;
    if (s == "ply" || s == "ply_ascii") return CloudFormat::ply_ascii;
    if (s == "off") return CloudFormat::off;
    throw ValidationError("unknown cloud format: " + s);
}

const char* to_string(CloudFormat f) {
    switch (f) {
        case CloudFormat::xyz: return "xyz";
        case CloudFormat::ply_ascii: return "ply_ascii";
        case CloudFormat::off: return "off";
    }
    return "?";
}

CloudFormat cloud_format_from_path(const std::string& path) {
    const std::size_t dot = path.rfind('.');
    if (dot == std::string::npos)
        throw ValidationError(path + ": no extension to infer a format from");
    return cloud_format_from_string(path.substr(dot + 1));
}

TriMesh read_off(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::string line;
    std::size_t lineno = 0;

    auto next_content_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line[0] != '#') return true;
        }
        return false;
    };

    if (!next_content_line()) parse_fail(path, 1, "empty file");
    std::size_t nv = 0, nf = 0, ne = 0;
    // Some exporters put the counts on the OFF line itself.
    if (line == "OFF") {
        if (!next_content_line()) parse_fail(path, lineno, "missing count line");
        std::istringstream iss(line);
        if (!(iss >> nv >> nf >> ne)) parse_fail(path, lineno, "malformed count line");
    } else if (line.rfind("OFF", 0) == 0) {
        std::istringstream iss(line.substr(3));
        if (!(iss >> nv >> nf >> ne)) parse_fail(path, lineno, "malformed OFF header");
    } else {
        parse_fail(path, lineno, "missing OFF magic");
    }
    if (nv == 0) parse_fail(path, lineno, "mesh has no vertices");

    TriMesh mesh;
    mesh.vertices.reserve(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        if (!next_content_line()) parse_fail(path, lineno, "vertex list ended early");
        Vec3 p;
        if (!parse_three_doubles(line, p)) parse_fail(path, lineno, "expected three reals");
        mesh.vertices.push_back(p);
    }
    mesh.faces.reserve(nf);
    for (std::size_t i = 0; i < nf; ++i) {
        if (!next_content_line()) parse_fail(path, lineno, "face list ended early");
        std::istringstream iss(line);
        std::size_t arity = 0;
        if (!(iss >> arity) || arity < 3) parse_fail(path, lineno, "malformed face line");
        std::vector<std::size_t> ids(arity);
        for (std::size_t& id : ids) {
            if (!(iss >> id)) parse_fail(path, lineno, "face index list ended early");
            if (id >= nv) parse_fail(path, lineno, "vertex index out of range");
        }
        // Fan-triangulate polygons.
        for (std::size_t k = 1; k + 1 < arity; ++k)
            mesh.faces.push_back({ids[0], ids[k], ids[k + 1]});
    }
    return mesh;
}

PointCloud sample_mesh_surface(const TriMesh& mesh, std::size_t n, Rng& rng) {
    if (n == 0) throw ValidationError("sample_mesh_surface: n must be positive");
    if (mesh.faces.empty()) throw ValidationError("sample_mesh_surface: mesh has no faces");

    std::vector<double> cumulative;
    cumulative.reserve(mesh.faces.size());
    double total = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative.push_back(total);
    }
    if (total <= 0.0) throw ValidationError("sample_mesh_surface: zero total area");

    PointCloud out;
    out.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double pick = rng.uniform01() * total;
        const std::size_t fi = static_cast<std::size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
        const auto& f = mesh.faces[std::min(fi, mesh.faces.size() - 1)];
        double u = rng.uniform01();
        double v = rng.uniform01();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        out.points.push_back(a + (b - a) * u + (c - a) * v);
    }
    return out;
}

PointCloud read_cloud(const std::string& path, CloudFormat fmt) {
    switch (fmt) {
        case CloudFormat::xyz: return read_xyz(path);
        case CloudFormat::ply_ascii: return read_ply_ascii(path);
        case CloudFormat::off:
            throw ValidationError(path + ": OFF input needs a sample count; use the overload");
    }
    throw ValidationError("read_cloud: bad format");
}

PointCloud read_cloud(const std::string& path, CloudFormat fmt, std::size_t off_samples,
                      Rng& rng) {
    if (fmt != CloudFormat::off) return read_cloud(path, fmt);
    return sample_mesh_surface(read_off(path), off_samples, rng);
}

void write_cloud(const std::string& path, const PointCloud& c, CloudFormat fmt) {
    if (c.points.empty()) throw ValidationError(path + ": refusing to write an empty cloud");
    switch (fmt) {
        case CloudFormat::xyz: return write_xyz(path, c);
        case CloudFormat::ply_ascii: return write_ply_ascii(path, c);
        case CloudFormat::off:
            throw ValidationError(path + ": clouds have no faces; OFF output is unsupported");
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::vector<ManifestEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
            parse_fail(path, lineno, "expected file<TAB>category");
        entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out = open_for_write(path);
    for (const ManifestEntry& e : entries) out << e.file << '\t' << e.category << '\n';
    if (!out) throw DataError(path + ": write failed");
}

} // namespace pcreg
