#pragma once

#include <array>
#include <cmath>
#include <string>

namespace pcreg {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    Vec3& operator-=(const Vec3& o) {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double squared_norm() const { return dot(*this); }
    double norm() const { return std::sqrt(squared_norm()); }
    bool finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() { return Mat3{{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }

    double operator()(int r, int c) const { return m[3 * r + c]; }
    double& operator()(int r, int c) { return m[3 * r + c]; }

    Mat3 operator*(const Mat3& o) const;
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator+(const Mat3& o) const;
    Mat3 operator-(const Mat3& o) const;
    Mat3 operator*(double s) const;

    Mat3 transposed() const {
        return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }
    double trace() const { return m[0] + m[4] + m[8]; }
    double det() const;
    Mat3 inverse() const; // via adjugate; caller guarantees invertibility
};

/// Unit rotation axis plus angle in [0, pi].
struct AxisAngle {
    Vec3 axis{1.0, 0.0, 0.0};
    double angle = 0.0;
};

constexpr double kPi = 3.14159265358979323846;
constexpr double kRotationTol = 1e-9;       // orthonormality / determinant gate
constexpr double kUnitAxisTol = 1e-12;

inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

/// Proper rotation. Construction from raw matrix data is validated
/// (orthonormal within 1e-9, det +1 within 1e-9); products of valid
/// rotations skip the check.
class RotationMatrix {
public:
    RotationMatrix() : m_(Mat3::identity()) {}

    /// Throws ValidationError when the matrix is not a rotation within tolerance.
    static RotationMatrix from_matrix(const Mat3& m);

    static RotationMatrix identity() { return RotationMatrix(); }

    const Mat3& matrix() const { return m_; }
    double operator()(int r, int c) const { return m_(r, c); }

    RotationMatrix operator*(const RotationMatrix& o) const {
        return RotationMatrix(m_ * o.m_, Unchecked{});
    }
    Vec3 operator*(const Vec3& v) const { return m_ * v; }

    RotationMatrix transposed() const { return RotationMatrix(m_.transposed(), Unchecked{}); }
    double trace() const { return m_.trace(); }

    /// Max-abs entry of R^T R - I.
    double orthonormality_residual() const;

    /// Nearest rotation by Newton iteration for the orthogonal polar factor.
    /// Meant for drift repair after long composition chains.
    RotationMatrix reorthonormalized() const;

    AxisAngle to_axis_angle() const;

private:
    struct Unchecked {};
    RotationMatrix(const Mat3& m, Unchecked) : m_(m) {}

    friend RotationMatrix rotation_from_axis_angle_unchecked(const Vec3&, double);

    Mat3 m_;
};

/// Rodrigues rotation. Validates the AxisAngle invariants (unit axis within
/// 1e-12, angle in [0, pi]); throws ValidationError otherwise.
RotationMatrix rotation_from_axis_angle(const AxisAngle& aa);

/// Rotations about the coordinate axes; any finite angle.
RotationMatrix rot_x(double angle);
RotationMatrix rot_y(double angle);
RotationMatrix rot_z(double angle);

/// Rodrigues without input validation; axis must be unit length.
RotationMatrix rotation_from_axis_angle_unchecked(const Vec3& unit_axis, double angle);

/// Nearest rotation to an arbitrary (invertible, det > 0) matrix. Accepts
/// drifted inputs that from_matrix would refuse.
RotationMatrix reorthonormalize(const Mat3& m);

struct RigidTransform {
    RotationMatrix rotation;
    Vec3 translation;

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// b first, then a: rotation R_a R_b, translation R_a t_b + t_a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

RigidTransform inverse(const RigidTransform& t);

/// Geodesic angle of r1 r2^-1 in radians, in [0, pi]. The arccos argument is
/// clamped to [-1, 1] so drift near the identity or a half turn cannot
/// produce NaN.
double rotation_distance(const RotationMatrix& r1, const RotationMatrix& r2);

double translation_distance(const Vec3& t1, const Vec3& t2);

/// Sum of the translation and rotation terms. Radians and model units are
/// added with unit weights; reward normalization downstream absorbs scale.
double transform_distance(const RigidTransform& a, const RigidTransform& b);

/// {"rotation": [9 row-major reals], "translation": [3 reals]}; the parse
/// recovers the exact stored doubles.
std::string to_json_string(const RigidTransform& t);
RigidTransform rigid_transform_from_json(const std::string& text);

} // namespace pcreg
