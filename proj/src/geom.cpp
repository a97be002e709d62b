#include "pcreg/geom.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "pcreg/errors.hpp"

#include <json.hpp>

namespace pcreg {

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r(i, j) = (*this)(i, 0) * o(0, j) + (*this)(i, 1) * o(1, j) + (*this)(i, 2) * o(2, j);
    return r;
}

Mat3 Mat3::operator+(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
    return r;
}

Mat3 Mat3::operator-(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
    return r;
}

Mat3 Mat3::operator*(double s) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
    return r;
}

double Mat3::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 Mat3::inverse() const {
    const double d = det();
    Mat3 adj;
    adj(0, 0) = m[4] * m[8] - m[5] * m[7];
    adj(0, 1) = m[2] * m[7] - m[1] * m[8];
    adj(0, 2) = m[1] * m[5] - m[2] * m[4];
    adj(1, 0) = m[5] * m[6] - m[3] * m[8];
    adj(1, 1) = m[0] * m[8] - m[2] * m[6];
    adj(1, 2) = m[2] * m[3] - m[0] * m[5];
    adj(2, 0) = m[3] * m[7] - m[4] * m[6];
    adj(2, 1) = m[1] * m[6] - m[0] * m[7];
    adj(2, 2) = m[0] * m[4] - m[1] * m[3];
    return adj * (1.0 / d);
}

namespace {

double orthonormality_residual_of(const Mat3& m) {
    const Mat3 g = m.transposed() * m;
    double r = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r = std::max(r, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return r;
}

} // namespace

RotationMatrix RotationMatrix::from_matrix(const Mat3& m) {
    for (double v : m.m)
        if (!std::isfinite(v)) throw ValidationError("RotationMatrix: non-finite entry");
    const double res = orthonormality_residual_of(m);
    if (res > kRotationTol)
        throw ValidationError("RotationMatrix: orthonormality residual " + std::to_string(res) +
                              " exceeds tolerance");
    const double d = m.det();
    if (std::abs(d - 1.0) > kRotationTol)
        throw ValidationError("RotationMatrix: determinant " + std::to_string(d) + " is not +1");
    return RotationMatrix(m, Unchecked{});
}

double RotationMatrix::orthonormality_residual() const {
    return orthonormality_residual_of(m_);
}

RotationMatrix RotationMatrix::reorthonormalized() const { return reorthonormalize(m_); }

RotationMatrix reorthonormalize(const Mat3& m) {
    Mat3 y = m;
    for (int it = 0; it < 20; ++it) {
        y = (y + y.inverse().transposed()) * 0.5;
        if (orthonormality_residual_of(y) < 1e-15) break;
    }
    return RotationMatrix::from_matrix(y);
}

AxisAngle RotationMatrix::to_axis_angle() const {
    const double c = std::clamp((trace() - 1.0) * 0.5, -1.0, 1.0);
    const double angle = std::acos(c);

    if (angle < 1e-9) return AxisAngle{{1.0, 0.0, 0.0}, angle};

    if (angle > kPi - 1e-6) {
        // Near a half turn the skew part vanishes; recover the axis from
        // the symmetric part (R + I)/2 = aa^T at angle == pi.
        const Mat3& r = m_;
        const double xx = std::max(0.0, (r(0, 0) + 1.0) * 0.5);
        const double yy = std::max(0.0, (r(1, 1) + 1.0) * 0.5);
        const double zz = std::max(0.0, (r(2, 2) + 1.0) * 0.5);
        Vec3 axis;
        if (xx >= yy && xx >= zz) {
            axis.x = std::sqrt(xx);
            axis.y = (r(0, 1) + r(1, 0)) * 0.25 / axis.x;
            axis.z = (r(0, 2) + r(2, 0)) * 0.25 / axis.x;
        } else if (yy >= zz) {
            axis.y = std::sqrt(yy);
            axis.x = (r(0, 1) + r(1, 0)) * 0.25 / axis.y;
            axis.z = (r(1, 2) + r(2, 1)) * 0.25 / axis.y;
        } else {
            axis.z = std::sqrt(zz);
            axis.x = (r(0, 2) + r(2, 0)) * 0.25 / axis.z;
            axis.y = (r(1, 2) + r(2, 1)) * 0.25 / axis.z;
        }
        const double n = axis.norm();
        return AxisAngle{axis * (1.0 / n), angle};
    }

    const Mat3& r = m_;
    const double s = 2.0 * std::sin(angle);
    Vec3 axis{(r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
    const double n = axis.norm();
    return AxisAngle{axis * (1.0 / n), angle};
}

RotationMatrix rotation_from_axis_angle_unchecked(const Vec3& u, double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double t = 1.0 - c;
    Mat3 m;
    m(0, 0) = c + u.x * u.x * t;
    m(0, 1) = u.x * u.y * t - u.z * s;
    m(0, 2) = u.x * u.z * t + u.y * s;
    m(1, 0) = u.y * u.x * t + u.z * s;
    m(1, 1) = c + u.y * u.y * t;
    m(1, 2) = u.y * u.z * t - u.x * s;
    m(2, 0) = u.z * u.x * t - u.y * s;
    m(2, 1) = u.z * u.y * t + u.x * s;
    m(2, 2) = c + u.z * u.z * t;
    return RotationMatrix(m, RotationMatrix::Unchecked{});
}

RotationMatrix rotation_from_axis_angle(const AxisAngle& aa) {
    if (!aa.axis.finite() || std::abs(aa.axis.norm() - 1.0) > kUnitAxisTol)
        throw ValidationError("rotation_from_axis_angle: axis is not unit length");
    if (!(aa.angle >= 0.0 && aa.angle <= kPi))
        throw ValidationError("rotation_from_axis_angle: angle outside [0, pi]");
    return rotation_from_axis_angle_unchecked(aa.axis, aa.angle);
}

RotationMatrix rot_x(double a) { return rotation_from_axis_angle_unchecked({1, 0, 0}, a); }
RotationMatrix rot_y(double a) { return rotation_from_axis_angle_unchecked({0, 1, 0}, a); }
RotationMatrix rot_z(double a) { return rotation_from_axis_angle_unchecked({0, 0, 1}, a); }

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

RigidTransform inverse(const RigidTransform& t) {
    const RotationMatrix rt = t.rotation.transposed();
    return {rt, -(rt * t.translation)};
}

double rotation_distance(const RotationMatrix& r1, const RotationMatrix& r2) {
    // Bit-equal inputs are exactly coincident; skipping the product avoids
    // arccos turning product round-off into a spurious ~1e-8.
    if (std::memcmp(r1.matrix().m.data(), r2.matrix().m.data(), 9 * sizeof(double)) == 0)
        return 0.0;
    const double tr = (r1 * r2.transposed()).trace();
    return std::acos(std::clamp((tr - 1.0) * 0.5, -1.0, 1.0));
}

double translation_distance(const Vec3& t1, const Vec3& t2) {
    return (t1 - t2).norm();
}

double transform_distance(const RigidTransform& a, const RigidTransform& b) {
    return translation_distance(a.translation, b.translation) +
           rotation_distance(a.rotation, b.rotation);
}

std::string to_json_string(const RigidTransform& t) {
    nlohmann::json j;
    j["rotation"] = t.rotation.matrix().m;
    j["translation"] = std::array<double, 3>{t.translation.x, t.translation.y, t.translation.z};
    return j.dump();
}

RigidTransform rigid_transform_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("RigidTransform parse: ") + e.what());
    }
    if (!j.contains("rotation") || !j.contains("translation") || j["rotation"].size() != 9 ||
        j["translation"].size() != 3)
        throw DataError("RigidTransform parse: expected 9 rotation and 3 translation reals");
    Mat3 m;
    for (int i = 0; i < 9; ++i) m.m[static_cast<std::size_t>(i)] = j["rotation"][i].get<double>();
    Vec3 v{j["translation"][0].get<double>(), j["translation"][1].get<double>(),
           j["translation"][2].get<double>()};
    return {RotationMatrix::from_matrix(m), v};
}

} // namespace pcreg
