#include "pcreg/actions.hpp"

#include <cmath>
#include <sstream>

#include "pcreg/errors.hpp"
#include "pcreg/metrics.hpp"

namespace pcreg {

const std::vector<ActionSpec>& default_action_set() {
    static const std::vector<ActionSpec> set = [] {
        std::vector<ActionSpec> s;
        s.reserve(24);
        const Axis axes[3] = {Axis::x, Axis::y, Axis::z};
        const int signs[2] = {+1, -1};
        const double rot_mags[2] = {deg_to_rad(0.5), deg_to_rad(10.0)};
        const double trans_mags[2] = {0.01, 0.1};
        for (Axis axis : axes)
            for (int sign : signs)
                for (int m = 0; m < 2; ++m)
                    s.push_back({ActionKind::rotation, axis, sign, rot_mags[m],
                                 m == 0 ? SizeClass::small_step : SizeClass::large_step});
        for (Axis axis : axes)
            for (int sign : signs)
                for (int m = 0; m < 2; ++m)
                    s.push_back({ActionKind::translation, axis, sign, trans_mags[m],
                                 m == 0 ? SizeClass::small_step : SizeClass::large_step});
        return s;
    }();
    return set;
}

RotationMatrix action_rotation(const ActionSpec& a) {
    if (a.kind != ActionKind::rotation) return RotationMatrix::identity();
    const double angle = a.sign * a.magnitude;
    switch (a.axis) {
        case Axis::x: return rot_x(angle);
        case Axis::y: return rot_y(angle);
        case Axis::z: return rot_z(angle);
    }
    return RotationMatrix::identity();
}

Vec3 action_translation(const ActionSpec& a) {
    if (a.kind != ActionKind::translation) return {};
    const double step = a.sign * a.magnitude;
    switch (a.axis) {
        case Axis::x: return {step, 0.0, 0.0};
        case Axis::y: return {0.0, step, 0.0};
        case Axis::z: return {0.0, 0.0, step};
    }
    return {};
}

AccumulatedTransform apply_action(const AccumulatedTransform& acc, const ActionSpec& a) {
    if (!(a.magnitude > 0.0)) throw ValidationError("apply_action: non-positive magnitude");
    AccumulatedTransform out = acc;
    if (a.kind == ActionKind::rotation) {
        out.rotation_acc = action_rotation(a) * acc.rotation_acc;
        if (out.rotation_acc.orthonormality_residual() > kRotationTol)
            out.rotation_acc = out.rotation_acc.reorthonormalized();
    } else {
        out.translation_acc += action_translation(a);
    }
    return out;
}

RigidTransform to_rigid_transform(const AccumulatedTransform& acc, const Vec3& pivot) {
    return {acc.rotation_acc,
            acc.translation_acc + pivot - acc.rotation_acc * pivot};
}

ResidualState residual(const RigidTransform& gt, const AccumulatedTransform& acc) {
    return {gt.rotation * acc.rotation_acc.transposed(),
            gt.translation - acc.translation_acc};
}

double residual_distance(const ResidualState& s) {
    return s.translation_residual.norm() +
           rotation_distance(s.rotation_residual, RotationMatrix::identity());
}

double oracle_reward_se3(const ActionSpec& a, const ResidualState& s) {
    if (a.kind == ActionKind::rotation) {
        const RotationMatrix after = s.rotation_residual * action_rotation(a).transposed();
        return rotation_distance(s.rotation_residual, RotationMatrix::identity()) -
               rotation_distance(after, RotationMatrix::identity());
    }
    const Vec3 after = s.translation_residual - action_translation(a);
    return s.translation_residual.norm() - after.norm();
}

std::vector<double> reward_vector_se3(const std::vector<ActionSpec>& actions,
                                      const ResidualState& s) {
    std::vector<double> r;
    r.reserve(actions.size());
    for (const ActionSpec& a : actions) r.push_back(oracle_reward_se3(a, s));
    return r;
}

PointRewardKind point_reward_kind_from_string(const std::string& s) {
    if (s == "l2_clean") return PointRewardKind::l2_clean;
    if (s == "mcd") return PointRewardKind::mcd;
    throw ValidationError("unknown point reward kind: " + s);
}

const char* to_string(PointRewardKind k) {
    return k == PointRewardKind::l2_clean ? "l2_clean" : "mcd";
}

namespace {

double point_distance(const CloudPair& pair, const AccumulatedTransform& acc,
                      const Vec3& pivot, PointRewardKind kind) {
    const RigidTransform est = to_rigid_transform(acc, pivot);
    return kind == PointRewardKind::l2_clean ? clean_l2(pair, est)
                                             : modified_chamfer(pair, est);
}

} // namespace

double oracle_reward_points(const ActionSpec& a, const CloudPair& pair,
                            const AccumulatedTransform& acc, PointRewardKind kind) {
    const Vec3 pivot = pair.source.centroid();
    return point_distance(pair, acc, pivot, kind) -
           point_distance(pair, apply_action(acc, a), pivot, kind);
}

std::vector<double> reward_vector_points(const std::vector<ActionSpec>& actions,
                                         const CloudPair& pair,
                                         const AccumulatedTransform& acc,
                                         PointRewardKind kind) {
    const Vec3 pivot = pair.source.centroid();
    const double before = point_distance(pair, acc, pivot, kind);
    std::vector<double> r;
    r.reserve(actions.size());
    for (const ActionSpec& a : actions)
        r.push_back(before - point_distance(pair, apply_action(acc, a), pivot, kind));
    return r;
}

std::vector<double> normalize_rewards_per_group(const std::vector<ActionSpec>& actions,
                                                std::vector<double> v,
                                                RewardGrouping grouping) {
    if (actions.size() != v.size())
        throw ValidationError("normalize_rewards_per_group: size mismatch");

    const auto group_key = [&](const ActionSpec& a) {
        if (grouping == RewardGrouping::by_size_class)
            return a.size_class == SizeClass::small_step ? 0.0 : 1.0;
        // Magnitude values are distinct across kinds, so the value itself keys
        // the four groups.
        return a.magnitude;
    };

    std::vector<double> keys;
    for (const ActionSpec& a : actions) {
        const double k = group_key(a);
        bool seen = false;
        for (double existing : keys) seen = seen || existing == k;
        if (!seen) keys.push_back(k);
    }

    for (double k : keys) {
        double sq = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (group_key(actions[i]) == k) sq += v[i] * v[i];
        if (sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t i = 0; i < v.size(); ++i)
            if (group_key(actions[i]) == k) v[i] *= inv;
    }
    return v;
}

std::string action_name(const ActionSpec& a) {
    std::ostringstream out;
    if (a.kind == ActionKind::rotation) {
        out << "rot_" << "xyz"[static_cast<int>(a.axis)] << (a.sign > 0 ? '+' : '-')
            << rad_to_deg(a.magnitude) << "deg";
    } else {
        out << "trans_" << "xyz"[static_cast<int>(a.axis)] << (a.sign > 0 ? '+' : '-')
            << a.magnitude;
    }
    return out.str();
}

std::string action_set_to_text(const std::vector<ActionSpec>& actions) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const ActionSpec& a = actions[i];
        out << i << ' ' << (a.kind == ActionKind::rotation ? "rotation" : "translation")
            << ' ' << "xyz"[static_cast<int>(a.axis)] << ' ' << (a.sign > 0 ? '+' : '-')
            << ' ' << a.magnitude << ' '
            << (a.size_class == SizeClass::small_step ? "small" : "large") << '\n';
    }
    return out.str();
}

} // namespace pcreg
