#pragma once

#include <string>
#include <vector>

#include "pcreg/cloud.hpp"
#include "pcreg/geom.hpp"

namespace pcreg {

enum class ActionKind { rotation, translation };
enum class Axis { x, y, z };
enum class SizeClass { small_step, large_step };

struct ActionSpec {
    ActionKind kind = ActionKind::rotation;
    Axis axis = Axis::x;
    int sign = +1;          // +1 or -1
    double magnitude = 0.0; // radians (rotation) or model units (translation), > 0
    SizeClass size_class = SizeClass::small_step;
};

/// The 24 canonical actions. Rotations first, axis x, y, z outermost, sign
/// +, - next, magnitude 0.5 deg, 10 deg innermost; then translations in the
/// same pattern with magnitudes 0.01, 0.1.
const std::vector<ActionSpec>& default_action_set();

/// R_a; the identity for translation actions.
RotationMatrix action_rotation(const ActionSpec& a);

/// t_a; zero for rotation actions.
Vec3 action_translation(const ActionSpec& a);

/// Decoupled accumulation of applied actions: rotations compose on the left,
/// translations add, neither touches the other component.
struct AccumulatedTransform {
    RotationMatrix rotation_acc;
    Vec3 translation_acc;

    static AccumulatedTransform identity() { return {}; }
};

/// Rotation action: rotation_acc := R_a * rotation_acc (translation
/// bit-identical). Translation action: translation_acc += t_a. The rotation
/// is re-orthonormalized once composition drift passes the validation gate.
AccumulatedTransform apply_action(const AccumulatedTransform& acc, const ActionSpec& a);

/// The rigid map realized by acc when rotations pivot about the given point:
/// p -> R_acc (p - pivot) + pivot + t_acc. A zero pivot recovers the plain
/// decoupled map R_acc p + t_acc.
RigidTransform to_rigid_transform(const AccumulatedTransform& acc, const Vec3& pivot = {});

/// What remains between the accumulator and the ground truth under decoupled
/// application; identity exactly when acc reproduces gt.
struct ResidualState {
    RotationMatrix rotation_residual;  // R_gt * R_acc^T
    Vec3 translation_residual;         // t_gt - t_acc
};

ResidualState residual(const RigidTransform& gt, const AccumulatedTransform& acc);

/// D(s, identity): translation norm plus rotation angle.
double residual_distance(const ResidualState& s);

/// Reduction of the residual's distance to the identity if the action were
/// applied. The off-component terms cancel exactly, so rotation rewards see
/// only the rotation residual and translation rewards only the translation
/// residual:
///   rotation:    |angle(R_res)| - |angle(R_res * R_a^T)|
///   translation: ||t_res|| - ||t_res - t_a||
double oracle_reward_se3(const ActionSpec& a, const ResidualState& s);

std::vector<double> reward_vector_se3(const std::vector<ActionSpec>& actions,
                                      const ResidualState& s);

enum class PointRewardKind { l2_clean, mcd };

PointRewardKind point_reward_kind_from_string(const std::string& s);
const char* to_string(PointRewardKind k);

/// Point-based ablation reward: change of the chosen cloud distance when the
/// action is appended to acc. Rotations pivot about the observed source
/// centroid.
double oracle_reward_points(const ActionSpec& a, const CloudPair& pair,
                            const AccumulatedTransform& acc, PointRewardKind kind);

std::vector<double> reward_vector_points(const std::vector<ActionSpec>& actions,
                                         const CloudPair& pair,
                                         const AccumulatedTransform& acc,
                                         PointRewardKind kind);

enum class RewardGrouping {
    by_magnitude,  // four groups of six, keyed by magnitude value
    by_size_class, // two groups of twelve, keyed by size class
};

/// Scales each group of v to unit l2 norm; all-zero groups pass through.
std::vector<double> normalize_rewards_per_group(const std::vector<ActionSpec>& actions,
                                                std::vector<double> v,
                                                RewardGrouping grouping);

/// One "index kind axis sign magnitude size_class" line per action, for
/// provenance next to trained weights.
std::string action_set_to_text(const std::vector<ActionSpec>& actions);

/// Compact label such as "rot_x+10deg" or "trans_z-0.1".
std::string action_name(const ActionSpec& a);

} // namespace pcreg
