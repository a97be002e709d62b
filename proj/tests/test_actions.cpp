#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>
#include <vector>

#include "pcreg/actions.hpp"
#include "pcreg/cloud.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/metrics.hpp"
#include "pcreg/rng.hpp"
#include "pcreg/rotsample.hpp"

using namespace pcreg;

namespace {

bool bits_equal(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

ResidualState random_protocol_state(Rng& rng) {
    // Protocol-scale initial misalignment: rotation within 60 degrees,
    // translation within the 0.5 box.
    return {sample_rotation_haar(rng, deg_to_rad(60.0)), sample_translation(rng, 0.5)};
}

double naive_clean_l2(const CloudPair& pair, const RigidTransform& est) {
    double sum = 0.0;
    for (const Vec3& p : pair.clean_source.points)
        sum += (est.apply(p) - pair.gt.apply(p)).norm();
    return sum / static_cast<double>(pair.clean_source.size());
}

CloudPair sphere_pair(std::size_t n, const RigidTransform& gt, std::uint64_t seed) {
    Rng rng(seed);
    CloudPair pair;
    pair.clean_source = synth_shape(ShapeKind::sphere, n, rng);
    pair.source = pair.clean_source;
    pair.gt = gt;
    pair.target = apply_transform(pair.source, gt);
    return pair;
}

} // namespace

TEST_CASE("the default action set enumerates 24 actions in canonical order") {
    const std::vector<ActionSpec>& set = default_action_set();
    REQUIRE(set.size() == 24);
    for (std::size_t i = 0; i < 24; ++i) {
        const ActionSpec& a = set[i];
        const bool rotation = i < 12;
        const std::size_t block = i % 12;
        CHECK(a.kind == (rotation ? ActionKind::rotation : ActionKind::translation));
        CHECK(a.axis == static_cast<Axis>(block / 4));
        CHECK(a.sign == (((i / 2) % 2 == 0) ? +1 : -1));
        const bool small = i % 2 == 0;
        CHECK(a.size_class == (small ? SizeClass::small_step : SizeClass::large_step));
        if (rotation)
            CHECK(a.magnitude == (small ? deg_to_rad(0.5) : deg_to_rad(10.0)));
        else
            CHECK(a.magnitude == (small ? 0.01 : 0.1));
    }
    // Every action at i with positive sign has its negation at i + 2.
    for (std::size_t i = 0; i < 24; i += 4)
        for (std::size_t j : {i, i + 1}) {
            CHECK(set[j].sign == +1);
            CHECK(set[j + 2].sign == -1);
            CHECK(set[j].kind == set[j + 2].kind);
            CHECK(set[j].axis == set[j + 2].axis);
            CHECK(set[j].magnitude == set[j + 2].magnitude);
        }
}

TEST_CASE("action_rotation and action_translation isolate the two kinds") {
    const ActionSpec rot{ActionKind::rotation, Axis::z, -1, deg_to_rad(10.0),
                         SizeClass::large_step};
    const ActionSpec trans{ActionKind::translation, Axis::y, +1, 0.1, SizeClass::large_step};

    CHECK(rotation_distance(action_rotation(rot), rot_z(-deg_to_rad(10.0))) == 0.0);
    const Vec3 zero = action_translation(rot);
    CHECK((zero.x == 0.0 && zero.y == 0.0 && zero.z == 0.0));

    CHECK(rotation_distance(action_rotation(trans), RotationMatrix::identity()) == 0.0);
    const Vec3 step = action_translation(trans);
    CHECK((step.x == 0.0 && step.y == 0.1 && step.z == 0.0));
}

TEST_CASE("apply_action updates one component and leaves the other bit-identical") {
    Rng rng(11);
    AccumulatedTransform acc;
    acc.rotation_acc = sample_rotation_haar(rng, kPi);
    acc.translation_acc = sample_translation(rng, 1.0);

    const ActionSpec rot{ActionKind::rotation, Axis::x, +1, deg_to_rad(10.0),
                         SizeClass::large_step};
    const AccumulatedTransform after_rot = apply_action(acc, rot);
    CHECK(bits_equal(after_rot.translation_acc.x, acc.translation_acc.x));
    CHECK(bits_equal(after_rot.translation_acc.y, acc.translation_acc.y));
    CHECK(bits_equal(after_rot.translation_acc.z, acc.translation_acc.z));
    CHECK(rotation_distance(after_rot.rotation_acc,
                            rot_x(deg_to_rad(10.0)) * acc.rotation_acc) < 1e-12);

    const ActionSpec trans{ActionKind::translation, Axis::z, -1, 0.01, SizeClass::small_step};
    const AccumulatedTransform after_trans = apply_action(acc, trans);
    CHECK(std::memcmp(after_trans.rotation_acc.matrix().m.data(),
                      acc.rotation_acc.matrix().m.data(), 9 * sizeof(double)) == 0);
    CHECK(after_trans.translation_acc.z == acc.translation_acc.z - 0.01);

    ActionSpec bad = rot;
    bad.magnitude = 0.0;
    CHECK_THROWS_AS(apply_action(acc, bad), ValidationError);
}

TEST_CASE("long action chains keep the accumulated rotation orthonormal") {
    AccumulatedTransform acc;
    const std::vector<ActionSpec>& set = default_action_set();
    Rng rng(12);
    for (int i = 0; i < 20000; ++i) {
        acc = apply_action(acc, set[rng.below(12)]); // rotations only
        // Cheap invariant: every exit re-validates against the gate.
        if (i % 500 == 0)
            REQUIRE(acc.rotation_acc.orthonormality_residual() <= kRotationTol);
    }
    CHECK(acc.rotation_acc.orthonormality_residual() <= kRotationTol);
}

TEST_CASE("to_rigid_transform folds the pivot into the translation") {
    AccumulatedTransform acc;
    acc.rotation_acc = rot_z(deg_to_rad(90.0));
    acc.translation_acc = {0.5, 0, 0};

    const RigidTransform plain = to_rigid_transform(acc);
    CHECK(std::memcmp(plain.rotation.matrix().m.data(),
                      acc.rotation_acc.matrix().m.data(), 9 * sizeof(double)) == 0);
    CHECK(plain.translation.x == 0.5);

    const Vec3 pivot{1, 2, 3};
    const RigidTransform pivoted = to_rigid_transform(acc, pivot);
    Rng rng(13);
    for (int i = 0; i < 20; ++i) {
        const Vec3 p = sample_translation(rng, 2.0);
        const Vec3 expected = acc.rotation_acc * (p - pivot) + pivot + acc.translation_acc;
        CHECK((pivoted.apply(p) - expected).norm() < 1e-12);
    }
    // The pivot itself maps to pivot + t.
    CHECK((pivoted.apply(pivot) - (pivot + acc.translation_acc)).norm() < 1e-12);
}

TEST_CASE("residual vanishes exactly when the accumulator reproduces gt") {
    Rng rng(14);
    RigidTransform gt;
    gt.rotation = sample_rotation_haar(rng, deg_to_rad(60.0));
    gt.translation = sample_translation(rng, 0.5);

    AccumulatedTransform acc;
    acc.rotation_acc = gt.rotation;
    acc.translation_acc = gt.translation;

    const ResidualState s = residual(gt, acc);
    CHECK((s.translation_residual.x == 0.0 && s.translation_residual.y == 0.0 &&
           s.translation_residual.z == 0.0));
    // R R^T only reaches the identity up to round-off; arccos amplifies that
    // to ~1e-8, so the distance is near zero rather than exactly zero.
    CHECK(residual_distance(s) < 1e-6);
}

TEST_CASE("oracle rewards at a pure rotation residual") {
    const ResidualState s{rot_z(deg_to_rad(10.0)), {0, 0, 0}};
    const std::vector<ActionSpec>& set = default_action_set();
    const std::vector<double> r = reward_vector_se3(set, s);

    // Index 9: rotation z + 10 degrees cancels the whole residual.
    CHECK(std::abs(r[9] - deg_to_rad(10.0)) < 1e-7);
    // Index 11: rotation z - 10 degrees doubles it.
    CHECK(std::abs(r[11] + deg_to_rad(10.0)) < 1e-7);
    // Index 8: + 0.5 degrees makes partial progress, exactly its own size.
    CHECK(std::abs(r[8] - deg_to_rad(0.5)) < 1e-7);
    // Off-axis rotations cannot help more than they cost; x/y at this state
    // give strictly negative reward.
    for (std::size_t i : {0, 1, 2, 3, 4, 5, 6, 7}) CHECK(r[i] < 0.0);
    // The translation residual is zero, so every translation action pays
    // exactly its own magnitude.
    for (std::size_t i = 12; i < 24; ++i)
        CHECK(r[i] == doctest::Approx(-set[i].magnitude).epsilon(1e-14));
}

TEST_CASE("oracle rewards at a pure translation residual") {
    const ResidualState s{RotationMatrix::identity(), {-0.1, 0, 0}};
    const std::vector<ActionSpec>& set = default_action_set();
    const std::vector<double> r = reward_vector_se3(set, s);

    // Index 15: translation x - 0.1 cancels the residual exactly.
    CHECK(set[15].kind == ActionKind::translation);
    CHECK(set[15].axis == Axis::x);
    CHECK(set[15].sign == -1);
    CHECK(set[15].magnitude == 0.1);
    CHECK(r[15] == 0.1);
    // Index 13: the opposite step doubles the residual.
    CHECK(r[13] == doctest::Approx(-0.1).epsilon(1e-14));
    // Index 14: small step toward the goal earns its own size.
    CHECK(r[14] == doctest::Approx(0.01).epsilon(1e-14));
    // Rotation residual is the identity: every rotation pays its magnitude.
    for (std::size_t i = 0; i < 12; ++i)
        CHECK(std::abs(r[i] + set[i].magnitude) < 1e-12);
}

TEST_CASE("rotation rewards never read the translation residual and vice versa") {
    Rng rng(15);
    const std::vector<ActionSpec>& set = default_action_set();
    for (int trial = 0; trial < 200; ++trial) {
        const RotationMatrix rot = sample_rotation_haar(rng, kPi);
        const ResidualState a{rot, sample_translation(rng, 10.0)};
        const ResidualState b{rot, sample_translation(rng, 0.001)};
        const Vec3 t = sample_translation(rng, 0.5);
        const ResidualState c{sample_rotation_haar(rng, kPi), t};
        const ResidualState d{sample_rotation_haar(rng, deg_to_rad(1.0)), t};
        for (const ActionSpec& act : set) {
            if (act.kind == ActionKind::rotation)
                CHECK(bits_equal(oracle_reward_se3(act, a), oracle_reward_se3(act, b)));
            else
                CHECK(bits_equal(oracle_reward_se3(act, c), oracle_reward_se3(act, d)));
        }
    }
}

TEST_CASE("reward equals the drop in residual distance after the action") {
    Rng rng(16);
    const std::vector<ActionSpec>& set = default_action_set();
    for (int trial = 0; trial < 50; ++trial) {
        RigidTransform gt;
        gt.rotation = sample_rotation_haar(rng, deg_to_rad(60.0));
        gt.translation = sample_translation(rng, 0.5);
        AccumulatedTransform acc;
        for (int k = 0; k < 6; ++k) acc = apply_action(acc, set[rng.below(24)]);

        const ResidualState s = residual(gt, acc);
        for (const ActionSpec& a : set) {
            const ResidualState after = residual(gt, apply_action(acc, a));
            const double drop = residual_distance(s) - residual_distance(after);
            if (a.kind == ActionKind::translation)
                CHECK(oracle_reward_se3(a, s) == doctest::Approx(drop).epsilon(1e-12));
            else
                // Regrouping R_gt (R_a R_acc)^T vs (R_gt R_acc^T) R_a^T costs
                // round-off that arccos stretches to ~1e-8.
                CHECK(std::abs(oracle_reward_se3(a, s) - drop) < 1e-6);
        }
    }
}

TEST_CASE("sign-negated action pairs cannot both win at protocol-scale states") {
    Rng rng(17);
    const std::vector<ActionSpec>& set = default_action_set();
    for (int trial = 0; trial < 500; ++trial) {
        const ResidualState s = random_protocol_state(rng);
        for (std::size_t i = 0; i < 24; i += 4)
            for (std::size_t j : {i, i + 1}) {
                const double sum =
                    oracle_reward_se3(set[j], s) + oracle_reward_se3(set[j + 2], s);
                // Convexity of the distance along the action axis; fails only
                // past the antipodal wrap, which protocol states never reach.
                CHECK(sum <= 1e-12);
            }
    }
}

TEST_CASE("per-group normalization scales each group to unit norm") {
    const std::vector<ActionSpec>& set = default_action_set();

    SUBCASE("four magnitude groups") {
        std::vector<double> v(24, 1.0);
        const std::vector<double> out =
            normalize_rewards_per_group(set, v, RewardGrouping::by_magnitude);
        for (double x : out) CHECK(x == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-15));
        for (double mag : {deg_to_rad(0.5), deg_to_rad(10.0), 0.01, 0.1}) {
            double sq = 0.0;
            for (std::size_t i = 0; i < 24; ++i)
                if (set[i].magnitude == mag) sq += out[i] * out[i];
            CHECK(sq == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    SUBCASE("two size-class groups") {
        std::vector<double> v(24, -2.0);
        const std::vector<double> out =
            normalize_rewards_per_group(set, v, RewardGrouping::by_size_class);
        for (double x : out) CHECK(x == doctest::Approx(-1.0 / std::sqrt(12.0)).epsilon(1e-15));
    }

    SUBCASE("all-zero groups pass through and others still normalize") {
        std::vector<double> v(24, 0.0);
        for (std::size_t i = 0; i < 24; ++i)
            if (set[i].magnitude == 0.1) v[i] = 3.0; // only the large translations
        const std::vector<double> out =
            normalize_rewards_per_group(set, v, RewardGrouping::by_magnitude);
        double sq = 0.0;
        for (std::size_t i = 0; i < 24; ++i) {
            if (set[i].magnitude == 0.1)
                sq += out[i] * out[i];
            else
                CHECK(out[i] == 0.0);
        }
        CHECK(sq == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("order and sign survive within each group") {
        Rng rng(18);
        std::vector<double> v;
        for (int i = 0; i < 24; ++i) v.push_back(2.0 * rng.uniform01() - 1.0);
        const std::vector<double> out =
            normalize_rewards_per_group(set, v, RewardGrouping::by_magnitude);
        for (std::size_t i = 0; i < 24; ++i)
            for (std::size_t j = 0; j < 24; ++j)
                if (set[i].magnitude == set[j].magnitude && v[i] < v[j])
                    CHECK(out[i] < out[j]);
    }

    SUBCASE("length mismatch is rejected") {
        std::vector<double> v(23, 1.0);
        CHECK_THROWS_AS(normalize_rewards_per_group(set, v, RewardGrouping::by_magnitude),
                        ValidationError);
    }
}

TEST_CASE("point-based reward of the completing translation action") {
    RigidTransform gt;
    gt.translation = {0.1, 0, 0};
    const CloudPair pair = sphere_pair(40, gt, 19);
    const AccumulatedTransform acc;
    const ActionSpec complete{ActionKind::translation, Axis::x, +1, 0.1,
                              SizeClass::large_step};

    // Completing the alignment drops clean_l2 from 0.1 to exactly 0.
    const double r_l2 = oracle_reward_points(complete, pair, acc, PointRewardKind::l2_clean);
    CHECK(r_l2 == doctest::Approx(0.1).epsilon(1e-14));
    const double before_mcd = modified_chamfer(pair, to_rigid_transform(acc));
    const double r_mcd = oracle_reward_points(complete, pair, acc, PointRewardKind::mcd);
    CHECK(r_mcd == doctest::Approx(before_mcd).epsilon(1e-12));
    CHECK(before_mcd > 0.0);

    const ActionSpec away{ActionKind::translation, Axis::x, -1, 0.1, SizeClass::large_step};
    CHECK(oracle_reward_points(away, pair, acc, PointRewardKind::l2_clean) ==
          doctest::Approx(-0.1).epsilon(1e-14));
}

TEST_CASE("point-based rewards match a from-scratch recomputation") {
    Rng rng(20);
    RigidTransform gt;
    gt.rotation = sample_rotation_haar(rng, deg_to_rad(40.0));
    gt.translation = sample_translation(rng, 0.3);
    const CloudPair pair = sphere_pair(60, gt, 21);

    AccumulatedTransform acc;
    const std::vector<ActionSpec>& set = default_action_set();
    for (int k = 0; k < 4; ++k) acc = apply_action(acc, set[rng.below(24)]);

    const Vec3 pivot = pair.source.centroid();
    const std::vector<double> r_l2 =
        reward_vector_points(set, pair, acc, PointRewardKind::l2_clean);
    const std::vector<double> r_mcd = reward_vector_points(set, pair, acc, PointRewardKind::mcd);
    REQUIRE(r_l2.size() == 24);
    REQUIRE(r_mcd.size() == 24);

    for (std::size_t i = 0; i < 24; ++i) {
        const AccumulatedTransform after = apply_action(acc, set[i]);
        const double expect_l2 = naive_clean_l2(pair, to_rigid_transform(acc, pivot)) -
                                 naive_clean_l2(pair, to_rigid_transform(after, pivot));
        CHECK(r_l2[i] == doctest::Approx(expect_l2).epsilon(1e-12));
        const double expect_mcd = modified_chamfer(pair, to_rigid_transform(acc, pivot)) -
                                  modified_chamfer(pair, to_rigid_transform(after, pivot));
        CHECK(r_mcd[i] == doctest::Approx(expect_mcd).epsilon(1e-12));
        CHECK(bits_equal(r_l2[i], oracle_reward_points(set[i], pair, acc,
                                                       PointRewardKind::l2_clean)));
    }
}

TEST_CASE("point reward kind names round trip") {
    CHECK(point_reward_kind_from_string("l2_clean") == PointRewardKind::l2_clean);
    CHECK(point_reward_kind_from_string("mcd") == PointRewardKind::mcd);
    CHECK(to_string(PointRewardKind::l2_clean) == std::string("l2_clean"));
    CHECK(to_string(PointRewardKind::mcd) == std::string("mcd"));
    CHECK_THROWS_AS(point_reward_kind_from_string("chamfer"), ValidationError);
}

TEST_CASE("action set text lists one parseable line per action") {
    const std::vector<ActionSpec>& set = default_action_set();
    const std::string text = action_set_to_text(set);
    std::istringstream in(text);
    std::string line;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        std::istringstream fields(line);
        std::size_t index = 0;
        std::string kind, axis, sign, size_class;
        double magnitude = 0.0;
        REQUIRE((fields >> index >> kind >> axis >> sign >> magnitude >> size_class));
        CHECK(index == count);
        CHECK(kind == (set[count].kind == ActionKind::rotation ? "rotation" : "translation"));
        CHECK(magnitude == set[count].magnitude); // 17 significant digits round trip
        ++count;
    }
    CHECK(count == 24);
}
