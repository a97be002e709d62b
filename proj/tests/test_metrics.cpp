#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "pcreg/cloud.hpp"
#include "pcreg/errors.hpp"
#include "pcreg/metrics.hpp"
#include "pcreg/rng.hpp"
#include "pcreg/rotsample.hpp"

using namespace pcreg;

namespace {

// Independent high-level recomputation: plain double loops, no spatial index.
double naive_min_sqdist(const Vec3& q, const PointCloud& c) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : c.points) best = std::min(best, (q - p).squared_norm());
    return best;
}

double naive_mean_min_sqdist(const PointCloud& from, const PointCloud& to) {
    double sum = 0.0;
    for (const Vec3& q : from.points) sum += naive_min_sqdist(q, to);
    return sum / static_cast<double>(from.size());
}

double naive_modified_chamfer(const CloudPair& pair, const RigidTransform& est) {
    const PointCloud x = apply_transform(pair.source, est);
    const PointCloud y_clean = apply_transform(pair.clean_source, pair.gt);
    const PointCloud x_clean = apply_transform(pair.clean_source, est);
    return naive_mean_min_sqdist(x, y_clean) + naive_mean_min_sqdist(pair.target, x_clean);
}

CloudPair toy_pair() {
    CloudPair pair;
    pair.clean_source.points = {{0, 0, 0}, {2, 0, 0}};
    pair.source = pair.clean_source;
    pair.target = pair.clean_source;
    pair.gt = RigidTransform::identity();
    return pair;
}

} // namespace

TEST_CASE("rot_error_iso reports degrees and is exactly zero on equal input") {
    CHECK(rot_error_iso(RotationMatrix::identity(), RotationMatrix::identity()) == 0.0);

    const RotationMatrix r = rot_z(deg_to_rad(37.0)) * rot_x(deg_to_rad(12.0));
    CHECK(rot_error_iso(r, r) == 0.0);

    CHECK(rot_error_iso(rot_z(deg_to_rad(10.0)), RotationMatrix::identity()) ==
          doctest::Approx(10.0).epsilon(1e-12));
    CHECK(rot_error_iso(r * rot_y(deg_to_rad(25.0)), r) ==
          doctest::Approx(25.0).epsilon(1e-9));
}

TEST_CASE("trans_error is the Euclidean gap") {
    CHECK(trans_error({1, 2, 3}, {1, 2, 3}) == 0.0);
    CHECK(trans_error({1, 0, 0}, {0, 0, 0}) == 1.0);
    CHECK(trans_error({0.25, 0, 0}, {0, 0, 0.25}) ==
          doctest::Approx(0.25 * std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("clean_l2 on a dyadic toy is exact") {
    CloudPair pair = toy_pair();

    CHECK(clean_l2(pair, pair.gt) == 0.0);

    // Pure dyadic translation offsets stay exact in floating point.
    RigidTransform est = RigidTransform::identity();
    est.translation = {0.25, 0, 0};
    CHECK(clean_l2(pair, est) == 0.25);

    est.translation = {0, 0.5, 0};
    CHECK(clean_l2(pair, est) == 0.5);
}

TEST_CASE("clean_l2 requires a clean source cloud") {
    CloudPair pair = toy_pair();
    pair.clean_source.points.clear();
    CHECK_THROWS_AS(clean_l2(pair, pair.gt), ValidationError);
}

TEST_CASE("modified_chamfer on a hand-solved toy") {
    CloudPair pair = toy_pair();
    RigidTransform est = RigidTransform::identity();
    est.translation = {1, 0, 0};
    // X = {(1,0,0),(3,0,0)} vs Yc = {(0,0,0),(2,0,0)}: per-point min sq = 1.
    // Y  = {(0,0,0),(2,0,0)} vs Xc = {(1,0,0),(3,0,0)}: per-point min sq = 1.
    CHECK(modified_chamfer(pair, est) == 2.0);
    CHECK(modified_chamfer(pair, est, /*plain=*/true) == 2.0);
}

TEST_CASE("modified_chamfer ignores missing coverage that plain chamfer penalizes") {
    CloudPair pair = toy_pair();
    pair.source.points = {{0, 0, 0}}; // observed source lost (2,0,0)
    const RigidTransform est = RigidTransform::identity();
    // Both observed clouds sit on the clean complete counterparts: zero.
    CHECK(modified_chamfer(pair, est) == 0.0);
    // Plain symmetric chamfer pays for the uncovered target point: 4 / 2.
    CHECK(modified_chamfer(pair, est, /*plain=*/true) == 2.0);
}

TEST_CASE("modified_chamfer validates its inputs") {
    CloudPair pair = toy_pair();
    pair.clean_source.points.clear();
    CHECK_THROWS_AS(modified_chamfer(pair, pair.gt), ValidationError);
    CHECK_NOTHROW(modified_chamfer(pair, pair.gt, /*plain=*/true));
    pair.source.points.clear();
    CHECK_THROWS_AS(modified_chamfer(pair, pair.gt, /*plain=*/true), ValidationError);
}

TEST_CASE("ground-truth estimate on an unperturbed pair zeroes all four metrics") {
    Rng shape_rng(5);
    const PointCloud shape = synth_shape(ShapeKind::torus, 1400, shape_rng);
    TransformSampleConfig tcfg;
    tcfg.max_angle = deg_to_rad(60.0);
    tcfg.max_translation = 0.5;
    tcfg.seed = 77;
    PerturbationConfig pcfg;
    pcfg.n_points = 1024;
    pcfg.seed = 78;
    const CloudPair pair = make_pair(shape, tcfg, pcfg);

    const EvalReport report = evaluate(pair, pair.gt);
    CHECK(report.rot_err_deg == 0.0);
    CHECK(report.trans_err == 0.0);
    CHECK(report.clean_l2 == 0.0);
    CHECK(report.mcd == 0.0);
    CHECK(modified_chamfer(pair, pair.gt, /*plain=*/true) == 0.0);
}

TEST_CASE("modified_chamfer matches a naive double-loop recomputation") {
    Rng shape_rng(6);
    const PointCloud shape = synth_shape(ShapeKind::helix, 1300, shape_rng);
    TransformSampleConfig tcfg;
    tcfg.max_angle = deg_to_rad(45.0);
    tcfg.max_translation = 0.3;
    tcfg.seed = 91;
    PerturbationConfig pcfg;
    pcfg.n_points = 600;
    pcfg.noise_sigma = 0.01;
    pcfg.noise_clip = 0.05;
    pcfg.crop_fraction = 0.8;
    pcfg.independent_resample = true;
    pcfg.seed = 92;
    const CloudPair pair = make_pair(shape, tcfg, pcfg);

    Rng est_rng(93);
    RigidTransform est;
    est.rotation = sample_rotation_haar(est_rng, deg_to_rad(30.0));
    est.translation = sample_translation(est_rng, 0.2);

    CHECK(modified_chamfer(pair, est) ==
          doctest::Approx(naive_modified_chamfer(pair, est)).epsilon(1e-12));
}

TEST_CASE("evaluate bundles the four individual metrics") {
    Rng shape_rng(7);
    const PointCloud shape = synth_shape(ShapeKind::sphere, 800, shape_rng);
    TransformSampleConfig tcfg;
    tcfg.max_angle = deg_to_rad(30.0);
    tcfg.max_translation = 0.2;
    tcfg.seed = 44;
    PerturbationConfig pcfg;
    pcfg.n_points = 500;
    pcfg.seed = 45;
    const CloudPair pair = make_pair(shape, tcfg, pcfg);

    RigidTransform est;
    est.rotation = rot_y(deg_to_rad(5.0)) * pair.gt.rotation;
    est.translation = pair.gt.translation + Vec3{0.01, -0.02, 0.03};

    const EvalReport r = evaluate(pair, est);
    CHECK(r.rot_err_deg == rot_error_iso(est.rotation, pair.gt.rotation));
    CHECK(r.trans_err == trans_error(est.translation, pair.gt.translation));
    CHECK(r.clean_l2 == clean_l2(pair, est));
    CHECK(r.mcd == modified_chamfer(pair, est));
    CHECK(r.rot_err_deg == doctest::Approx(5.0).epsilon(1e-9));
}
