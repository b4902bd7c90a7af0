#include <catch2/catch_amalgamated.hpp>

#include "lmmpose/box_iou.hpp"
#include "lmmpose/random.hpp"

using namespace lmmpose;

namespace {

OrientedBox random_box(Rng& rng, double center_half = 0.4, double ext_lo = 0.3, double ext_hi = 1.6) {
    return OrientedBox(
        random_rotation(rng),
        Eigen::Vector3d(rng.uniform(-center_half, center_half), rng.uniform(-center_half, center_half),
                        rng.uniform(-center_half, center_half)),
        Eigen::Vector3d(rng.uniform(ext_lo, ext_hi), rng.uniform(ext_lo, ext_hi), rng.uniform(ext_lo, ext_hi)));
}

}  // namespace

TEST_CASE("exact IoU hand cases") {
    const OrientedBox unit(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones());
    SECTION("identical boxes") {
        CHECK(box_iou_exact(unit, unit) == Catch::Approx(1.0).margin(1e-9));
        Rng rng(61);
        const OrientedBox b = random_box(rng);
        CHECK(box_iou_exact(b, b) == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("disjoint boxes") {
        const OrientedBox far(Rotation::identity(), Eigen::Vector3d(10, 0, 0), Eigen::Vector3d::Ones());
        CHECK(box_iou_exact(unit, far) == 0.0);
    }
    SECTION("unit cubes offset by 0.5: intersection 0.5, IoU 1/3") {
        const OrientedBox shifted(Rotation::identity(), Eigen::Vector3d(0.5, 0, 0), Eigen::Vector3d::Ones());
        CHECK(box_intersection_volume(unit, shifted) == Catch::Approx(0.5).margin(1e-9));
        CHECK(box_iou_exact(unit, shifted) == Catch::Approx(1.0 / 3.0).margin(1e-9));
    }
    SECTION("analytic rotated case: 45 degree box inside a unit box") {
        // A box rotated 45 deg about z with xy side sqrt(2)/2 has its xy
        // cross-section exactly inscribed in the unit square.
        const double s = std::sqrt(2.0) / 2.0;
        const OrientedBox rot(rot_z(deg2rad(45.0)), Eigen::Vector3d::Zero(), Eigen::Vector3d(s, s, 1.0));
        const double inter = box_intersection_volume(unit, rot);
        CHECK(inter == Catch::Approx(0.5).margin(1e-9));  // inscribed square area 1/2
        CHECK(box_iou_exact(unit, rot) == Catch::Approx(0.5 / (1.0 + 0.5 - 0.5)).margin(1e-9));
    }
    SECTION("containment") {
        const OrientedBox small(rot_y(0.3), Eigen::Vector3d::Zero(), Eigen::Vector3d(0.2, 0.2, 0.2));
        CHECK(box_intersection_volume(unit, small) == Catch::Approx(small.volume()).margin(1e-12));
        CHECK(box_intersection_volume(small, unit) == Catch::Approx(small.volume()).margin(1e-12));
    }
}

TEST_CASE("exact IoU is symmetric") {
    Rng rng(62);
    for (int i = 0; i < 100; ++i) {
        const OrientedBox a = random_box(rng);
        const OrientedBox b = random_box(rng);
        CHECK(box_iou_exact(a, b) == Catch::Approx(box_iou_exact(b, a)).margin(1e-9));
    }
}

TEST_CASE("Monte Carlo agrees with exact clipping") {
    SECTION("identical boxes") {
        Rng rng(63);
        const OrientedBox b = random_box(rng);
        CHECK(box_iou_mc(b, b, 1000, 1) == 1.0);
    }
    SECTION("the 1/3 case") {
        const OrientedBox unit(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones());
        const OrientedBox shifted(Rotation::identity(), Eigen::Vector3d(0.5, 0, 0), Eigen::Vector3d::Ones());
        CHECK(box_iou_mc(unit, shifted, 1000000, 2) == Catch::Approx(1.0 / 3.0).margin(0.005));
    }
    SECTION("random pairs at moderate sample counts") {
        Rng rng(64);
        double worst = 0.0;
        for (int i = 0; i < 25; ++i) {
            const OrientedBox a = random_box(rng);
            const OrientedBox b = random_box(rng);
            worst = std::max(worst,
                             std::abs(box_iou_exact(a, b) - box_iou_mc(a, b, 100000, 1000 + i)));
        }
        CHECK(worst < 0.015);
    }
    SECTION("symmetric in arguments within noise") {
        Rng rng(65);
        const OrientedBox a = random_box(rng);
        const OrientedBox b = random_box(rng);
        CHECK(std::abs(box_iou_mc(a, b, 200000, 7) - box_iou_mc(b, a, 200000, 8)) < 0.02);
    }
}

TEST_CASE("symmetry-aware IoU") {
    // Tall cylinder-like box: square xz cross-section.
    const OrientedBox gt(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d(0.4, 1.0, 0.4));
    SECTION("y-rotated prediction matches under symmetry") {
        const OrientedBox pred(rot_y(deg2rad(90.0)), Eigen::Vector3d::Zero(), Eigen::Vector3d(0.4, 1.0, 0.4));
        CHECK(symmetry_iou(pred, gt, true, 100) == Catch::Approx(1.0).margin(1e-6));
        const OrientedBox pred37(rot_y(deg2rad(37.0)), Eigen::Vector3d::Zero(), Eigen::Vector3d(0.4, 1.0, 0.4));
        // 37 deg is off the n_rot=100 grid; nearest grid angle is within 1.8 deg.
        CHECK(symmetry_iou(pred37, gt, true, 100) > 0.95);
    }
    SECTION("without symmetry the same prediction scores lower") {
        const OrientedBox pred(rot_y(deg2rad(45.0)), Eigen::Vector3d::Zero(), Eigen::Vector3d(0.4, 1.0, 0.4));
        CHECK(symmetry_iou(pred, gt, false, 100) < 1.0 - 1e-3);
    }
    SECTION("n_rot = 1 degrades to plain IoU") {
        Rng rng(66);
        const OrientedBox pred = random_box(rng);
        CHECK(symmetry_iou(pred, gt, true, 1) == Catch::Approx(box_iou_exact(pred, gt)).margin(1e-12));
    }
    SECTION("invariant under grid rotations of the prediction") {
        Rng rng(67);
        const OrientedBox pred = random_box(rng);
        const int n_rot = 20;
        const double base = symmetry_iou(pred, gt, true, n_rot);
        for (const int j : {1, 5, 13}) {
            const double theta = 2.0 * M_PI * j / n_rot;
            const OrientedBox rotated(pred.rotation * rot_y(theta), pred.center, pred.extents);
            CHECK(symmetry_iou(rotated, gt, true, n_rot) == Catch::Approx(base).margin(1e-6));
        }
    }
}

TEST_CASE("intersection volume cross-checked against MC on thin and touching boxes") {
    SECTION("face-touching boxes have zero volume overlap") {
        const OrientedBox a(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones());
        const OrientedBox b(Rotation::identity(), Eigen::Vector3d(1.0, 0, 0), Eigen::Vector3d::Ones());
        CHECK(box_intersection_volume(a, b) == Catch::Approx(0.0).margin(1e-9));
        CHECK(box_iou_exact(a, b) == Catch::Approx(0.0).margin(1e-9));
    }
    SECTION("thin slab against cube") {
        const OrientedBox cube(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones());
        const OrientedBox slab(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d(2.0, 0.01, 2.0));
        CHECK(box_intersection_volume(cube, slab) == Catch::Approx(0.01).margin(1e-12));
    }
}
