#include <catch2/catch_amalgamated.hpp>

#include "lmmpose/geometry.hpp"
#include "lmmpose/random.hpp"

using namespace lmmpose;

TEST_CASE("project matches the pinhole formula") {
    const Intrinsics k1(1.0, 1.0, 0.0, 0.0);
    CHECK(project(k1, {0.0, 0.0, 1.0}).isZero(0.0));

    const Intrinsics k(500.0, 500.0, 320.0, 240.0);
    const Eigen::Vector2d uv = project(k, {2.0, 4.0, 2.0});
    CHECK(uv.x() == Catch::Approx(820.0).margin(1e-12));
    CHECK(uv.y() == Catch::Approx(1240.0).margin(1e-12));

    CHECK_THROWS_AS(project(k, {0.0, 0.0, -1.0}), std::invalid_argument);
    CHECK_THROWS_WITH(project(k, {0.0, 0.0, -1.0}), Catch::Matchers::ContainsSubstring("-1"));
}

TEST_CASE("backproject inverts project") {
    const Intrinsics k1(1.0, 1.0, 0.0, 0.0);
    CHECK((backproject(k1, {0.0, 0.0}, 1.0) - Eigen::Vector3d(0, 0, 1)).norm() < 1e-15);

    const Intrinsics k(500.0, 500.0, 320.0, 240.0);
    CHECK((backproject(k, {820.0, 1240.0}, 2.0) - Eigen::Vector3d(2, 4, 2)).norm() < 1e-12);
    CHECK_THROWS_AS(backproject(k, {10.0, 10.0}, 0.0), std::invalid_argument);

    Rng rng(7);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Eigen::Vector3d p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 10.0));
        worst = std::max(worst, (backproject(k, project(k, p), p.z()) - p).norm());
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("rotation_from_columns performs Gram-Schmidt") {
    CHECK(geodesic_angle_deg(rotation_from_columns({1, 0, 0}, {0, 1, 0}), Rotation::identity()) == 0.0);
    // Scaling and in-plane shear are removed.
    CHECK(geodesic_angle_deg(rotation_from_columns({2, 0, 0}, {0.5, 3, 0}), Rotation::identity()) <
          1e-12);

    const Rotation r = rotation_from_columns({1, 1, 0}, {0, 0, 1});
    const double s = 1.0 / std::sqrt(2.0);
    Eigen::Matrix3d expected;
    expected.col(0) = Eigen::Vector3d(s, s, 0);
    expected.col(1) = Eigen::Vector3d(0, 0, 1);
    expected.col(2) = Eigen::Vector3d(s, -s, 0);
    CHECK((r.matrix() - expected).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(rotation_from_columns({0, 0, 0}, {0, 1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(rotation_from_columns({1, 0, 0}, {2, 0, 0}), std::invalid_argument);
}

TEST_CASE("rotation_from_columns stays orthonormal for nearly parallel input") {
    Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector3d rx(rng.normal(), rng.normal(), rng.normal());
        Eigen::Vector3d perp = rx.cross(Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()));
        perp.normalize();
        // Angle about 1e-4 rad away from rx.
        const Eigen::Vector3d ry = rx.normalized() + 1e-4 * perp;
        const Rotation r = rotation_from_columns(rx, ry);
        CHECK((r.matrix().transpose() * r.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
              1e-9);
        CHECK(std::abs(r.matrix().determinant() - 1.0) < 1e-9);
    }
}

TEST_CASE("geodesic angle basics") {
    CHECK(geodesic_angle_deg(Rotation::identity(), Rotation::identity()) == 0.0);
    CHECK(geodesic_angle_deg(Rotation::identity(), rot_x(deg2rad(30))) == Catch::Approx(30.0).margin(1e-9));
    CHECK(geodesic_angle_deg(rot_y(deg2rad(10)), rot_y(deg2rad(-10))) == Catch::Approx(20.0).margin(1e-9));
}

TEST_CASE("geodesic angle satisfies the triangle inequality") {
    Rng rng(23);
    for (int i = 0; i < 300; ++i) {
        const Rotation a = random_rotation(rng);
        const Rotation b = random_rotation(rng);
        const Rotation c = random_rotation(rng);
        CHECK(geodesic_angle_deg(a, c) <= geodesic_angle_deg(a, b) + geodesic_angle_deg(b, c) + 1e-9);
    }
}

TEST_CASE("rotation constructor rejects and renormalizes") {
    Eigen::Matrix3d bad = Eigen::Matrix3d::Identity();
    bad(0, 0) = 1.5;
    CHECK_THROWS_AS(Rotation(bad), std::invalid_argument);

    // Reflection is rejected, not silently repaired.
    Eigen::Matrix3d reflect = Eigen::Matrix3d::Identity();
    reflect(2, 2) = -1.0;
    CHECK_THROWS_AS(Rotation(reflect), std::invalid_argument);

    // Slight drift inside the renormalization band comes back orthonormal.
    Rng rng(5);
    const Rotation base = random_rotation(rng);
    Eigen::Matrix3d drift = base.matrix();
    drift(0, 1) += 3e-7;
    const Rotation fixed(drift);
    CHECK((fixed.matrix().transpose() * fixed.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <
          1e-9);
}

TEST_CASE("pose type invariants") {
    CHECK_THROWS_AS(Pose9D(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 0, 1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(ScaleAgnosticPose(Rotation::identity(), Eigen::Vector3d::Zero(), Eigen::Vector3d(1, 1, 1)),
                    std::invalid_argument);
    const Eigen::Vector3d s = Eigen::Vector3d(1, 2, 2).normalized();
    CHECK_NOTHROW(ScaleAgnosticPose(Rotation::identity(), Eigen::Vector3d::Zero(), s));
}
