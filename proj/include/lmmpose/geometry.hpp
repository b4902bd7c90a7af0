#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "lmmpose/random.hpp"

namespace lmmpose {

inline constexpr double kRotationTol = 1e-9;
inline constexpr double kRotationRenormTol = 1e-6;

inline double deg2rad(double deg) { return deg * M_PI / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / M_PI; }

// Pinhole camera intrinsics (pixels).
struct Intrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    Intrinsics() = default;
    Intrinsics(double fx_, double fy_, double cx_, double cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
        if (!(fx > 0.0) || !(fy > 0.0)) {
            throw std::invalid_argument("Intrinsics: focal lengths must be positive");
        }
    }

    Eigen::Matrix3d matrix() const {
        Eigen::Matrix3d k;
        k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
        return k;
    }
};

// Proper rotation matrix. Construction enforces orthonormality and det = +1
// within 1e-9; inputs off by up to 1e-6 are renormalized through the polar
// factor, anything worse is rejected.
class Rotation {
  public:
    Rotation() : m_(Eigen::Matrix3d::Identity()) {}

    explicit Rotation(const Eigen::Matrix3d& m) {
        const double orth_err = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        const double det_err = std::abs(m.determinant() - 1.0);
        if (orth_err <= kRotationTol && det_err <= kRotationTol) {
            m_ = m;
            return;
        }
        if (orth_err <= kRotationRenormTol && det_err <= kRotationRenormTol) {
            Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
            Eigen::Matrix3d uvt = svd.matrixU() * svd.matrixV().transpose();
            Eigen::Vector3d corr(1.0, 1.0, uvt.determinant() < 0.0 ? -1.0 : 1.0);
            m_ = svd.matrixU() * corr.asDiagonal() * svd.matrixV().transpose();
            return;
        }
        std::ostringstream oss;
        oss << "Rotation: matrix is not a rotation (orthonormality error " << orth_err
            << ", det error " << det_err << ")";
        throw std::invalid_argument(oss.str());
    }

    static Rotation identity() { return Rotation(); }

    const Eigen::Matrix3d& matrix() const { return m_; }
    Eigen::Vector3d col(int i) const { return m_.col(i); }

    Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }
    Rotation operator*(const Rotation& other) const { return Rotation(Eigen::Matrix3d(m_ * other.m_)); }

  private:
    Eigen::Matrix3d m_;
};

// Metric 9DoF pose: rotation, translation (m), size (m, full extents).
struct Pose9D {
    Rotation rotation;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Ones();

    Pose9D() = default;
    Pose9D(const Rotation& r, const Eigen::Vector3d& t, const Eigen::Vector3d& s)
        : rotation(r), translation(t), size(s) {
        if (!(size.minCoeff() > 0.0)) {
            throw std::invalid_argument("Pose9D: size components must be positive");
        }
    }
};

// Pose with size and translation normalized by the bounding-box diagonal.
// The normalized size always sits on the unit sphere.
struct ScaleAgnosticPose {
    Rotation rotation;
    Eigen::Vector3d t_norm = Eigen::Vector3d::Zero();
    Eigen::Vector3d s_norm = Eigen::Vector3d::Ones() / std::sqrt(3.0);

    ScaleAgnosticPose() = default;
    ScaleAgnosticPose(const Rotation& r, const Eigen::Vector3d& t, const Eigen::Vector3d& s)
        : rotation(r), t_norm(t), s_norm(s) {
        if (std::abs(s_norm.norm() - 1.0) > kRotationTol) {
            throw std::invalid_argument("ScaleAgnosticPose: s_norm must have unit norm");
        }
        if (!(s_norm.minCoeff() > 0.0)) {
            throw std::invalid_argument("ScaleAgnosticPose: s_norm components must be positive");
        }
    }
};

inline Eigen::Vector2d project(const Intrinsics& k, const Eigen::Vector3d& p) {
    if (!(p.z() > 0.0)) {
        std::ostringstream oss;
        oss << "project: non-positive depth for point (" << p.x() << ", " << p.y() << ", " << p.z() << ")";
        throw std::invalid_argument(oss.str());
    }
    return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

inline Eigen::Vector3d backproject(const Intrinsics& k, const Eigen::Vector2d& uv, double z) {
    if (!(z > 0.0)) {
        throw std::invalid_argument("backproject: depth must be positive");
    }
    return {z * (uv.x() - k.cx) / k.fx, z * (uv.y() - k.cy) / k.fy, z};
}

// Builds a rotation from its first two (possibly unnormalized, non-orthogonal)
// columns by Gram-Schmidt; the third column is the cross product.
inline Rotation rotation_from_columns(const Eigen::Vector3d& r_x, const Eigen::Vector3d& r_y) {
    const double nx = r_x.norm();
    if (nx < 1e-12) {
        throw std::invalid_argument("rotation_from_columns: first column is zero");
    }
    const Eigen::Vector3d c0 = r_x / nx;
    Eigen::Vector3d c1 = r_y - c0.dot(r_y) * c0;
    const double ny = c1.norm();
    if (ny < 1e-12 * std::max(1.0, r_y.norm())) {
        throw std::invalid_argument("rotation_from_columns: columns are parallel or second column is zero");
    }
    c1 /= ny;
    Eigen::Matrix3d m;
    m.col(0) = c0;
    m.col(1) = c1;
    m.col(2) = c0.cross(c1);
    return Rotation(m);
}

inline double geodesic_angle_deg(const Rotation& r1, const Rotation& r2) {
    const double tr = (r1.matrix() * r2.matrix().transpose()).trace();
    const double c = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
    return rad2deg(std::acos(c));
}

// Same geodesic distance through asin of the Frobenius gap; acos loses ~8
// digits near identity, this stays exact for near-identical rotations.
inline double geodesic_angle_stable_deg(const Rotation& r1, const Rotation& r2) {
    const double f = (r1.matrix() - r2.matrix()).norm() / (2.0 * std::sqrt(2.0));
    if (f >= 1.0) return 180.0;
    const double theta = 2.0 * std::asin(f);
    return rad2deg(theta);
}

inline Rotation rot_x(double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    Eigen::Matrix3d m;
    m << 1, 0, 0, 0, c, -s, 0, s, c;
    return Rotation(m);
}

inline Rotation rot_y(double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    Eigen::Matrix3d m;
    m << c, 0, s, 0, 1, 0, -s, 0, c;
    return Rotation(m);
}

inline Rotation rot_z(double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    Eigen::Matrix3d m;
    m << c, -s, 0, s, c, 0, 0, 0, 1;
    return Rotation(m);
}

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

// Rodrigues exponential map so(3) -> SO(3).
inline Rotation exp_so3(const Eigen::Vector3d& omega) {
    const double theta = omega.norm();
    const Eigen::Matrix3d w = skew(omega);
    Eigen::Matrix3d m;
    if (theta < 1e-9) {
        m = Eigen::Matrix3d::Identity() + w + 0.5 * w * w;
    } else {
        m = Eigen::Matrix3d::Identity() + std::sin(theta) / theta * w +
            (1.0 - std::cos(theta)) / (theta * theta) * w * w;
    }
    return Rotation(m);
}

// Haar-uniform random rotation from a normalized Gaussian quaternion.
inline Rotation random_rotation(Rng& rng) {
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Eigen::Matrix3d m;
    m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return Rotation(m);
}

}  // namespace lmmpose
