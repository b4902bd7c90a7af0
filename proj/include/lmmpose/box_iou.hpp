#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lmmpose/geometry.hpp"
#include "lmmpose/random.hpp"

namespace lmmpose {

// Rotated 3D box; extents are full side lengths.
struct OrientedBox {
    Rotation rotation;
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d extents = Eigen::Vector3d::Ones();

    OrientedBox() = default;
    OrientedBox(const Rotation& r, const Eigen::Vector3d& c, const Eigen::Vector3d& e)
        : rotation(r), center(c), extents(e) {
        if (!(extents.minCoeff() > 0.0)) {
            throw std::invalid_argument("OrientedBox: extents must be positive");
        }
    }

    double volume() const { return extents.prod(); }

    bool contains(const Eigen::Vector3d& p) const {
        const Eigen::Vector3d q = rotation.matrix().transpose() * (p - center);
        return (q.cwiseAbs().array() <= 0.5 * extents.array()).all();
    }

    std::array<Eigen::Vector3d, 8> corners() const {
        std::array<Eigen::Vector3d, 8> out;
        const Eigen::Vector3d h = 0.5 * extents;
        int n = 0;
        for (const double sx : {-1.0, 1.0})
            for (const double sy : {-1.0, 1.0})
                for (const double sz : {-1.0, 1.0})
                    out[static_cast<std::size_t>(n++)] =
                        center + rotation.matrix() * Eigen::Vector3d(sx * h.x(), sy * h.y(), sz * h.z());
        return out;
    }
};

namespace detail {

using Polygon = std::vector<Eigen::Vector3d>;

inline constexpr double kClipEps = 1e-12;

// Six quad faces with outward CCW winding.
inline std::vector<Polygon> box_faces(const OrientedBox& box) {
    const Eigen::Matrix3d r = box.rotation.matrix();
    const Eigen::Vector3d h = 0.5 * box.extents;
    std::vector<Polygon> faces;
    faces.reserve(6);
    // For each face: normal axis, then the two tangent axes with t1 x t2 = n.
    static constexpr int tangents[3][2] = {{1, 2}, {2, 0}, {0, 1}};
    for (int axis = 0; axis < 3; ++axis) {
        for (const double sign : {1.0, -1.0}) {
            const int ta = sign > 0 ? tangents[axis][0] : tangents[axis][1];
            const int tb = sign > 0 ? tangents[axis][1] : tangents[axis][0];
            const Eigen::Vector3d n = sign * h(axis) * r.col(axis);
            const Eigen::Vector3d u = h(ta) * r.col(ta);
            const Eigen::Vector3d v = h(tb) * r.col(tb);
            faces.push_back({box.center + n - u - v, box.center + n + u - v,
                             box.center + n + u + v, box.center + n - u + v});
        }
    }
    return faces;
}

// Sutherland-Hodgman clip of one polygon against n.p <= off; intersection
// points are appended to cap_points.
inline Polygon clip_polygon(const Polygon& poly, const Eigen::Vector3d& n, double off,
                            std::vector<Eigen::Vector3d>& cap_points) {
    Polygon out;
    const std::size_t m = poly.size();
    for (std::size_t i = 0; i < m; ++i) {
        const Eigen::Vector3d& a = poly[i];
        const Eigen::Vector3d& b = poly[(i + 1) % m];
        const double da = n.dot(a) - off;
        const double db = n.dot(b) - off;
        const bool a_in = da <= kClipEps;
        const bool b_in = db <= kClipEps;
        if (a_in) out.push_back(a);
        if (a_in != b_in && std::abs(da - db) > 0.0) {
            const Eigen::Vector3d p = a + (da / (da - db)) * (b - a);
            out.push_back(p);
            cap_points.push_back(p);
        }
    }
    return out;
}

// Order the cap ring by angle around its centroid and orient it with the
// outward normal n.
inline Polygon build_cap(std::vector<Eigen::Vector3d> points, const Eigen::Vector3d& n, double scale) {
    // Dedupe near-identical points.
    std::vector<Eigen::Vector3d> uniq;
    for (const auto& p : points) {
        bool dup = false;
        for (const auto& q : uniq) {
            if ((p - q).norm() < 1e-9 * std::max(scale, 1.0)) {
                dup = true;
                break;
            }
        }
        if (!dup) uniq.push_back(p);
    }
    if (uniq.size() < 3) return {};
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : uniq) centroid += p;
    centroid /= static_cast<double>(uniq.size());

    Eigen::Vector3d u = n.cross(std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY());
    u.normalize();
    const Eigen::Vector3d v = n.cross(u).normalized();  // (u, v, n) right-handed
    std::sort(uniq.begin(), uniq.end(), [&](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
        const Eigen::Vector3d pa = a - centroid, pb = b - centroid;
        return std::atan2(pa.dot(v), pa.dot(u)) < std::atan2(pb.dot(v), pb.dot(u));
    });
    // Sorted CCW in the (u, v) frame whose cross product points along n, so
    // the fan normal is outward; reverse if numerics disagree.
    if (uniq.size() >= 3) {
        const Eigen::Vector3d fan = (uniq[1] - uniq[0]).cross(uniq[2] - uniq[0]);
        if (fan.dot(n) < 0.0) std::reverse(uniq.begin(), uniq.end());
    }
    return uniq;
}

inline double polyhedron_volume(const std::vector<Polygon>& faces) {
    double six_v = 0.0;
    for (const auto& face : faces) {
        for (std::size_t i = 1; i + 1 < face.size(); ++i) {
            six_v += face[0].dot(face[i].cross(face[i + 1]));
        }
    }
    return six_v / 6.0;
}

}  // namespace detail

// Intersection volume by clipping box a against the 6 face half-spaces of b.
inline double box_intersection_volume(const OrientedBox& a, const OrientedBox& b) {
    std::vector<detail::Polygon> faces = detail::box_faces(a);
    const Eigen::Matrix3d rb = b.rotation.matrix();
    const double scale = std::max(a.extents.maxCoeff(), b.extents.maxCoeff());
    for (int axis = 0; axis < 3; ++axis) {
        for (const double sign : {1.0, -1.0}) {
            const Eigen::Vector3d n = sign * rb.col(axis);
            const double off = n.dot(b.center) + 0.5 * b.extents(axis);
            std::vector<Eigen::Vector3d> cap_points;
            std::vector<detail::Polygon> next;
            next.reserve(faces.size() + 1);
            for (const auto& face : faces) {
                detail::Polygon clipped = detail::clip_polygon(face, n, off, cap_points);
                if (clipped.size() >= 3) next.push_back(std::move(clipped));
            }
            detail::Polygon cap = detail::build_cap(std::move(cap_points), n, scale);
            if (cap.size() >= 3) next.push_back(std::move(cap));
            faces = std::move(next);
            if (faces.empty()) return 0.0;
        }
    }
    return std::max(detail::polyhedron_volume(faces), 0.0);
}

inline double box_iou_exact(const OrientedBox& a, const OrientedBox& b) {
    const double inter = box_intersection_volume(a, b);
    const double uni = a.volume() + b.volume() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

// Monte Carlo cross-check: rejection sampling inside the union's AABB.
inline double box_iou_mc(const OrientedBox& a, const OrientedBox& b, long long n_samples,
                         std::uint64_t seed) {
    if (n_samples < 1) {
        throw std::invalid_argument("box_iou_mc: n_samples must be >= 1");
    }
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const auto* box : {&a, &b}) {
        for (const auto& c : box->corners()) {
            lo = lo.cwiseMin(c);
            hi = hi.cwiseMax(c);
        }
    }
    Rng rng(seed);
    long long in_a = 0, in_b = 0, in_both = 0;
    for (long long s = 0; s < n_samples; ++s) {
        const Eigen::Vector3d p(rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()),
                                rng.uniform(lo.z(), hi.z()));
        const bool pa = a.contains(p);
        const bool pb = b.contains(p);
        in_a += pa;
        in_b += pb;
        in_both += pa && pb;
    }
    const long long uni = in_a + in_b - in_both;
    return uni > 0 ? static_cast<double>(in_both) / static_cast<double>(uni) : 0.0;
}

// IoU maximized over rotations of pred about its own y axis, for categories
// with rotational symmetry.
inline double symmetry_iou(const OrientedBox& pred, const OrientedBox& gt, bool symmetric, int n_rot = 100) {
    if (!symmetric) return box_iou_exact(pred, gt);
    if (n_rot < 1) {
        throw std::invalid_argument("symmetry_iou: n_rot must be >= 1 for symmetric objects");
    }
    double best = 0.0;
    for (int j = 0; j < n_rot; ++j) {
        const double theta = 2.0 * M_PI * j / n_rot;
        const OrientedBox rotated(pred.rotation * rot_y(theta), pred.center, pred.extents);
        best = std::max(best, box_iou_exact(rotated, gt));
    }
    return best;
}

}  // namespace lmmpose
