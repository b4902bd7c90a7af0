#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lmmpose/geometry.hpp"
#include "lmmpose/laplacian.hpp"
#include "lmmpose/pose_repr.hpp"
#include "lmmpose/random.hpp"
#include "lmmpose/solvers.hpp"

namespace lmmpose {

// Variance assigned to noiseless oracle mixtures.
inline constexpr double kNoiselessSigma2 = 1e-18;
// Variance flagged on outlier points when sigma is honest (uniform draws in
// the radius-0.5 ball have roughly this spread).
inline constexpr double kHonestOutlierSigma2 = 0.32;

enum class PrimitiveKind { kBox, kCylinder, kEllipsoid, kComposite };

struct PrimitiveSpec {
    PrimitiveKind kind = PrimitiveKind::kBox;
    // Relative full extents before normalization; cylinders and composites
    // read (diameter, height, diameter).
    Eigen::Vector3d dims = Eigen::Vector3d::Ones();
};

// Surface point cloud in NOCS: centered at the tight-box center with the box
// diagonal scaled to exactly 1.
struct ShapeModel {
    std::string category;
    bool symmetric = false;
    Eigen::MatrixX3d nocs_points;
    Eigen::Vector3d s_norm = Eigen::Vector3d::Ones() / std::sqrt(3.0);
};

struct NoiseSpec {
    double b_low = 1e-3;   // Laplace scale range, log-uniform per point
    double b_high = 1e-2;
    double outlier_fraction = 0.0;
    bool sigma_honest = true;
    double miscalibration_factor = 1.0;  // multiplies sigma^2 when not honest
    double pixel_jitter = 0.0;           // px, uniform

    void validate() const {
        if (!(b_low > 0.0) || !(b_high >= b_low)) {
            throw std::invalid_argument("NoiseSpec: need 0 < b_low <= b_high");
        }
        if (outlier_fraction < 0.0 || outlier_fraction >= 1.0) {
            throw std::invalid_argument("NoiseSpec: outlier_fraction must be in [0, 1)");
        }
        if (!(miscalibration_factor > 0.0) || pixel_jitter < 0.0) {
            throw std::invalid_argument("NoiseSpec: factor must be > 0 and pixel_jitter >= 0");
        }
    }
};

struct SceneObject {
    int id = 0;
    std::string category;
    bool symmetric = false;
    Eigen::Vector3d s_norm = Eigen::Vector3d::Ones() / std::sqrt(3.0);
    Pose9D gt;
    DetectionBox detection;
    Eigen::MatrixX2d pixels;
    Eigen::MatrixX3d gt_nocs;
    MaskArray mask;
    LaplacianMixture mixture;
    std::vector<int> outlier_indices;
};

struct Scene {
    Intrinsics intrinsics;
    std::vector<SceneObject> objects;
};

struct SceneGenConfig {
    int n_objects = 1;
    double image_width = 640.0;
    double image_height = 480.0;
    double s_in = 256.0;
    double d_low = 0.1, d_high = 0.5;     // bounding-box diagonal range, m
    double z_low = 0.8, z_high = 2.5;     // object center depth range, m
    double center_margin_frac = 0.2;      // keeps projected centers off the border

    void validate() const {
        if (n_objects < 1) throw std::invalid_argument("SceneGenConfig: n_objects must be >= 1");
        if (!(image_width > 0.0) || !(image_height > 0.0) || !(s_in > 0.0)) {
            throw std::invalid_argument("SceneGenConfig: image dimensions must be positive");
        }
        if (!(d_low > 0.0) || !(d_high >= d_low) || !(z_low > 0.0) || !(z_high >= z_low)) {
            throw std::invalid_argument("SceneGenConfig: d and z ranges must be positive and ordered");
        }
        if (center_margin_frac < 0.0 || center_margin_frac >= 0.5) {
            throw std::invalid_argument("SceneGenConfig: center_margin_frac must be in [0, 0.5)");
        }
    }
};

namespace detail {

inline Eigen::Vector3d sample_box_surface(const Eigen::Vector3d& half, Rng& rng) {
    const Eigen::Vector3d areas(half.y() * half.z(), half.x() * half.z(), half.x() * half.y());
    const double u = rng.uniform() * areas.sum();
    const int axis = u < areas(0) ? 0 : (u < areas(0) + areas(1) ? 1 : 2);
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Eigen::Vector3d p;
    p(axis) = side * half(axis);
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    p(a) = rng.uniform(-half(a), half(a));
    p(b) = rng.uniform(-half(b), half(b));
    return p;
}

inline Eigen::Vector3d sample_cylinder_surface(double radius, double half_height, Rng& rng) {
    const double lateral = 2.0 * M_PI * radius * 2.0 * half_height;
    const double caps = 2.0 * M_PI * radius * radius;
    const double u = rng.uniform() * (lateral + caps);
    const double phi = 2.0 * M_PI * rng.uniform();
    if (u < lateral) {
        return {radius * std::cos(phi), rng.uniform(-half_height, half_height), radius * std::sin(phi)};
    }
    const double r = radius * std::sqrt(rng.uniform());
    const double y = rng.uniform() < 0.5 ? -half_height : half_height;
    return {r * std::cos(phi), y, r * std::sin(phi)};
}

inline Eigen::Vector3d sample_ellipsoid_surface(const Eigen::Vector3d& semi, Rng& rng) {
    Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
    const double n = dir.norm();
    if (n < 1e-12) dir = Eigen::Vector3d::UnitY();
    else dir /= n;
    return semi.cwiseProduct(dir);
}

}  // namespace detail

// Surface-samples a primitive and renormalizes it to the NOCS convention
// (tight box centered at origin, diagonal exactly 1).
inline ShapeModel gen_shape(const PrimitiveSpec& spec, const std::string& category, int n_points,
                            std::uint64_t seed) {
    if (n_points < 8) {
        throw std::invalid_argument("gen_shape: n_points must be >= 8");
    }
    Rng rng(seed);
    Eigen::MatrixX3d pts(n_points, 3);
    const Eigen::Vector3d half = 0.5 * spec.dims;
    bool symmetric = false;
    switch (spec.kind) {
        case PrimitiveKind::kBox:
            for (int i = 0; i < n_points; ++i) pts.row(i) = detail::sample_box_surface(half, rng);
            break;
        case PrimitiveKind::kCylinder:
            symmetric = true;
            for (int i = 0; i < n_points; ++i) {
                pts.row(i) = detail::sample_cylinder_surface(half.x(), half.y(), rng);
            }
            break;
        case PrimitiveKind::kEllipsoid:
            symmetric = std::abs(spec.dims.x() - spec.dims.z()) < 1e-12;
            for (int i = 0; i < n_points; ++i) pts.row(i) = detail::sample_ellipsoid_surface(half, rng);
            break;
        case PrimitiveKind::kComposite: {
            // Cylindrical body with a side handle; breaks the y symmetry.
            const int n_body = (n_points * 4) / 5;
            for (int i = 0; i < n_body; ++i) {
                pts.row(i) = detail::sample_cylinder_surface(half.x(), 0.8 * half.y(), rng);
            }
            const Eigen::Vector3d handle_half(0.25 * half.x(), 0.5 * half.y(), 0.2 * half.z());
            const Eigen::Vector3d handle_center(1.3 * half.x(), 0.0, 0.0);
            for (int i = n_body; i < n_points; ++i) {
                pts.row(i) = handle_center + detail::sample_box_surface(handle_half, rng);
            }
            break;
        }
    }

    const Eigen::RowVector3d lo = pts.colwise().minCoeff();
    const Eigen::RowVector3d hi = pts.colwise().maxCoeff();
    const Eigen::RowVector3d extent = hi - lo;
    const double diag = extent.norm();
    if (!(diag > 0.0)) {
        throw std::runtime_error("gen_shape: degenerate sampled shape");
    }
    ShapeModel shape;
    shape.category = category;
    shape.symmetric = symmetric;
    shape.nocs_points = (pts.rowwise() - (lo + 0.5 * extent)) / diag;
    shape.s_norm = extent.transpose() / diag;
    return shape;
}

// Forward model: Haar rotation, diagonal and frustum-sampled translation,
// exact projections, back-face visibility, padded 2D detection box, and a
// noiseless mixture (filled in by corrupt()).
inline Scene gen_scene(const std::vector<ShapeModel>& shapes, const SceneGenConfig& cfg,
                       const Intrinsics& k, std::uint64_t seed) {
    cfg.validate();
    if (shapes.empty()) {
        throw std::invalid_argument("gen_scene: no shapes given");
    }
    Rng rng(seed);
    Scene scene;
    scene.intrinsics = k;
    for (int obj_id = 0; obj_id < cfg.n_objects; ++obj_id) {
        const ShapeModel& shape = shapes[static_cast<std::size_t>(obj_id) % shapes.size()];
        const Eigen::Index n = shape.nocs_points.rows();

        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const Rotation r = random_rotation(rng);
            const double d = rng.uniform(cfg.d_low, cfg.d_high);
            const double u = rng.uniform(cfg.center_margin_frac * cfg.image_width,
                                         (1.0 - cfg.center_margin_frac) * cfg.image_width);
            const double v = rng.uniform(cfg.center_margin_frac * cfg.image_height,
                                         (1.0 - cfg.center_margin_frac) * cfg.image_height);
            const double z = rng.uniform(cfg.z_low, cfg.z_high);
            const Eigen::Vector3d t = backproject(k, {u, v}, z);

            Eigen::MatrixX3d cam(n, 3);
            Eigen::MatrixX2d pixels(n, 2);
            bool ok = true;
            for (Eigen::Index i = 0; i < n && ok; ++i) {
                const Eigen::Vector3d p = r * (d * shape.nocs_points.row(i).transpose()) + t;
                if (!(p.z() > 0.05)) {
                    ok = false;
                    break;
                }
                const Eigen::Vector2d uv = project(k, p);
                if (uv.x() < 0.0 || uv.x() > cfg.image_width || uv.y() < 0.0 || uv.y() > cfg.image_height) {
                    ok = false;
                    break;
                }
                cam.row(i) = p;
                pixels.row(i) = uv;
            }
            if (!ok) continue;

            MaskArray mask(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::Vector3d normal = shape.nocs_points.row(i).transpose();
                const double nn = normal.norm();
                normal = nn > 1e-9 ? Eigen::Vector3d(normal / nn) : Eigen::Vector3d::UnitY();
                mask(i) = (r * normal).dot(cam.row(i).transpose()) < 0.0;
            }
            if (mask.count() < 6) continue;

            const double u_lo = pixels.col(0).minCoeff(), u_hi = pixels.col(0).maxCoeff();
            const double v_lo = pixels.col(1).minCoeff(), v_hi = pixels.col(1).maxCoeff();

            SceneObject obj;
            obj.id = obj_id;
            obj.category = shape.category;
            obj.symmetric = shape.symmetric;
            obj.s_norm = shape.s_norm;
            obj.gt = Pose9D(r, t, d * shape.s_norm);
            obj.detection = DetectionBox(0.5 * (u_lo + u_hi), 0.5 * (v_lo + v_hi),
                                         1.2 * std::max(u_hi - u_lo, 1.0), 1.2 * std::max(v_hi - v_lo, 1.0),
                                         cfg.s_in);
            obj.pixels = pixels;
            obj.gt_nocs = shape.nocs_points;
            obj.mask = mask;
            LaplacianMap comp(shape.nocs_points, Eigen::MatrixX3d::Constant(n, 3, kNoiselessSigma2), mask);
            obj.mixture = LaplacianMixture(comp, comp);
            scene.objects.push_back(std::move(obj));
            placed = true;
        }
        if (!placed) {
            throw std::runtime_error("gen_scene: could not place object " + std::to_string(obj_id) +
                                     " after 1000 attempts");
        }
    }
    return scene;
}

// Applies the observation model: per-point log-uniform Laplace noise with
// matching (or miscalibrated) variances, a fixed count of uniform-ball
// outliers, independent draws per mixture component, and pixel jitter.
inline Scene corrupt(const Scene& scene, const NoiseSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    Scene out = scene;
    for (auto& obj : out.objects) {
        const Eigen::Index n = obj.gt_nocs.rows();
        const int n_out = static_cast<int>(spec.outlier_fraction * static_cast<double>(n));

        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t j = 0; j + 1 < order.size(); ++j) {
            std::swap(order[j], order[j + static_cast<std::size_t>(rng.index(order.size() - j))]);
        }
        obj.outlier_indices.assign(order.begin(), order.begin() + n_out);
        std::sort(obj.outlier_indices.begin(), obj.outlier_indices.end());
        MaskArray is_outlier = MaskArray::Constant(n, false);
        for (const int i : obj.outlier_indices) is_outlier(i) = true;

        for (int c = 0; c < 2; ++c) {
            LaplacianMap& map = obj.mixture.components[static_cast<std::size_t>(c)];
            map.mu.resize(n, 3);
            map.sigma2.resize(n, 3);
            map.mask = obj.mask;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double b = rng.log_uniform(spec.b_low, spec.b_high);
                if (is_outlier(i)) {
                    Eigen::Vector3d p;
                    do {
                        p = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
                    } while (p.norm() > 0.5);
                    map.mu.row(i) = p;
                    const double s2 = spec.sigma_honest ? kHonestOutlierSigma2
                                                        : 2.0 * b * b * spec.miscalibration_factor;
                    map.sigma2.row(i).setConstant(std::max(s2, kSigmaFloor));
                } else {
                    for (int a = 0; a < 3; ++a) map.mu(i, a) = rng.laplace(obj.gt_nocs(i, a), b);
                    const double s2 = 2.0 * b * b * (spec.sigma_honest ? 1.0 : spec.miscalibration_factor);
                    map.sigma2.row(i).setConstant(std::max(s2, kSigmaFloor));
                }
            }
        }
        if (spec.pixel_jitter > 0.0) {
            for (Eigen::Index i = 0; i < n; ++i) {
                obj.pixels(i, 0) += rng.uniform(-spec.pixel_jitter, spec.pixel_jitter);
                obj.pixels(i, 1) += rng.uniform(-spec.pixel_jitter, spec.pixel_jitter);
            }
        }
        obj.mixture.validate();
    }
    return out;
}

// Replaces the pixels of floor(fraction * n_visible) visible points by the
// pixels of other corrupted points (a cyclic shuffle), producing gross 2D
// outliers. Returns the affected indices.
inline std::vector<Eigen::Index> gross_pixel_outliers(SceneObject& obj, double fraction, std::uint64_t seed) {
    if (fraction < 0.0 || fraction >= 1.0) {
        throw std::invalid_argument("gross_pixel_outliers: fraction must be in [0, 1)");
    }
    Rng rng(seed);
    auto vis = detail::visible_indices(obj.mask);
    const std::size_t k = static_cast<std::size_t>(fraction * static_cast<double>(vis.size()));
    if (k < 2) return {};
    for (std::size_t j = 0; j + 1 < vis.size(); ++j) {
        std::swap(vis[j], vis[j + static_cast<std::size_t>(rng.index(vis.size() - j))]);
    }
    std::vector<Eigen::Index> chosen(vis.begin(), vis.begin() + static_cast<std::ptrdiff_t>(k));
    const Eigen::Vector2d first = obj.pixels.row(chosen[0]);
    for (std::size_t j = 0; j + 1 < chosen.size(); ++j) {
        obj.pixels.row(chosen[j]) = obj.pixels.row(chosen[j + 1]);
    }
    obj.pixels.row(chosen[k - 1]) = first;
    return chosen;
}

inline Eigen::MatrixX3d camera_frame_points(const SceneObject& obj) {
    const double d = obj.gt.size.norm();
    Eigen::MatrixX3d cam(obj.gt_nocs.rows(), 3);
    for (Eigen::Index i = 0; i < obj.gt_nocs.rows(); ++i) {
        cam.row(i) = obj.gt.rotation * (d * obj.gt_nocs.row(i).transpose()) + obj.gt.translation;
    }
    return cam;
}

// 3D-3D baseline: aligns the fused predicted NOCS means to oracle
// camera-frame points (synthetic data only). The recovered scale acts as the
// predicted diagonal.
inline Similarity umeyama_oracle(const SceneObject& obj) {
    const FusedMap fused = fuse(obj.mixture);
    const auto vis = detail::visible_indices(obj.mask);
    if (vis.size() < 3) {
        throw std::runtime_error("umeyama_oracle: need at least 3 visible points");
    }
    const Eigen::MatrixX3d cam = camera_frame_points(obj);
    Eigen::MatrixX3d src(static_cast<Eigen::Index>(vis.size()), 3);
    Eigen::MatrixX3d dst(static_cast<Eigen::Index>(vis.size()), 3);
    for (std::size_t j = 0; j < vis.size(); ++j) {
        src.row(static_cast<Eigen::Index>(j)) = fused.mu.row(vis[j]);
        dst.row(static_cast<Eigen::Index>(j)) = cam.row(vis[j]);
    }
    return umeyama_align(src, dst, true);
}

inline CorrespondenceSet correspondences(const SceneObject& obj, const Intrinsics& k) {
    CorrespondenceSet corr;
    corr.pixels = obj.pixels;
    corr.mixture = obj.mixture;
    corr.intrinsics = k;
    return corr;
}

// Mean ground-truth normalized size per category over all scenes.
inline SizeCodebook compute_codebook(const std::vector<Scene>& scenes) {
    std::vector<std::pair<std::string, Eigen::Vector3d>> samples;
    for (const auto& scene : scenes) {
        for (const auto& obj : scene.objects) {
            samples.emplace_back(obj.category, normalize_pose(obj.gt).first.s_norm);
        }
    }
    return compute_codebook(samples);
}

}  // namespace lmmpose
