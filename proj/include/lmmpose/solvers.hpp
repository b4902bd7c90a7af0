#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lmmpose/geometry.hpp"
#include "lmmpose/laplacian.hpp"
#include "lmmpose/random.hpp"

namespace lmmpose {

// 2D pixels plus the NOCS mixture they correspond to, under one camera.
struct CorrespondenceSet {
    Eigen::MatrixX2d pixels;
    LaplacianMixture mixture;
    Intrinsics intrinsics;

    void validate() const {
        mixture.validate();
        if (pixels.rows() != mixture.size()) {
            throw std::invalid_argument("CorrespondenceSet: pixels and mixture must share N");
        }
        if (!pixels.allFinite()) {
            throw std::invalid_argument("CorrespondenceSet: pixels must be finite");
        }
    }
};

enum class RobustKernel { kL1, kL2 };

struct SolverConfig {
    int max_iterations = 100;
    double convergence_tol = 1e-12;  // parameter-step norm
    double huber_like_eps = 1e-6;    // IRLS L1 smoothing, px
    int mc_samples = 64;
    std::uint64_t seed = 0;
    bool use_uncertainty_weights = true;
    RobustKernel kernel = RobustKernel::kL1;

    void validate() const {
        if (max_iterations < 1 || mc_samples < 1) {
            throw std::invalid_argument("SolverConfig: iteration and sample counts must be positive");
        }
        if (!(convergence_tol > 0.0) || !(huber_like_eps > 0.0)) {
            throw std::invalid_argument("SolverConfig: tolerances must be positive");
        }
    }
};

struct RansacConfig {
    SolverConfig solver;
    double inlier_threshold_px = 2.0;
    int rounds = 256;

    void validate() const {
        solver.validate();
        if (!(inlier_threshold_px > 0.0) || rounds < 1) {
            throw std::invalid_argument("RansacConfig: threshold and rounds must be positive");
        }
    }
};

struct PoseEstimate {
    Rotation rotation;
    Eigen::Vector3d t_norm = Eigen::Vector3d::Zero();
    double objective = 0.0;
    MaskArray inlier_mask;
    int iterations_used = 0;
};

struct Similarity {
    double scale = 1.0;
    Rotation rotation;
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

// Closed-form least-squares similarity (or rigid) alignment dst = s R src + t,
// with the singular-direction sign correction that rules out reflections.
inline Similarity umeyama_align(const Eigen::MatrixX3d& src, const Eigen::MatrixX3d& dst,
                                bool with_scale = true) {
    const Eigen::Index n = src.rows();
    if (n != dst.rows()) {
        throw std::invalid_argument("umeyama_align: src and dst must share N");
    }
    if (n < 3) {
        throw std::invalid_argument("umeyama_align: need at least 3 points");
    }
    const Eigen::RowVector3d mu_src = src.colwise().mean();
    const Eigen::RowVector3d mu_dst = dst.colwise().mean();
    const Eigen::MatrixX3d x = src.rowwise() - mu_src;
    const Eigen::MatrixX3d y = dst.rowwise() - mu_dst;
    const double inv_n = 1.0 / static_cast<double>(n);
    const Eigen::Matrix3d sigma = inv_n * y.transpose() * x;
    const double var_src = inv_n * x.squaredNorm();

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d d = svd.singularValues();
    if (!(d(1) > 1e-12 * std::max(d(0), 1e-300))) {
        throw std::runtime_error("umeyama_align: degenerate configuration (points collinear or coincident)");
    }
    const double sign = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Eigen::Vector3d corr(1.0, 1.0, sign);
    const Eigen::Matrix3d r = svd.matrixU() * corr.asDiagonal() * svd.matrixV().transpose();

    Similarity out;
    out.rotation = Rotation(r);
    out.scale = with_scale ? d.dot(corr) / var_src : 1.0;
    if (!(out.scale > 0.0)) {
        throw std::runtime_error("umeyama_align: non-positive recovered scale");
    }
    out.translation = mu_dst.transpose() - out.scale * (r * mu_src.transpose());
    return out;
}

namespace detail {

inline std::vector<Eigen::Index> visible_indices(const MaskArray& mask) {
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<std::size_t>(mask.size()));
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask(i)) idx.push_back(i);
    }
    return idx;
}

// Direct linear transform for [R|t] from >= 6 2D-3D correspondences with
// known intrinsics. Rotation comes from the polar factor of the left 3x3
// block; the nullvector sign is fixed by the centroid's cheirality.
inline std::pair<Rotation, Eigen::Vector3d> dlt_pose(const Eigen::MatrixX2d& pixels,
                                                     const Eigen::MatrixX3d& points,
                                                     const Intrinsics& k) {
    const Eigen::Index n = points.rows();
    if (n < 6) {
        std::ostringstream oss;
        oss << "dlt_pose: need at least 6 points, got " << n;
        throw std::runtime_error(oss.str());
    }
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 12);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double xn = (pixels(i, 0) - k.cx) / k.fx;
        const double yn = (pixels(i, 1) - k.cy) / k.fy;
        const Eigen::RowVector4d ph(points(i, 0), points(i, 1), points(i, 2), 1.0);
        m.block<1, 4>(2 * i, 0) = ph;
        m.block<1, 4>(2 * i, 8) = -xn * ph;
        m.block<1, 4>(2 * i + 1, 4) = ph;
        m.block<1, 4>(2 * i + 1, 8) = -yn * ph;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (!(sv(10) > 1e-10 * std::max(sv(0), 1e-300))) {
        throw std::runtime_error("dlt_pose: degenerate configuration (points coplanar or rank-deficient)");
    }
    Eigen::VectorXd v = svd.matrixV().col(11);
    Eigen::Matrix<double, 3, 4> p;
    p.row(0) = v.segment<4>(0);
    p.row(1) = v.segment<4>(4);
    p.row(2) = v.segment<4>(8);

    const Eigen::Vector3d centroid = points.colwise().mean();
    const double depth = p.row(2).head<3>().dot(centroid) + p(2, 3);
    if (depth == 0.0) {
        throw std::runtime_error("dlt_pose: centroid at zero depth");
    }
    if (depth < 0.0) p = -p;

    const Eigen::Matrix3d a = p.leftCols<3>();
    Eigen::JacobiSVD<Eigen::Matrix3d> svd3(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const double sign = (svd3.matrixU() * svd3.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Eigen::Vector3d corr(1.0, 1.0, sign);
    const double beta = svd3.singularValues().dot(corr) / 3.0;
    if (!(beta > 1e-12)) {
        throw std::runtime_error("dlt_pose: degenerate projective scale");
    }
    const Eigen::Matrix3d r = svd3.matrixU() * corr.asDiagonal() * svd3.matrixV().transpose();
    return {Rotation(r), p.col(3) / beta};
}

struct Residual {
    Eigen::Vector2d r;
    bool valid = false;  // positive depth
};

inline Residual point_residual(const Intrinsics& k, const Eigen::Matrix3d& r, const Eigen::Vector3d& t,
                               const Eigen::Vector3d& x, const Eigen::Vector2d& u) {
    Residual out;
    const Eigen::Vector3d pc = r * x + t;
    if (!(pc.z() > 1e-9)) return out;
    out.r = Eigen::Vector2d(k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy) - u;
    out.valid = true;
    return out;
}

}  // namespace detail

// Linear initializer: DLT on the fused mixture means over visible points.
inline PoseEstimate dlt_init(const CorrespondenceSet& corr) {
    corr.validate();
    const FusedMap fused = fuse(corr.mixture);
    const auto vis = detail::visible_indices(corr.mixture.mask());
    if (vis.size() < 6) {
        std::ostringstream oss;
        oss << "dlt_init: need at least 6 visible points, got " << vis.size();
        throw std::runtime_error(oss.str());
    }
    Eigen::MatrixX2d pix(static_cast<Eigen::Index>(vis.size()), 2);
    Eigen::MatrixX3d pts(static_cast<Eigen::Index>(vis.size()), 3);
    for (std::size_t j = 0; j < vis.size(); ++j) {
        pix.row(static_cast<Eigen::Index>(j)) = corr.pixels.row(vis[j]);
        pts.row(static_cast<Eigen::Index>(j)) = fused.mu.row(vis[j]);
    }
    auto [rotation, t] = detail::dlt_pose(pix, pts, corr.intrinsics);

    PoseEstimate est;
    est.rotation = rotation;
    est.t_norm = t;
    est.inlier_mask = corr.mixture.mask();
    est.iterations_used = 0;
    double acc = 0.0;
    std::size_t used = 0;
    for (const auto i : vis) {
        const auto res = detail::point_residual(corr.intrinsics, rotation.matrix(), t,
                                                fused.mu.row(i).transpose(), corr.pixels.row(i).transpose());
        if (res.valid) {
            acc += res.r.lpNorm<1>();
            ++used;
        }
    }
    est.objective = used > 0 ? acc / static_cast<double>(used) : 0.0;
    return est;
}

struct SampleStats {
    long long samples_used = 0;
    long long samples_skipped = 0;  // negative-depth draws
    long long points_skipped = 0;   // points with no usable draw
};

// Monte Carlo estimate of the expected L1 reprojection objective
//   (1/N) sum_i E_{x ~ eta_i} |pi(K (R x + t)) - u_i|_1
// over visible points. Deterministic for a fixed seed.
inline double expected_objective(const CorrespondenceSet& corr, const PoseEstimate& pose, int n_samples,
                                 std::uint64_t seed, SampleStats* stats = nullptr) {
    corr.validate();
    if (n_samples < 1) {
        throw std::invalid_argument("expected_objective: n_samples must be >= 1");
    }
    Rng rng(seed);
    const auto draws = sample_mixture(corr.mixture, n_samples, rng);
    const Eigen::Matrix3d r = pose.rotation.matrix();
    SampleStats local;
    double acc = 0.0;
    Eigen::Index n_points = 0;
    for (Eigen::Index i = 0; i < corr.mixture.size(); ++i) {
        if (!corr.mixture.mask()(i)) continue;
        double point_acc = 0.0;
        int used = 0;
        for (const auto& draw : draws) {
            const auto res = detail::point_residual(corr.intrinsics, r, pose.t_norm, draw.row(i).transpose(),
                                                    corr.pixels.row(i).transpose());
            if (!res.valid) {
                ++local.samples_skipped;
                continue;
            }
            point_acc += res.r.lpNorm<1>();
            ++used;
        }
        local.samples_used += used;
        if (used == 0) {
            ++local.points_skipped;
            continue;
        }
        acc += point_acc / used;
        ++n_points;
    }
    if (stats != nullptr) *stats = local;
    return n_points > 0 ? acc / static_cast<double>(n_points) : 0.0;
}

// Iteratively reweighted Levenberg-Marquardt on the L1 reprojection cost of
// the fused means, with per-point precision weights from the mixture. Steps
// are accepted only if the robust cost decreases, so the tracked objective is
// non-increasing by construction.
inline PoseEstimate solve_lmm_pnp(const CorrespondenceSet& corr, const SolverConfig& cfg,
                                  std::vector<double>* objective_trace = nullptr) {
    corr.validate();
    cfg.validate();
    const PoseEstimate init = dlt_init(corr);
    const FusedMap fused = fuse(corr.mixture);
    const auto vis = detail::visible_indices(corr.mixture.mask());

    Eigen::VectorXd prec(static_cast<Eigen::Index>(vis.size()));
    for (std::size_t j = 0; j < vis.size(); ++j) {
        prec(static_cast<Eigen::Index>(j)) = cfg.use_uncertainty_weights ? fused.weight(vis[j]) : 1.0;
    }
    prec /= prec.sum();

    const double kPenalty = 1e9;  // residual charged to behind-camera points
    const auto robust_cost = [&](const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
        double cost = 0.0;
        for (std::size_t j = 0; j < vis.size(); ++j) {
            const auto res = detail::point_residual(corr.intrinsics, r, t, fused.mu.row(vis[j]).transpose(),
                                                    corr.pixels.row(vis[j]).transpose());
            const double n1 = res.valid ? res.r.lpNorm<1>() : kPenalty;
            cost += prec(static_cast<Eigen::Index>(j)) *
                    (cfg.kernel == RobustKernel::kL1 ? n1 : n1 * n1);
        }
        return cost;
    };

    Eigen::Matrix3d r = init.rotation.matrix();
    Eigen::Vector3d t = init.t_norm;
    double cost = robust_cost(r, t);
    if (objective_trace != nullptr) objective_trace->push_back(cost);

    double lambda = 1e-3;
    int iterations_used = cfg.max_iterations;
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
        Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
        Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
        for (std::size_t j = 0; j < vis.size(); ++j) {
            const Eigen::Vector3d x = fused.mu.row(vis[j]).transpose();
            const Eigen::Vector3d pc = r * x + t;
            if (!(pc.z() > 1e-9)) continue;
            const Eigen::Vector2d uv(corr.intrinsics.fx * pc.x() / pc.z() + corr.intrinsics.cx,
                                     corr.intrinsics.fy * pc.y() / pc.z() + corr.intrinsics.cy);
            const Eigen::Vector2d res = uv - corr.pixels.row(vis[j]).transpose();
            const double inv_z = 1.0 / pc.z();
            Eigen::Matrix<double, 2, 3> jpi;
            jpi << corr.intrinsics.fx * inv_z, 0.0, -corr.intrinsics.fx * pc.x() * inv_z * inv_z,
                   0.0, corr.intrinsics.fy * inv_z, -corr.intrinsics.fy * pc.y() * inv_z * inv_z;
            Eigen::Matrix<double, 2, 6> jac;
            jac.leftCols<3>() = -jpi * skew(r * x);
            jac.rightCols<3>() = jpi;
            double w = prec(static_cast<Eigen::Index>(j));
            if (cfg.kernel == RobustKernel::kL1) {
                w /= std::max(res.lpNorm<1>(), cfg.huber_like_eps);
            }
            h.noalias() += w * jac.transpose() * jac;
            g.noalias() += w * jac.transpose() * res;
        }

        bool accepted = false;
        double step_norm = 0.0;
        while (lambda <= 1e10) {
            Eigen::Matrix<double, 6, 6> damped = h;
            for (int i = 0; i < 6; ++i) {
                damped(i, i) += lambda * std::max(h(i, i), 1e-12);
            }
            const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
            if (!delta.allFinite()) {
                lambda *= 3.0;
                continue;
            }
            const Eigen::Matrix3d r_new = (exp_so3(delta.head<3>()) * Rotation(r)).matrix();
            const Eigen::Vector3d t_new = t + delta.tail<3>();
            const double cost_new = robust_cost(r_new, t_new);
            if (cost_new < cost) {
                r = r_new;
                t = t_new;
                cost = cost_new;
                step_norm = delta.norm();
                lambda = std::max(lambda * 0.3, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 3.0;
        }
        if (objective_trace != nullptr && accepted) objective_trace->push_back(cost);
        if (!accepted || step_norm < cfg.convergence_tol) {
            iterations_used = iter;
            break;
        }
    }

    PoseEstimate est;
    est.rotation = Rotation(r);
    est.t_norm = t;
    est.inlier_mask = corr.mixture.mask();
    est.iterations_used = iterations_used;
    est.objective = expected_objective(corr, est, cfg.mc_samples, cfg.seed);
    return est;
}

namespace detail {

inline LaplacianMixture subset_mixture(const LaplacianMixture& mixture, const std::vector<Eigen::Index>& idx) {
    LaplacianMixture out;
    out.weights = mixture.weights;
    for (int k = 0; k < 2; ++k) {
        LaplacianMap& map = out.components[static_cast<std::size_t>(k)];
        const LaplacianMap& src = mixture.components[static_cast<std::size_t>(k)];
        map.mu.resize(static_cast<Eigen::Index>(idx.size()), 3);
        map.sigma2.resize(static_cast<Eigen::Index>(idx.size()), 3);
        map.mask.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            map.mu.row(static_cast<Eigen::Index>(j)) = src.mu.row(idx[j]);
            map.sigma2.row(static_cast<Eigen::Index>(j)) = src.sigma2.row(idx[j]);
            map.mask(static_cast<Eigen::Index>(j)) = true;
        }
    }
    return out;
}

}  // namespace detail

// Minimal-sample (6-point DLT) RANSAC with consensus on the reprojection of
// fused means, followed by an unweighted robust refine on the inliers.
inline PoseEstimate ransac_pnp(const CorrespondenceSet& corr, const RansacConfig& cfg) {
    corr.validate();
    cfg.validate();
    const FusedMap fused = fuse(corr.mixture);
    const auto vis = detail::visible_indices(corr.mixture.mask());
    if (vis.size() < 6) {
        throw std::runtime_error("ransac_pnp: need at least 6 visible points");
    }

    std::vector<Eigen::Index> best_inliers;
    double best_err = std::numeric_limits<double>::infinity();
    const Eigen::Vector3d centroid = [&] {
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        for (const auto i : vis) c += fused.mu.row(i).transpose();
        return Eigen::Vector3d(c / static_cast<double>(vis.size()));
    }();

    for (int round = 0; round < cfg.rounds; ++round) {
        Rng rng(cfg.solver.seed + static_cast<std::uint64_t>(round));
        std::vector<Eigen::Index> pick(vis);
        for (std::size_t j = 0; j < 6; ++j) {
            const std::size_t k = j + static_cast<std::size_t>(rng.index(pick.size() - j));
            std::swap(pick[j], pick[k]);
        }
        Eigen::MatrixX2d pix(6, 2);
        Eigen::MatrixX3d pts(6, 3);
        for (Eigen::Index j = 0; j < 6; ++j) {
            pix.row(j) = corr.pixels.row(pick[static_cast<std::size_t>(j)]);
            pts.row(j) = fused.mu.row(pick[static_cast<std::size_t>(j)]);
        }
        Rotation rot;
        Eigen::Vector3d t;
        try {
            std::tie(rot, t) = detail::dlt_pose(pix, pts, corr.intrinsics);
        } catch (const std::runtime_error&) {
            continue;
        }
        if (!((rot.matrix() * centroid + t).z() > 0.0)) continue;

        std::vector<Eigen::Index> inliers;
        double err = 0.0;
        for (const auto i : vis) {
            const auto res = detail::point_residual(corr.intrinsics, rot.matrix(), t,
                                                    fused.mu.row(i).transpose(), corr.pixels.row(i).transpose());
            if (res.valid && res.r.norm() < cfg.inlier_threshold_px) {
                inliers.push_back(i);
                err += res.r.norm();
            }
        }
        if (inliers.size() > best_inliers.size() ||
            (inliers.size() == best_inliers.size() && !inliers.empty() &&
             err / static_cast<double>(inliers.size()) < best_err)) {
            best_inliers = std::move(inliers);
            best_err = best_inliers.empty() ? best_err : err / static_cast<double>(best_inliers.size());
        }
    }
    if (best_inliers.size() < 6) {
        throw std::runtime_error("ransac_pnp: no hypothesis reached 6 inliers");
    }

    CorrespondenceSet sub;
    sub.intrinsics = corr.intrinsics;
    sub.mixture = detail::subset_mixture(corr.mixture, best_inliers);
    sub.pixels.resize(static_cast<Eigen::Index>(best_inliers.size()), 2);
    for (std::size_t j = 0; j < best_inliers.size(); ++j) {
        sub.pixels.row(static_cast<Eigen::Index>(j)) = corr.pixels.row(best_inliers[j]);
    }
    SolverConfig refine_cfg = cfg.solver;
    refine_cfg.use_uncertainty_weights = false;
    PoseEstimate est = solve_lmm_pnp(sub, refine_cfg);

    MaskArray inlier_mask = MaskArray::Constant(corr.mixture.size(), false);
    for (const auto i : best_inliers) inlier_mask(i) = true;
    est.inlier_mask = inlier_mask;
    return est;
}

}  // namespace lmmpose
