#pragma once

#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lmmpose/box_iou.hpp"
#include "lmmpose/geometry.hpp"
#include "lmmpose/laplacian.hpp"
#include "lmmpose/pose_repr.hpp"
#include "lmmpose/solvers.hpp"
#include "lmmpose/synth.hpp"

namespace lmmpose {

struct SelftestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

namespace detail {

// Golden-section minimizer, used as the independent oracle for the
// self-supervised variance property.
inline double golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    while (b - a > tol) {
        if (f(c) < f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    return 0.5 * (a + b);
}

}  // namespace detail

// Fast embedded invariant suite: gradient checks, round trips, IoU oracle
// agreement and solver closure. LMMPOSE_SELFTEST_FORCE_FAIL=1 injects a
// failing check (harness verification).
inline std::vector<SelftestCheck> run_selftest() {
    std::vector<SelftestCheck> checks;
    const auto add = [&checks](const std::string& name, bool ok, const std::string& detail = "") {
        checks.push_back({name, ok, detail});
    };

    // Aleatoric loss gradients vs central finite differences.
    {
        Rng rng(11);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::Index n = 4;
            Eigen::MatrixX3d gt(n, 3), mu(n, 3), sigma2(n, 3);
            MaskArray mask(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                mask(i) = rng.uniform() < 0.8;
                for (int a = 0; a < 3; ++a) {
                    gt(i, a) = rng.uniform(-0.5, 0.5);
                    mu(i, a) = gt(i, a) + (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 0.4);
                    sigma2(i, a) = rng.uniform(0.1, 2.0);
                }
            }
            if (mask.count() == 0) mask(0) = true;
            const LaplacianMap map(mu, sigma2, mask);
            const auto res = aleatoric_loss(map, gt, 15.0);
            const double h = 1e-6;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (int a = 0; a < 3; ++a) {
                    LaplacianMap mp = map, mm = map;
                    mp.mu(i, a) += h;
                    mm.mu(i, a) -= h;
                    const double fd_mu = (aleatoric_loss(mp, gt, 15.0).loss - aleatoric_loss(mm, gt, 15.0).loss) / (2 * h);
                    LaplacianMap sp = map, sm = map;
                    sp.sigma2(i, a) += h;
                    sm.sigma2(i, a) -= h;
                    const double fd_s2 =
                        (aleatoric_loss(sp, gt, 15.0).loss - aleatoric_loss(sm, gt, 15.0).loss) / (2 * h);
                    const double scale_mu = std::max({1.0, std::abs(fd_mu), std::abs(res.grad_mu(i, a))});
                    const double scale_s2 = std::max({1.0, std::abs(fd_s2), std::abs(res.grad_sigma2(i, a))});
                    worst = std::max(worst, std::abs(res.grad_mu(i, a) - fd_mu) / scale_mu);
                    worst = std::max(worst, std::abs(res.grad_sigma2(i, a) - fd_s2) / scale_s2);
                }
            }
        }
        std::ostringstream oss;
        oss << "max relative gradient error " << worst;
        add("aleatoric_loss_gradient_check", worst < 1e-5, oss.str());
    }

    // Stationary variance equals the golden-section minimum of the 1-D loss.
    {
        Rng rng(12);
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const double e = rng.uniform(0.005, 0.5);
            const double lambda = trial % 2 == 0 ? 15.0 : rng.uniform(1.0, 30.0);
            const double oracle = detail::golden_section_min(
                [&](double s2) { return lambda * e / s2 + std::log(s2); }, 1e-6, 100.0, 1e-10);
            worst = std::max(worst, std::abs(oracle - optimal_sigma2(e, lambda)));
        }
        std::ostringstream oss;
        oss << "max |golden - analytic| " << worst;
        add("optimal_sigma2_oracle", worst < 1e-6, oss.str());
    }

    // Projection round trip.
    {
        Rng rng(13);
        const Intrinsics k(520.0, 480.0, 310.0, 245.0);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Eigen::Vector3d p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.2, 5.0));
            const Eigen::Vector3d q = backproject(k, project(k, p), p.z());
            worst = std::max(worst, (p - q).norm());
        }
        add("project_backproject_round_trip", worst < 1e-9, "max error " + std::to_string(worst));
    }

    // Gram-Schmidt output stays a rotation even for nearly parallel columns.
    {
        Rng rng(14);
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            const Eigen::Vector3d rx(rng.normal(), rng.normal(), rng.normal());
            Eigen::Vector3d ry = rx + 1e-4 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
            const Rotation r = rotation_from_columns(rx, ry);
            const double orth =
                (r.matrix().transpose() * r.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
            worst = std::max({worst, orth, std::abs(r.matrix().determinant() - 1.0)});
        }
        add("rotation_from_columns_orthonormal", worst < 1e-9, "max deviation " + std::to_string(worst));
    }

    // Pose/translation/size codecs invert exactly.
    {
        Rng rng(15);
        const Intrinsics k(500.0, 500.0, 320.0, 240.0);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Pose9D pose(random_rotation(rng),
                              Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0.5, 3.0)),
                              Eigen::Vector3d(rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0)));
            const auto [sap, d] = normalize_pose(pose);
            const Pose9D back = denormalize_pose(sap, d);
            worst = std::max({worst, (back.translation - pose.translation).norm(),
                              (back.size - pose.size).norm(),
                              (back.rotation.matrix() - pose.rotation.matrix()).cwiseAbs().maxCoeff()});
            const DetectionBox box(rng.uniform(100, 500), rng.uniform(100, 400), rng.uniform(20, 200),
                                   rng.uniform(20, 200), 256.0);
            const Eigen::Vector2d o(rng.uniform(0, 640), rng.uniform(0, 480));
            const double tz = rng.uniform(1.0, 20.0);
            const auto params = encode_translation(o, tz, box);
            const Eigen::Vector3d t_norm = decode_translation(params, box, k);
            worst = std::max(worst, std::abs(t_norm.z() - tz));
            worst = std::max(worst, (project(k, t_norm) - o).norm() * 1e-3);
        }
        add("codec_round_trips", worst < 1e-9, "max error " + std::to_string(worst));
    }

    // Exact box IoU agrees with Monte Carlo.
    {
        Rng rng(16);
        double worst = 0.0;
        for (int i = 0; i < 5; ++i) {
            const OrientedBox a(random_rotation(rng),
                                Eigen::Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)),
                                Eigen::Vector3d(rng.uniform(0.4, 1.5), rng.uniform(0.4, 1.5), rng.uniform(0.4, 1.5)));
            const OrientedBox b(random_rotation(rng),
                                Eigen::Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)),
                                Eigen::Vector3d(rng.uniform(0.4, 1.5), rng.uniform(0.4, 1.5), rng.uniform(0.4, 1.5)));
            worst = std::max(worst, std::abs(box_iou_exact(a, b) - box_iou_mc(a, b, 200000, 99 + i)));
        }
        add("box_iou_exact_vs_mc", worst < 0.01, "max |exact - mc| " + std::to_string(worst));
    }

    // Umeyama recovers random similarity transforms.
    {
        Rng rng(17);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            Eigen::MatrixX3d src(12, 3);
            for (Eigen::Index r = 0; r < src.rows(); ++r) {
                src.row(r) = Eigen::RowVector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            }
            const Rotation rot = random_rotation(rng);
            const double s = rng.uniform(0.3, 3.0);
            const Eigen::Vector3d t(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
            Eigen::MatrixX3d dst(src.rows(), 3);
            for (Eigen::Index r = 0; r < src.rows(); ++r) {
                dst.row(r) = (s * (rot * src.row(r).transpose()) + t).transpose();
            }
            const Similarity sim = umeyama_align(src, dst, true);
            worst = std::max({worst, std::abs(sim.scale - s), (sim.translation - t).norm(),
                              geodesic_angle_stable_deg(sim.rotation, rot)});
        }
        add("umeyama_recovery", worst < 1e-9, "max error " + std::to_string(worst));
    }

    // Noiseless PnP closure on a synthetic scene.
    {
        const ShapeModel shape = gen_shape({PrimitiveKind::kBox, {1.0, 2.0, 2.0}}, "carton", 60, 21);
        SceneGenConfig gen;
        const Intrinsics k(500.0, 500.0, 320.0, 240.0);
        double worst_rot = 0.0, worst_t = 0.0;
        for (int i = 0; i < 3; ++i) {
            const Scene scene = gen_scene({shape}, gen, k, 100 + static_cast<std::uint64_t>(i));
            const auto& obj = scene.objects.front();
            const PoseEstimate est = solve_lmm_pnp(correspondences(obj, k), SolverConfig{});
            const auto [gt_sap, d] = normalize_pose(obj.gt);
            worst_rot = std::max(worst_rot, geodesic_angle_deg(est.rotation, obj.gt.rotation));
            worst_t = std::max(worst_t, (est.t_norm - gt_sap.t_norm).norm());
        }
        std::ostringstream oss;
        oss << "max rotation error " << worst_rot << " deg, max t_norm error " << worst_t;
        add("pnp_noiseless_closure", worst_rot < 0.1 && worst_t < 1e-3, oss.str());
    }

    if (const char* force = std::getenv("LMMPOSE_SELFTEST_FORCE_FAIL"); force != nullptr &&
        std::string(force) == "1") {
        add("forced_failure_toggle", false, "LMMPOSE_SELFTEST_FORCE_FAIL=1 is set");
    }
    return checks;
}

}  // namespace lmmpose
