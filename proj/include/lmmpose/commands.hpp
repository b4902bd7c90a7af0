#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmmpose/io.hpp"
#include "lmmpose/selftest.hpp"

namespace lmmpose {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitUsage = 64;

// Predictions may carry a decoded size whose norm drifts off the unit sphere
// (codebook mean plus delta); treating its own diagonal as the normalizer
// puts it back on the sphere and satisfies the pose invariants.
inline ScaleAgnosticPose prediction_sap(const Rotation& r, const Eigen::Vector3d& t_norm,
                                        const Eigen::Vector3d& s_pred) {
    const double n = s_pred.norm();
    if (!(n > 0.0)) {
        throw std::invalid_argument("prediction_sap: predicted size must be nonzero");
    }
    return ScaleAgnosticPose(r, t_norm, s_pred / n);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
};

inline int cmd_synth(const SynthArgs& args, std::ostream& log = std::cout) {
    const ToolConfig cfg = load_tool_config(args.config_path);
    const DirLock lock(args.out_dir);

    std::vector<ShapeModel> shapes;
    shapes.reserve(cfg.shapes.size());
    for (std::size_t i = 0; i < cfg.shapes.size(); ++i) {
        shapes.push_back(gen_shape(cfg.shapes[i].second, cfg.shapes[i].first, cfg.shape_points,
                                   derive_seed(args.seed, 0xabcd0000ULL + i)));
    }
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(cfg.n_scenes));
    for (int s = 0; s < cfg.n_scenes; ++s) {
        Scene scene = gen_scene(shapes, cfg.generator, cfg.intrinsics,
                                derive_seed(args.seed, 2 * static_cast<std::uint64_t>(s)));
        scenes.push_back(corrupt(scene, cfg.noise, derive_seed(args.seed, 2 * static_cast<std::uint64_t>(s) + 1)));
    }
    const SizeCodebook codebook = compute_codebook(scenes);

    for (int s = 0; s < cfg.n_scenes; ++s) {
        char name[32];
        std::snprintf(name, sizeof(name), "scene_%03d.json", s);
        save_scene(args.out_dir / name, scenes[static_cast<std::size_t>(s)], &codebook);
        log << "wrote " << (args.out_dir / name).string() << "\n";
    }
    atomic_write_text(args.out_dir / "codebook.json", codebook_to_json(codebook).dump(2) + "\n");
    log << "wrote " << (args.out_dir / "codebook.json").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct SolveArgs {
    std::filesystem::path scene_path;
    std::string solver = "lmm-pnp";
    std::optional<std::filesystem::path> config_path;
    std::filesystem::path out_path;
    std::string size_source = "codebook";  // codebook | gt
    std::string d_source = "none";         // none | gt
};

inline int cmd_solve(const SolveArgs& args, std::ostream& log = std::cout) {
    static const std::vector<std::string> kSolvers = {"lmm-pnp", "pnp-unweighted", "ransac-pnp",
                                                      "umeyama-oracle"};
    if (std::find(kSolvers.begin(), kSolvers.end(), args.solver) == kSolvers.end()) {
        throw std::invalid_argument("cmd_solve: unknown solver '" + args.solver +
                                    "' (expected lmm-pnp, pnp-unweighted, ransac-pnp or umeyama-oracle)");
    }
    if (args.size_source != "codebook" && args.size_source != "gt") {
        throw std::invalid_argument("cmd_solve: --size-source must be 'codebook' or 'gt'");
    }
    if (args.d_source != "none" && args.d_source != "gt") {
        throw std::invalid_argument("cmd_solve: --d-source must be 'none' or 'gt'");
    }
    const ToolConfig cfg = args.config_path ? load_tool_config(*args.config_path) : ToolConfig{};
    const SceneFile sf = load_scene(args.scene_path);
    const SizeCodebook codebook =
        sf.codebook.has_value() ? *sf.codebook : compute_codebook(std::vector<Scene>{sf.scene});

    ResultFile rf;
    rf.solver = args.solver;
    int failures = 0;
    for (const auto& obj : sf.scene.objects) {
        ObjectResult r;
        r.id = obj.id;
        try {
            std::optional<double> d_pred;
            if (args.solver == "umeyama-oracle") {
                const Similarity sim = umeyama_oracle(obj);
                r.rotation = sim.rotation;
                r.t_norm = sim.translation / sim.scale;
                d_pred = sim.scale;
                r.iterations = 0;
                r.inlier_count = static_cast<int>(obj.mask.count());
                PoseEstimate est;
                est.rotation = r.rotation;
                est.t_norm = r.t_norm;
                const CorrespondenceSet corr = correspondences(obj, sf.scene.intrinsics);
                r.objective = expected_objective(corr, est, cfg.solver.mc_samples, cfg.solver.seed);
            } else {
                const CorrespondenceSet corr = correspondences(obj, sf.scene.intrinsics);
                PoseEstimate est;
                if (args.solver == "ransac-pnp") {
                    est = ransac_pnp(corr, cfg.ransac);
                } else {
                    SolverConfig sc = cfg.solver;
                    sc.use_uncertainty_weights = args.solver == "lmm-pnp";
                    est = solve_lmm_pnp(corr, sc);
                }
                r.rotation = est.rotation;
                r.t_norm = est.t_norm;
                r.objective = est.objective;
                r.iterations = est.iterations_used;
                r.inlier_count = static_cast<int>(est.inlier_mask.count());
            }
            const Eigen::Vector3d s_avg = codebook.at(obj.category);
            r.s_norm = args.size_source == "gt" ? obj.s_norm : s_avg;
            r.s_out = encode_size(r.s_norm, obj.category, codebook);
            if (args.d_source == "gt") {
                r.d = obj.gt.size.norm();
            } else if (d_pred.has_value()) {
                r.d = d_pred;
            }
        } catch (const std::exception& e) {
            r.ok = false;
            r.error = e.what();
            ++failures;
            log << "object " << obj.id << " failed: " << e.what() << "\n";
        }
        rf.results.push_back(std::move(r));
    }
    save_results(args.out_path, rf);
    log << "wrote " << args.out_path.string() << " (" << rf.results.size() - static_cast<std::size_t>(failures)
        << "/" << rf.results.size() << " objects solved)\n";
    return failures > 0 ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::filesystem::path scene_path;
    std::filesystem::path result_path;
    std::filesystem::path out_csv;
    bool absolute = false;
    std::string d_source = "pred";  // pred | gt
    int n_rot_sym = 100;
    std::vector<double> curve_thresholds;  // optional NIoU AP curve
    std::optional<std::filesystem::path> curve_csv;
};

inline int cmd_eval(const EvalArgs& args, std::ostream& log = std::cout) {
    if (args.d_source != "pred" && args.d_source != "gt") {
        throw std::invalid_argument("cmd_eval: --d-source must be 'pred' or 'gt'");
    }
    const SceneFile sf = load_scene(args.scene_path);
    const ResultFile rf = load_results(args.result_path);

    std::map<int, const SceneObject*> by_id;
    for (const auto& obj : sf.scene.objects) by_id[obj.id] = &obj;

    std::vector<InstanceResult> instances;
    int skipped = 0;
    for (const auto& r : rf.results) {
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) {
            throw std::invalid_argument("cmd_eval: result id " + std::to_string(r.id) +
                                        " does not reference the scene");
        }
        if (!r.ok) {
            ++skipped;
            continue;
        }
        const SceneObject& obj = *it->second;
        InstanceResult inst;
        inst.category = obj.category;
        inst.symmetric = obj.symmetric;
        inst.gt = obj.gt;
        inst.pred_sap = prediction_sap(r.rotation, r.t_norm, r.s_norm);
        if (args.d_source == "gt") {
            inst.pred_d = obj.gt.size.norm();
        } else if (r.d.has_value()) {
            inst.pred_d = *r.d;
        }
        instances.push_back(std::move(inst));
    }
    if (skipped > 0) log << "skipping " << skipped << " failed result(s)\n";

    EvalOptions opt;
    opt.absolute = args.absolute;
    opt.n_rot_sym = args.n_rot_sym;
    const MetricTable table = evaluate(instances, opt);
    atomic_write_text(args.out_csv, metric_table_csv(table));
    log << metric_table_text(table);
    if (!args.curve_thresholds.empty()) {
        const auto curve = ap_curve(instances, ApMetric::kNiou, args.curve_thresholds, opt);
        const std::filesystem::path curve_path =
            args.curve_csv.value_or(args.out_csv.parent_path() / "niou_ap_curve.csv");
        atomic_write_text(curve_path, ap_curve_csv(curve));
        log << "wrote " << curve_path.string() << "\n";
    }
    log << "wrote " << args.out_csv.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::filesystem::path spec_path;
    std::filesystem::path out_dir;
};

namespace detail {

inline std::string errors_csv(const VariantResult& res) {
    std::ostringstream oss;
    oss << "rot_deg,t_norm_err\n";
    for (std::size_t i = 0; i < res.rot_errors_deg.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", res.rot_errors_deg[i], res.t_norm_errors[i]);
        oss << buf;
    }
    return oss.str();
}

inline std::string paired_csv(const TrialReport& report) {
    std::ostringstream oss;
    oss << "a,b,median_delta_rot_deg,win_rate,sign_test_p,wins,losses,ties\n";
    for (const auto& p : report.pairs) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d,%d,%d\n", p.median_delta_rot_deg, p.win_rate,
                      p.sign_test_p, p.wins, p.losses, p.ties);
        oss << p.a << "," << p.b << "," << buf;
    }
    return oss.str();
}

}  // namespace detail

inline int cmd_bench(const BenchArgs& args, std::ostream& log = std::cout) {
    const BenchSpec spec = load_bench_spec(args.spec_path);
    const DirLock lock(args.out_dir);
    std::ostringstream summary;

    const TrialReport report = spec.mode == "sap" ? run_sap_comparison(spec.trial) : run_ablation(spec.trial);
    for (const auto& variant : report.variants) {
        if (!variant.metrics.columns.empty()) {
            atomic_write_text(args.out_dir / ("metrics_" + variant.name + ".csv"),
                              metric_table_csv(variant.metrics));
        }
        if (!variant.rot_errors_deg.empty()) {
            atomic_write_text(args.out_dir / ("errors_" + variant.name + ".csv"), detail::errors_csv(variant));
        }
        summary << "variant " << variant.name << " (" << variant.rot_errors_deg.size() << " samples, "
                << variant.failures << " failures)\n";
        if (!variant.metrics.columns.empty()) summary << metric_table_text(variant.metrics) << "\n";
    }
    if (!report.pairs.empty()) {
        atomic_write_text(args.out_dir / "paired_summary.csv", detail::paired_csv(report));
        for (const auto& p : report.pairs) {
            summary << p.a << " vs " << p.b << ": median delta rot " << p.median_delta_rot_deg
                    << " deg, win rate " << p.win_rate << ", sign-test p " << p.sign_test_p << "\n";
        }
    }
    if (!report.sap_niou_curve.empty()) {
        atomic_write_text(args.out_dir / "ap_sap_niou.csv", ap_curve_csv(report.sap_niou_curve));
        atomic_write_text(args.out_dir / "ap_metric_iou.csv", ap_curve_csv(report.metric_iou_curve));
        summary << "sap NIoU AP curve vs metric-scale IoU AP curve written\n";
    }
    summary << "scene fingerprints:";
    for (const auto h : report.scene_hashes) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), " %016llx", static_cast<unsigned long long>(h));
        summary << buf;
    }
    summary << "\n";
    atomic_write_text(args.out_dir / "summary.txt", summary.str());
    log << summary.str();
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int cmd_selftest(std::ostream& log = std::cout) {
    const auto checks = run_selftest();
    int failed = 0;
    for (const auto& c : checks) {
        log << (c.passed ? "[PASS] " : "[FAIL] ") << c.name;
        if (!c.detail.empty()) log << "  (" << c.detail << ")";
        log << "\n";
        failed += c.passed ? 0 : 1;
    }
    log << (failed == 0 ? "selftest passed" : "selftest FAILED") << " (" << checks.size() - failed << "/"
        << checks.size() << " checks)\n";
    return failed == 0 ? kExitOk : kExitFailure;
}

}  // namespace lmmpose
