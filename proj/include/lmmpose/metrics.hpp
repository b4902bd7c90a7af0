#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmpose/box_iou.hpp"
#include "lmmpose/geometry.hpp"
#include "lmmpose/pose_repr.hpp"

namespace lmmpose {

// One matched prediction/ground-truth pair. pred_d is needed only for the
// absolute-scale metrics.
struct InstanceResult {
    std::string category;
    bool symmetric = false;
    Pose9D gt;
    ScaleAgnosticPose pred_sap;
    std::optional<double> pred_d;
};

// Symmetric objects constrain only the direction of the y axis. The angle
// between the y columns comes from atan2 so it is exact at 0 and pi.
inline double rotation_error_deg(const Rotation& pred, const Rotation& gt, bool symmetric) {
    if (!symmetric) return geodesic_angle_deg(pred, gt);
    const Eigen::Vector3d yp = pred.col(1);
    const Eigen::Vector3d yg = gt.col(1);
    return rad2deg(std::atan2(yp.cross(yg).norm(), yp.dot(yg)));
}

// Translation error in units of the ground-truth diagonal; both arguments in
// the same normalization frame.
inline double translation_error_ratio(const Eigen::Vector3d& t_pred_norm, const Eigen::Vector3d& t_gt,
                                      double d_gt) {
    if (!(d_gt > 0.0)) {
        throw std::invalid_argument("translation_error_ratio: d_gt must be positive");
    }
    return (t_pred_norm - t_gt / d_gt).norm();
}

enum class NiouNormalizer { kOwnDiagonal, kGtDiagonal };

struct EvalOptions {
    bool absolute = false;
    NiouNormalizer niou_normalizer = NiouNormalizer::kOwnDiagonal;
    int n_rot_sym = 100;
};

struct MetricTable {
    std::vector<std::string> columns;
    // Per-category rows in name order, then a final "mean" row.
    std::vector<std::pair<std::string, std::vector<double>>> rows;

    double at(const std::string& row, const std::string& column) const {
        const auto cit = std::find(columns.begin(), columns.end(), column);
        if (cit == columns.end()) {
            throw std::out_of_range("MetricTable: unknown column '" + column + "'");
        }
        for (const auto& [name, values] : rows) {
            if (name == row) return values[static_cast<std::size_t>(cit - columns.begin())];
        }
        throw std::out_of_range("MetricTable: unknown row '" + row + "'");
    }
};

namespace detail {

struct InstanceEval {
    std::string category;
    double niou = 0.0;
    double rot_deg = 0.0;
    double t_ratio = 0.0;
    double iou_abs = 0.0;
    double t_err_m = 0.0;
    bool has_absolute = false;
};

inline InstanceEval evaluate_instance(const InstanceResult& inst, const EvalOptions& opt) {
    InstanceEval ev;
    ev.category = inst.category;
    const auto [gt_sap, d_gt] = normalize_pose(inst.gt);

    ev.rot_deg = rotation_error_deg(inst.pred_sap.rotation, inst.gt.rotation, inst.symmetric);
    ev.t_ratio = translation_error_ratio(inst.pred_sap.t_norm, inst.gt.translation, d_gt);

    OrientedBox pred_box(inst.pred_sap.rotation, inst.pred_sap.t_norm, inst.pred_sap.s_norm);
    if (opt.niou_normalizer == NiouNormalizer::kGtDiagonal) {
        if (!inst.pred_d.has_value()) {
            throw std::invalid_argument("evaluate: NIoU normalization by gt diagonal requires pred_d");
        }
        const double rho = *inst.pred_d / d_gt;
        pred_box = OrientedBox(inst.pred_sap.rotation, rho * inst.pred_sap.t_norm, rho * inst.pred_sap.s_norm);
    }
    const OrientedBox gt_box(gt_sap.rotation, gt_sap.t_norm, gt_sap.s_norm);
    ev.niou = symmetry_iou(pred_box, gt_box, inst.symmetric, opt.n_rot_sym);

    if (opt.absolute) {
        if (!inst.pred_d.has_value()) {
            throw std::invalid_argument("evaluate: absolute metrics requested but pred_d missing for category '" +
                                        inst.category + "'");
        }
        const double d = *inst.pred_d;
        const OrientedBox pred_metric(inst.pred_sap.rotation, d * inst.pred_sap.t_norm, d * inst.pred_sap.s_norm);
        const OrientedBox gt_metric(inst.gt.rotation, inst.gt.translation, inst.gt.size);
        ev.iou_abs = symmetry_iou(pred_metric, gt_metric, inst.symmetric, opt.n_rot_sym);
        ev.t_err_m = (d * inst.pred_sap.t_norm - inst.gt.translation).norm();
        ev.has_absolute = true;
    }
    return ev;
}

}  // namespace detail

// Average precision of the metric suite; thresholds use "fall below"
// semantics, i.e. strict < on errors and strict > on IoU. The final row is
// the unweighted category mean.
inline MetricTable evaluate(const std::vector<InstanceResult>& results, const EvalOptions& opt = {}) {
    if (results.empty()) {
        throw std::invalid_argument("evaluate: no instances");
    }
    MetricTable table;
    table.columns = {"NIoU25", "NIoU50", "NIoU75", "deg10_d02", "deg10_d05", "d02", "d05", "deg10"};
    if (opt.absolute) {
        for (const char* c : {"IoU25", "IoU50", "IoU75", "deg10_cm10", "cm10"}) table.columns.emplace_back(c);
    }

    std::map<std::string, std::vector<detail::InstanceEval>> per_category;
    for (const auto& inst : results) {
        per_category[inst.category].push_back(detail::evaluate_instance(inst, opt));
    }

    const auto pass_vector = [&](const detail::InstanceEval& ev) {
        std::vector<bool> pass = {ev.niou > 0.25,
                                  ev.niou > 0.50,
                                  ev.niou > 0.75,
                                  ev.rot_deg < 10.0 && ev.t_ratio < 0.2,
                                  ev.rot_deg < 10.0 && ev.t_ratio < 0.5,
                                  ev.t_ratio < 0.2,
                                  ev.t_ratio < 0.5,
                                  ev.rot_deg < 10.0};
        if (opt.absolute) {
            pass.push_back(ev.iou_abs > 0.25);
            pass.push_back(ev.iou_abs > 0.50);
            pass.push_back(ev.iou_abs > 0.75);
            pass.push_back(ev.rot_deg < 10.0 && ev.t_err_m < 0.10);
            pass.push_back(ev.t_err_m < 0.10);
        }
        return pass;
    };

    std::vector<double> mean(table.columns.size(), 0.0);
    for (const auto& [category, evals] : per_category) {
        std::vector<double> row(table.columns.size(), 0.0);
        for (const auto& ev : evals) {
            const auto pass = pass_vector(ev);
            for (std::size_t c = 0; c < pass.size(); ++c) row[c] += pass[c] ? 1.0 : 0.0;
        }
        for (auto& cell : row) cell = 100.0 * cell / static_cast<double>(evals.size());
        for (std::size_t c = 0; c < row.size(); ++c) mean[c] += row[c];
        table.rows.emplace_back(category, std::move(row));
    }
    for (auto& cell : mean) cell /= static_cast<double>(per_category.size());
    table.rows.emplace_back("mean", std::move(mean));
    return table;
}

enum class ApMetric { kNiou, kIouAbsolute, kRotationDeg, kTranslationRatio, kTranslationMeters };

// AP (unweighted category mean, percent) swept over a threshold grid.
// Non-increasing in the threshold for IoU metrics, non-decreasing for error
// metrics.
inline std::vector<std::pair<double, double>> ap_curve(const std::vector<InstanceResult>& results,
                                                       ApMetric metric,
                                                       const std::vector<double>& thresholds,
                                                       const EvalOptions& opt = {}) {
    if (results.empty()) {
        throw std::invalid_argument("ap_curve: no instances");
    }
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (thresholds[i] < thresholds[i - 1]) {
            throw std::invalid_argument("ap_curve: thresholds must be non-decreasing");
        }
    }
    EvalOptions local = opt;
    if (metric == ApMetric::kIouAbsolute || metric == ApMetric::kTranslationMeters) local.absolute = true;

    std::map<std::string, std::vector<detail::InstanceEval>> per_category;
    for (const auto& inst : results) {
        per_category[inst.category].push_back(detail::evaluate_instance(inst, local));
    }
    std::vector<std::pair<double, double>> curve;
    curve.reserve(thresholds.size());
    for (const double tau : thresholds) {
        double ap = 0.0;
        for (const auto& [category, evals] : per_category) {
            double passed = 0.0;
            for (const auto& ev : evals) {
                bool ok = false;
                switch (metric) {
                    case ApMetric::kNiou: ok = ev.niou > tau; break;
                    case ApMetric::kIouAbsolute: ok = ev.iou_abs > tau; break;
                    case ApMetric::kRotationDeg: ok = ev.rot_deg < tau; break;
                    case ApMetric::kTranslationRatio: ok = ev.t_ratio < tau; break;
                    case ApMetric::kTranslationMeters: ok = ev.t_err_m < tau; break;
                }
                passed += ok ? 1.0 : 0.0;
            }
            ap += 100.0 * passed / static_cast<double>(evals.size());
        }
        curve.emplace_back(tau, ap / static_cast<double>(per_category.size()));
    }
    return curve;
}

}  // namespace lmmpose
