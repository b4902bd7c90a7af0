#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lmmpose/geometry.hpp"

namespace lmmpose {

// 2D detection used to make the translation encoding crop-invariant.
struct DetectionBox {
    double c_x = 0.0;
    double c_y = 0.0;
    double w_box = 1.0;
    double h_box = 1.0;
    double s_in = 1.0;

    DetectionBox() = default;
    DetectionBox(double cx, double cy, double w, double h, double s_in_)
        : c_x(cx), c_y(cy), w_box(w), h_box(h), s_in(s_in_) {
        if (!(w_box > 0.0) || !(h_box > 0.0) || !(s_in > 0.0)) {
            throw std::invalid_argument("DetectionBox: w_box, h_box, s_in must be positive");
        }
    }

    double s_box() const { return std::max(w_box, h_box); }
};

// Dimensionless translation parameters (delta_x, delta_y, delta_z).
struct TranslationParams {
    double dx = 0.0;
    double dy = 0.0;
    double dz = 0.0;
};

// Per-category mean normalized size; size predictions are deltas against it.
class SizeCodebook {
  public:
    SizeCodebook() = default;

    void insert(const std::string& category, const Eigen::Vector3d& s_avg) {
        if (!(s_avg.minCoeff() > 0.0) || s_avg.norm() > 1.0 + 1e-9) {
            throw std::invalid_argument("SizeCodebook: s_avg for '" + category +
                                        "' must have positive components and norm <= 1");
        }
        entries_[category] = s_avg;
    }

    const Eigen::Vector3d& at(const std::string& category) const {
        auto it = entries_.find(category);
        if (it == entries_.end()) {
            throw std::out_of_range("SizeCodebook: unknown category '" + category + "'");
        }
        return it->second;
    }

    bool contains(const std::string& category) const { return entries_.count(category) > 0; }
    const std::map<std::string, Eigen::Vector3d>& entries() const { return entries_; }

  private:
    std::map<std::string, Eigen::Vector3d> entries_;
};

// Splits a metric pose into its scale-agnostic part and the bounding-box
// diagonal d = |size|_2.
inline std::pair<ScaleAgnosticPose, double> normalize_pose(const Pose9D& pose) {
    const double d = pose.size.norm();
    return {ScaleAgnosticPose(pose.rotation, pose.translation / d, pose.size / d), d};
}

inline Pose9D denormalize_pose(const ScaleAgnosticPose& sap, double d) {
    if (!(d > 0.0)) {
        throw std::invalid_argument("denormalize_pose: d must be positive");
    }
    return Pose9D(sap.rotation, d * sap.t_norm, d * sap.s_norm);
}

// Detection-invariant encoding of the projected object center o and the
// normalized depth t_z_norm.
inline TranslationParams encode_translation(const Eigen::Vector2d& o, double t_z_norm,
                                            const DetectionBox& box) {
    TranslationParams p;
    p.dx = (o.x() - box.c_x) / box.w_box;
    p.dy = (o.y() - box.c_y) / box.h_box;
    p.dz = t_z_norm * box.s_box() / box.s_in;
    return p;
}

inline Eigen::Vector3d decode_translation(const TranslationParams& params, const DetectionBox& box,
                                          const Intrinsics& k) {
    const double o_x = params.dx * box.w_box + box.c_x;
    const double o_y = params.dy * box.h_box + box.c_y;
    const double t_z_norm = params.dz * box.s_in / box.s_box();
    if (!(t_z_norm > 0.0)) {
        throw std::invalid_argument("decode_translation: recovered t_z_norm is not positive");
    }
    return backproject(k, {o_x, o_y}, t_z_norm);
}

inline Eigen::Vector3d encode_size(const Eigen::Vector3d& s_norm, const std::string& category,
                                   const SizeCodebook& codebook) {
    return s_norm - codebook.at(category);
}

inline Eigen::Vector3d decode_size(const Eigen::Vector3d& s_out, const std::string& category,
                                   const SizeCodebook& codebook) {
    return s_out + codebook.at(category);
}

// Codebook from raw (category, s_norm) observations; the Scene-level overload
// lives with the scene type.
inline SizeCodebook compute_codebook(const std::vector<std::pair<std::string, Eigen::Vector3d>>& samples) {
    if (samples.empty()) {
        throw std::invalid_argument("compute_codebook: no instances given");
    }
    std::map<std::string, std::pair<Eigen::Vector3d, int>> acc;
    for (const auto& [category, s_norm] : samples) {
        auto& slot = acc.try_emplace(category, Eigen::Vector3d::Zero(), 0).first->second;
        slot.first += s_norm;
        slot.second += 1;
    }
    SizeCodebook book;
    for (const auto& [category, slot] : acc) {
        book.insert(category, slot.first / slot.second);
    }
    return book;
}

}  // namespace lmmpose
