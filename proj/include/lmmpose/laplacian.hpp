#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lmmpose/random.hpp"

namespace lmmpose {

// Floor used wherever sigma^2 appears in a denominator.
inline constexpr double kSigmaFloor = 1e-8;

using MaskArray = Eigen::Array<bool, Eigen::Dynamic, 1>;

// sigma^2 is the Laplace variance; the scale parameter b follows from
// Var = 2 b^2. This is the single place the convention lives.
inline double laplace_scale_from_sigma2(double sigma2) { return std::sqrt(sigma2 / 2.0); }

// Per-point Laplacian distribution over NOCS coordinates.
struct LaplacianMap {
    Eigen::MatrixX3d mu;      // N x 3 means
    Eigen::MatrixX3d sigma2;  // N x 3 variances, > 0
    MaskArray mask;           // N visibility flags

    LaplacianMap() = default;
    LaplacianMap(Eigen::MatrixX3d mu_, Eigen::MatrixX3d sigma2_, MaskArray mask_)
        : mu(std::move(mu_)), sigma2(std::move(sigma2_)), mask(std::move(mask_)) {
        validate();
    }

    Eigen::Index size() const { return mu.rows(); }
    Eigen::Index visible_count() const { return mask.count(); }

    void validate() const {
        if (sigma2.rows() != mu.rows() || mask.size() != mu.rows()) {
            throw std::invalid_argument("LaplacianMap: mu, sigma2 and mask must share N");
        }
        if (!mu.allFinite()) {
            throw std::invalid_argument("LaplacianMap: mu must be finite");
        }
        if (mu.rows() > 0 && !(sigma2.minCoeff() > 0.0)) {
            throw std::invalid_argument("LaplacianMap: sigma2 must be positive everywhere");
        }
    }
};

// Two-component mixture; both components describe the same points and share
// the visibility mask.
struct LaplacianMixture {
    std::array<LaplacianMap, 2> components;
    Eigen::Vector2d weights = Eigen::Vector2d::Constant(0.5);

    LaplacianMixture() = default;
    LaplacianMixture(LaplacianMap a, LaplacianMap b, const Eigen::Vector2d& w = Eigen::Vector2d::Constant(0.5))
        : components{std::move(a), std::move(b)}, weights(w) {
        validate();
    }

    Eigen::Index size() const { return components[0].size(); }
    const MaskArray& mask() const { return components[0].mask; }

    void validate() const {
        components[0].validate();
        components[1].validate();
        if (components[0].size() != components[1].size()) {
            throw std::invalid_argument("LaplacianMixture: components must share N");
        }
        if ((components[0].mask != components[1].mask).any()) {
            throw std::invalid_argument("LaplacianMixture: components must share the mask");
        }
        if (weights.minCoeff() < 0.0 || std::abs(weights.sum() - 1.0) > 1e-12) {
            throw std::invalid_argument("LaplacianMixture: weights must be nonnegative and sum to 1");
        }
    }
};

struct AleatoricLoss {
    double loss = 0.0;
    Eigen::MatrixX3d grad_mu;
    Eigen::MatrixX3d grad_sigma2;
};

// Aleatoric uncertainty loss over visible entries:
//   sum_visible [ lambda |gt - mu| / sigma^2 + log sigma^2 ]
// with analytic gradients. Masked entries contribute nothing.
inline AleatoricLoss aleatoric_loss(const LaplacianMap& map, const Eigen::MatrixX3d& gt, double lambda,
                                    bool mean_reduction = false) {
    map.validate();
    if (gt.rows() != map.mu.rows()) {
        throw std::invalid_argument("aleatoric_loss: gt shape does not match map");
    }
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("aleatoric_loss: lambda must be positive");
    }
    AleatoricLoss out;
    out.grad_mu = Eigen::MatrixX3d::Zero(map.mu.rows(), 3);
    out.grad_sigma2 = Eigen::MatrixX3d::Zero(map.mu.rows(), 3);
    Eigen::Index n_vis = 0;
    for (Eigen::Index i = 0; i < map.mu.rows(); ++i) {
        if (!map.mask(i)) continue;
        ++n_vis;
        for (int a = 0; a < 3; ++a) {
            const double e = gt(i, a) - map.mu(i, a);
            const double ae = std::abs(e);
            const double s2 = std::max(map.sigma2(i, a), kSigmaFloor);
            out.loss += lambda * ae / s2 + std::log(s2);
            const double sgn = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);
            out.grad_mu(i, a) = -lambda * sgn / s2;
            if (map.sigma2(i, a) > kSigmaFloor) {
                out.grad_sigma2(i, a) = -lambda * ae / (s2 * s2) + 1.0 / s2;
            }
        }
    }
    if (mean_reduction && n_vis > 0) {
        const double inv = 1.0 / static_cast<double>(3 * n_vis);
        out.loss *= inv;
        out.grad_mu *= inv;
        out.grad_sigma2 *= inv;
    }
    return out;
}

// Stationary point of lambda |e| / s + log s over s > 0, floored for |e| = 0.
inline double optimal_sigma2(double abs_err, double lambda) {
    if (abs_err < 0.0 || !(lambda > 0.0)) {
        throw std::invalid_argument("optimal_sigma2: need abs_err >= 0 and lambda > 0");
    }
    return std::max(lambda * abs_err, kSigmaFloor);
}

// Draws `count` full NOCS maps from the mixture. Component choice and the
// per-axis inverse-CDF draws consume the generator in a fixed order.
inline std::vector<Eigen::MatrixX3d> sample_mixture(const LaplacianMixture& mixture, int count, Rng& rng) {
    if (count < 1) {
        throw std::invalid_argument("sample_mixture: count must be >= 1");
    }
    const Eigen::Index n = mixture.size();
    std::vector<Eigen::MatrixX3d> draws(static_cast<std::size_t>(count));
    for (auto& draw : draws) {
        draw.resize(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int k = rng.uniform() < mixture.weights(0) ? 0 : 1;
            const LaplacianMap& comp = mixture.components[static_cast<std::size_t>(k)];
            for (int a = 0; a < 3; ++a) {
                draw(i, a) = rng.laplace(comp.mu(i, a), laplace_scale_from_sigma2(comp.sigma2(i, a)));
            }
        }
    }
    return draws;
}

struct FusedMap {
    Eigen::MatrixX3d mu;     // N x 3 precision-weighted means
    Eigen::VectorXd weight;  // N per-point scalar precisions, 0 for masked points
};

// Deterministic summary of the mixture: per-axis precision-weighted mean and
// a per-point scalar weight from the axis-averaged variances.
inline FusedMap fuse(const LaplacianMixture& mixture) {
    mixture.validate();
    const Eigen::Index n = mixture.size();
    FusedMap out;
    out.mu.resize(n, 3);
    out.weight.resize(n);
    const auto& c0 = mixture.components[0];
    const auto& c1 = mixture.components[1];
    const double w0 = mixture.weights(0), w1 = mixture.weights(1);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            const double p0 = w0 / std::max(c0.sigma2(i, a), kSigmaFloor);
            const double p1 = w1 / std::max(c1.sigma2(i, a), kSigmaFloor);
            out.mu(i, a) = (p0 * c0.mu(i, a) + p1 * c1.mu(i, a)) / (p0 + p1);
        }
        const double sbar0 = c0.sigma2.row(i).mean();
        const double sbar1 = c1.sigma2.row(i).mean();
        out.weight(i) = mixture.mask()(i)
                            ? w0 / std::max(sbar0, kSigmaFloor) + w1 / std::max(sbar1, kSigmaFloor)
                            : 0.0;
    }
    return out;
}

// Negative log density of the mixture at x for one point, via log-sum-exp.
inline double mixture_nll(const LaplacianMixture& mixture, Eigen::Index point_index, const Eigen::Vector3d& x) {
    if (point_index < 0 || point_index >= mixture.size()) {
        throw std::out_of_range("mixture_nll: point index out of range");
    }
    std::array<double, 2> log_terms{};
    int n_terms = 0;
    for (int k = 0; k < 2; ++k) {
        const double w = mixture.weights(k);
        if (w <= 0.0) continue;
        const auto& comp = mixture.components[static_cast<std::size_t>(k)];
        double ld = std::log(w);
        for (int a = 0; a < 3; ++a) {
            const double b = laplace_scale_from_sigma2(std::max(comp.sigma2(point_index, a), kSigmaFloor));
            ld += -std::log(2.0 * b) - std::abs(x(a) - comp.mu(point_index, a)) / b;
        }
        log_terms[static_cast<std::size_t>(n_terms++)] = ld;
    }
    const double m = n_terms == 2 ? std::max(log_terms[0], log_terms[1]) : log_terms[0];
    double s = 0.0;
    for (int k = 0; k < n_terms; ++k) s += std::exp(log_terms[static_cast<std::size_t>(k)] - m);
    return -(m + std::log(s));
}

}  // namespace lmmpose
