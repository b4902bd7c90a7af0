#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lmmpose {

// Seeded generator with hand-rolled draw routines so that results are
// reproducible across standard library implementations (std distributions
// are not portable).  One instance per call chain, no global state.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1].
    double uniform_pos() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
        const double theta = 2.0 * M_PI * uniform();
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // Laplace(mu, b) via inverse CDF.
    double laplace(double mu, double b) {
        const double u = uniform() - 0.5;
        const double m = std::max(1.0 - 2.0 * std::abs(u), 0x1.0p-53);
        return mu - b * (u < 0.0 ? -1.0 : 1.0) * std::log(m);
    }

    // Integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        // Rejection-free modulo is biased for huge n; n here is tiny.
        return engine_() % n;
    }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stream-derived seed (splitmix64 finalizer) so that parallel trials stay
// reproducible and decorrelated.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace lmmpose
