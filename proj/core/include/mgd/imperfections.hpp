#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mgd/rng.hpp"

namespace mgd {

/// Hardware non-ideality knobs. All-zero reproduces ideal training bit-exactly
/// (no noise stream is consumed when a sigma is zero).
struct ImperfectionConfig {
    double sigma_c = 0.0;      // cost-signal noise, in units of the measured RMS cost modulation
    double sigma_theta = 0.0;  // parameter-update noise; per-component std is sigma_theta / delta_theta
    double sigma_a = 0.0;      // std of per-neuron activation scale/offset defects
    std::uint64_t defect_seed = 0;

    bool any() const { return sigma_c > 0.0 || sigma_theta > 0.0 || sigma_a > 0.0; }
};

/// Static per-neuron generalized-logistic parameters:
///   f_k(a) = alpha_k / (1 + exp(-beta_k * (a - a_k))) + b_k
/// alpha, beta are N(1, sigma_a^2); a, b are N(0, sigma_a^2). Fixed at
/// construction; sigma_a = 0 degenerates to the plain sigmoid.
struct DefectTable {
    std::vector<double> alpha, beta, a, b;

    std::size_t size() const { return alpha.size(); }
};

DefectTable make_defect_table(std::size_t neuron_count, double sigma_a, std::uint64_t seed);

inline double defect_logistic(const DefectTable& table, std::size_t k, double pre_activation) {
    return table.alpha[k] / (1.0 + std::exp(-table.beta[k] * (pre_activation - table.a[k]))) +
           table.b[k];
}

/// Additive Gaussian cost noise. `noise_unit` is the normalization scale
/// (the trainer measures the RMS cost modulation over 100 probe steps at run
/// start and passes sigma_c in those units). sigma_c = 0 returns cost
/// unchanged without consuming the RNG.
double apply_cost_noise(double cost, double sigma_c, double noise_unit, Rng& rng);

/// Stochastic parameter update: theta <- theta - eta * g + N(0, sigma_theta / delta_theta)
/// per component. sigma_theta = 0 gives the exact deterministic update.
void noisy_param_update(std::span<double> theta, std::span<const double> g, double eta,
                        double sigma_theta, double delta_theta, Rng& rng);

}  // namespace mgd
