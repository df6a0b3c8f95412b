#include "mgd/imperfections.hpp"

#include <stdexcept>

namespace mgd {

DefectTable make_defect_table(std::size_t neuron_count, double sigma_a, std::uint64_t seed) {
    if (sigma_a < 0.0) throw std::invalid_argument("make_defect_table: sigma_a must be >= 0");
    DefectTable table;
    table.alpha.assign(neuron_count, 1.0);
    table.beta.assign(neuron_count, 1.0);
    table.a.assign(neuron_count, 0.0);
    table.b.assign(neuron_count, 0.0);
    if (sigma_a == 0.0) return table;
    Rng rng(seed);
    std::normal_distribution<double> scale(1.0, sigma_a);
    std::normal_distribution<double> offset(0.0, sigma_a);
    // draw order per neuron: alpha, beta, a, b
    for (std::size_t k = 0; k < neuron_count; ++k) {
        table.alpha[k] = scale(rng);
        table.beta[k] = scale(rng);
        table.a[k] = offset(rng);
        table.b[k] = offset(rng);
    }
    return table;
}

double apply_cost_noise(double cost, double sigma_c, double noise_unit, Rng& rng) {
    if (sigma_c < 0.0) throw std::invalid_argument("apply_cost_noise: sigma_c must be >= 0");
    if (sigma_c == 0.0 || noise_unit <= 0.0) return cost;
    std::normal_distribution<double> noise(0.0, sigma_c * noise_unit);
    return cost + noise(rng);
}

void noisy_param_update(std::span<double> theta, std::span<const double> g, double eta,
                        double sigma_theta, double delta_theta, Rng& rng) {
    if (theta.size() != g.size()) {
        throw std::invalid_argument("noisy_param_update: theta/gradient size mismatch");
    }
    if (sigma_theta < 0.0) throw std::invalid_argument("noisy_param_update: sigma_theta >= 0");
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * g[i];
    if (sigma_theta > 0.0) {
        if (!(delta_theta > 0.0)) {
            throw std::invalid_argument("noisy_param_update: delta_theta must be > 0");
        }
        std::normal_distribution<double> noise(0.0, sigma_theta / delta_theta);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += noise(rng);
    }
}

}  // namespace mgd
