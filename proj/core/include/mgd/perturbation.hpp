#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mgd/rng.hpp"

namespace mgd {

enum class PerturbKind {
    Sinusoidal,          // theta~_i = delta_theta * sin(2*pi*f_i * n * dt), distinct tones
    SequentialDiscrete,  // one parameter at a time gets +delta_theta
    WalshCode,           // deterministic orthogonal +-delta_theta square waves
    RandomCode,          // i.i.d. +-delta_theta, statistically orthogonal
};

struct PerturbationScheme {
    PerturbKind kind = PerturbKind::RandomCode;
    double delta_theta = 0.01;  // perturbation amplitude
    std::int64_t tau_p = 1;     // steps between refreshes (discrete kinds)
    double bandwidth = 0.0;     // sinusoidal: total frequency span (cycles per time unit)
    double dt = 1.0;            // sinusoidal: time per step
    std::uint64_t seed = 0;     // random codes

    static PerturbationScheme sinusoidal(double bandwidth, double dt = 1.0,
                                         double delta_theta = 0.01);
    static PerturbationScheme sequential(std::int64_t tau_p = 1, double delta_theta = 0.01);
    static PerturbationScheme walsh(std::int64_t tau_p = 1, double delta_theta = 0.01);
    static PerturbationScheme random(std::uint64_t seed, std::int64_t tau_p = 1,
                                     double delta_theta = 0.01);
};

/// P equally spaced tones at multiples of bandwidth/P, the highest at
/// `bandwidth`. Throws if the top tone reaches the Nyquist limit 1/(2*dt).
std::vector<double> assign_frequencies(std::size_t param_count, double bandwidth, double dt);

/// Stateful generator for the per-step perturbation vector. Single-owner
/// mutable; the scheme itself is immutable and shareable.
class PerturbationSource {
  public:
    PerturbationSource(const PerturbationScheme& scheme, std::size_t param_count);

    /// Fill `out` with the perturbation for the current step, then advance.
    /// Every entry satisfies |v| <= delta_theta. Code kinds refresh every
    /// tau_p steps and hold in between; the sequential kind emits +delta_theta
    /// at parameter floor(n / tau_p) mod P.
    void next(std::span<double> out);

    std::int64_t step() const { return step_; }
    std::size_t param_count() const { return param_count_; }
    const PerturbationScheme& scheme() const { return scheme_; }
    void reset();

  private:
    void refresh_code();

    PerturbationScheme scheme_;
    std::size_t param_count_;
    std::int64_t step_ = 0;
    std::vector<double> frequencies_;      // sinusoidal
    std::vector<std::int8_t> code_signs_;  // current held code column
    std::vector<std::uint64_t> walsh_rows_;  // row index per parameter (Hadamard order)
    std::int64_t walsh_column_ = 0;
    std::size_t code_length_ = 0;  // L for walsh
    Rng rng_;
};

struct OrthogonalityReport {
    double max_abs_correlation = 0.0;  // max over pairs of |cosine similarity| of the streams
    double max_abs_mean = 0.0;         // max over parameters of |time average| / delta_theta
};

/// Empirical pairwise correlation and mean of the perturbation streams over a
/// window. Walsh codes measured over whole code periods report exact zeros.
OrthogonalityReport orthogonality_report(const PerturbationScheme& scheme,
                                         std::size_t param_count, std::int64_t window);

}  // namespace mgd
