#include "mgd/perturbation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mgd {

PerturbationScheme PerturbationScheme::sinusoidal(double bandwidth, double dt,
                                                  double delta_theta) {
    PerturbationScheme s;
    s.kind = PerturbKind::Sinusoidal;
    s.bandwidth = bandwidth;
    s.dt = dt;
    s.delta_theta = delta_theta;
    return s;
}

PerturbationScheme PerturbationScheme::sequential(std::int64_t tau_p, double delta_theta) {
    PerturbationScheme s;
    s.kind = PerturbKind::SequentialDiscrete;
    s.tau_p = tau_p;
    s.delta_theta = delta_theta;
    return s;
}

PerturbationScheme PerturbationScheme::walsh(std::int64_t tau_p, double delta_theta) {
    PerturbationScheme s;
    s.kind = PerturbKind::WalshCode;
    s.tau_p = tau_p;
    s.delta_theta = delta_theta;
    return s;
}

PerturbationScheme PerturbationScheme::random(std::uint64_t seed, std::int64_t tau_p,
                                              double delta_theta) {
    PerturbationScheme s;
    s.kind = PerturbKind::RandomCode;
    s.seed = seed;
    s.tau_p = tau_p;
    s.delta_theta = delta_theta;
    return s;
}

std::vector<double> assign_frequencies(std::size_t param_count, double bandwidth, double dt) {
    if (param_count < 1) throw std::invalid_argument("assign_frequencies: need P >= 1");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("assign_frequencies: bandwidth must be > 0");
    if (!(dt > 0.0)) throw std::invalid_argument("assign_frequencies: dt must be > 0");
    const double nyquist = 1.0 / (2.0 * dt);
    if (bandwidth >= nyquist) {
        throw std::invalid_argument("assign_frequencies: top tone " + std::to_string(bandwidth) +
                                    " reaches the Nyquist limit " + std::to_string(nyquist));
    }
    std::vector<double> freqs(param_count);
    const double spacing = bandwidth / static_cast<double>(param_count);
    for (std::size_t i = 0; i < param_count; ++i) {
        freqs[i] = spacing * static_cast<double>(i + 1);
    }
    return freqs;
}

namespace {

// Sylvester-ordered Hadamard sign: H[r][c] = (-1)^popcount(r & c).
inline double hadamard_sign(std::uint64_t row, std::uint64_t col) {
    return (std::popcount(row & col) & 1U) ? -1.0 : 1.0;
}

std::size_t walsh_length(std::size_t param_count) {
    // smallest power of two >= P + 1; the all-ones row 0 is excluded so every
    // used row is zero-mean
    std::size_t length = 1;
    while (length < param_count + 1) length <<= 1;
    return length;
}

}  // namespace

PerturbationSource::PerturbationSource(const PerturbationScheme& scheme, std::size_t param_count)
    : scheme_(scheme), param_count_(param_count), rng_(scheme.seed) {
    if (param_count_ < 1) throw std::invalid_argument("PerturbationSource: need P >= 1");
    if (!(scheme_.delta_theta > 0.0)) {
        throw std::invalid_argument("PerturbationSource: delta_theta must be > 0");
    }
    switch (scheme_.kind) {
        case PerturbKind::Sinusoidal:
            frequencies_ = assign_frequencies(param_count_, scheme_.bandwidth, scheme_.dt);
            break;
        case PerturbKind::SequentialDiscrete:
        case PerturbKind::WalshCode:
        case PerturbKind::RandomCode:
            if (scheme_.tau_p < 1) {
                throw std::invalid_argument("PerturbationSource: tau_p must be >= 1");
            }
            break;
    }
    if (scheme_.kind == PerturbKind::WalshCode) {
        code_length_ = walsh_length(param_count_);
    }
    code_signs_.assign(param_count_, 1);
}

void PerturbationSource::refresh_code() {
    if (scheme_.kind == PerturbKind::WalshCode) {
        const std::uint64_t col =
            static_cast<std::uint64_t>(step_ / scheme_.tau_p) % code_length_;
        for (std::size_t i = 0; i < param_count_; ++i) {
            code_signs_[i] = hadamard_sign(i + 1, col) > 0.0 ? 1 : -1;
        }
    } else {  // RandomCode: i.i.d. signs from the top bit of the generator
        for (std::size_t i = 0; i < param_count_; ++i) {
            code_signs_[i] = (rng_() >> 63) ? 1 : -1;
        }
    }
}

void PerturbationSource::next(std::span<double> out) {
    if (out.size() != param_count_) {
        throw std::invalid_argument("PerturbationSource::next: output has " +
                                    std::to_string(out.size()) + " slots, scheme has P = " +
                                    std::to_string(param_count_));
    }
    const double amp = scheme_.delta_theta;
    switch (scheme_.kind) {
        case PerturbKind::Sinusoidal: {
            const double t = static_cast<double>(step_) * scheme_.dt;
            for (std::size_t i = 0; i < param_count_; ++i) {
                out[i] = amp * std::sin(2.0 * std::numbers::pi * frequencies_[i] * t);
            }
            break;
        }
        case PerturbKind::SequentialDiscrete: {
            std::fill(out.begin(), out.end(), 0.0);
            const std::size_t idx =
                static_cast<std::size_t>(step_ / scheme_.tau_p) % param_count_;
            out[idx] = amp;
            break;
        }
        case PerturbKind::WalshCode:
        case PerturbKind::RandomCode: {
            if (step_ % scheme_.tau_p == 0) refresh_code();
            for (std::size_t i = 0; i < param_count_; ++i) out[i] = amp * code_signs_[i];
            break;
        }
    }
    ++step_;
}

void PerturbationSource::reset() {
    step_ = 0;
    rng_.seed(scheme_.seed);
    std::fill(code_signs_.begin(), code_signs_.end(), 1);
}

OrthogonalityReport orthogonality_report(const PerturbationScheme& scheme,
                                         std::size_t param_count, std::int64_t window) {
    if (window < 1) throw std::invalid_argument("orthogonality_report: window must be >= 1");
    PerturbationSource source(scheme, param_count);
    const std::size_t p = param_count;
    std::vector<double> value(p), sums(p, 0.0), sumsq(p, 0.0);
    std::vector<double> dots(p * p, 0.0);  // upper triangle used
    // accumulate in units of delta_theta so exact-code sums stay integral
    for (std::int64_t n = 0; n < window; ++n) {
        source.next(value);
        for (std::size_t i = 0; i < p; ++i) value[i] /= scheme.delta_theta;
        for (std::size_t i = 0; i < p; ++i) {
            sums[i] += value[i];
            sumsq[i] += value[i] * value[i];
            for (std::size_t j = i + 1; j < p; ++j) dots[i * p + j] += value[i] * value[j];
        }
    }
    OrthogonalityReport report;
    for (std::size_t i = 0; i < p; ++i) {
        report.max_abs_mean =
            std::max(report.max_abs_mean, std::abs(sums[i]) / static_cast<double>(window));
        for (std::size_t j = i + 1; j < p; ++j) {
            const double denom = std::sqrt(sumsq[i] * sumsq[j]);
            if (denom > 0.0) {
                report.max_abs_correlation =
                    std::max(report.max_abs_correlation, std::abs(dots[i * p + j]) / denom);
            }
        }
    }
    return report;
}

}  // namespace mgd
