#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgd/datasets.hpp"
#include "mgd/imperfections.hpp"
#include "mgd/network.hpp"
#include "mgd/perturbation.hpp"

namespace mgd {

/// tau_theta value meaning "integrate G forever, never update" (discrete mode
/// only); used by the gradient-angle protocol.
inline constexpr std::int64_t kAccumulateForever = 0;

/// Time constants and update parameters. In discrete mode tau_p, tau_theta
/// and tau_x count steps; in analog mode tau_x and tau_p still count steps of
/// size dt, while the integration constant is tau_theta * dt and tau_hp is in
/// time units. Batch size = (tau_theta / tau_x) * parallel_batch.
struct ClockConfig {
    std::int64_t tau_p = 1;
    std::int64_t tau_theta = 1;  // kAccumulateForever = never update
    std::int64_t tau_x = 1;
    double tau_hp = 10.0;
    double dt = 1.0;
    double eta = 1.0;
    double delta_theta = 0.01;
    int parallel_batch = 1;  // samples evaluated simultaneously per step, same perturbation
};

enum class Mode { Discrete, Analog };
enum class SampleOrder { Cyclic, Random };

struct StopConditions {
    std::int64_t max_steps = 10000;
    double cost_threshold = 0.0;      // stop when dataset mean cost <= this; <= 0 disables
    double accuracy_threshold = 0.0;  // stop when accuracy >= this; <= 0 disables
};

struct TraceRecord {
    std::int64_t step = 0;
    double cost = 0.0;      // dataset mean cost (noiseless diagnostic)
    double accuracy = 0.0;
    double g_norm = 0.0;
    std::uint64_t theta_checksum = 0;
};

struct TrainingTrace {
    std::int64_t stride = 0;
    std::vector<TraceRecord> records;
};

enum class StopReason { MaxSteps, CostThreshold, AccuracyThreshold };

struct RunResult {
    StopReason stop = StopReason::MaxSteps;
    bool converged = false;
    std::int64_t steps = 0;
    std::int64_t threshold_step = -1;  // first evaluation step meeting a threshold
    double final_cost = 0.0;
    double final_accuracy = 0.0;
};

/// Thrown when a cost or parameter becomes non-finite during training.
struct TrainingDiverged : std::runtime_error {
    TrainingDiverged(const std::string& what, std::int64_t at_step)
        : std::runtime_error(what), step(at_step) {}
    std::int64_t step;
};

/// First-order IIR highpass, the analog tc extractor:
///   y(t) = tau/(tau+dt) * (y(t-dt) + x(t) - x(t-dt))
/// Construct with the signal's initial value to start transient-free.
struct HighpassFilter {
    double tau, dt;
    double prev_input, prev_output;

    HighpassFilter(double tau_, double dt_, double initial_input = 0.0,
                   double initial_output = 0.0)
        : tau(tau_), dt(dt_), prev_input(initial_input), prev_output(initial_output) {}

    double step(double input) {
        const double out = tau / (tau + dt) * (prev_output + input - prev_input);
        prev_input = input;
        prev_output = out;
        return out;
    }
};

/// First-order IIR lowpass used for the analog G integrator:
///   y(t) = dt/(tau+dt) * (x(t) + (tau/dt) * y(t-dt))
/// A constant input converges to itself (unit DC gain).
struct LowpassFilter {
    double tau, dt;
    double state = 0.0;

    LowpassFilter(double tau_, double dt_) : tau(tau_), dt(dt_) {}

    double step(double input) {
        state = dt / (tau + dt) * (input + (tau / dt) * state);
        return state;
    }
};

/// One training run: owns the parameter vector, gradient accumulator, filter
/// states, perturbation source and RNG streams. The clock config is
/// authoritative: the scheme's delta_theta / tau_p / dt are overridden from
/// the clocks, and the code seed is derived from (run seed, scheme seed).
class Trainer {
  public:
    Trainer(const Network& net, const Dataset& data, Mode mode, const ClockConfig& clocks,
            const PerturbationScheme& scheme, const ImperfectionConfig& imperfections,
            std::uint64_t seed, SampleOrder order = SampleOrder::Cyclic, double init_scale = 1.0);

    /// Execute one iteration (discrete or analog, per mode).
    void step();

    /// Step until a stop condition fires. Thresholds are checked every
    /// `stride` steps against the noiseless full-dataset cost/accuracy; the
    /// same instants are appended to `trace` when given.
    RunResult run(const StopConditions& stop, std::int64_t stride = 100,
                  TrainingTrace* trace = nullptr);

    std::int64_t step_count() const { return step_; }
    std::span<const double> params() const { return theta_; }
    void set_params(std::span<const double> params);
    std::span<const double> gradient_accum() const { return grad_; }
    const Network& network() const { return net_; }
    const DefectTable* defects() const { return defects_.size() ? &defects_ : nullptr; }
    const ClockConfig& clocks() const { return clocks_; }

    /// Noiseless full-dataset diagnostics (evaluated on the defective network
    /// when activation defects are enabled).
    double eval_mean_cost();
    double eval_accuracy();

    /// Called with (step, G) immediately before every parameter update.
    using UpdateObserver = std::function<void(std::int64_t step, std::span<const double> g)>;
    void set_update_observer(UpdateObserver observer) { observer_ = std::move(observer); }

  private:
    void discrete_step();
    void analog_step();
    void advance_samples();
    double measure_cost(std::span<const double> effective_params);
    void apply_update();
    void check_finite_params();
    double measure_noise_unit();

    Network net_;
    const Dataset* data_;
    Mode mode_;
    ClockConfig clocks_;
    ImperfectionConfig imp_;
    SampleOrder order_;

    ParamVector theta_;
    std::vector<double> grad_;         // G
    std::vector<double> pert_;         // current theta~
    std::vector<double> theta_eff_;    // theta + theta~ scratch
    std::vector<double> output_;
    Workspace ws_;
    DefectTable defects_;

    PerturbationSource source_;
    std::vector<std::size_t> sample_idx_;
    std::size_t sample_cursor_ = 0;
    Rng sampling_rng_;
    Rng noise_rng_;

    std::int64_t step_ = 0;
    double baseline_cost_ = 0.0;
    double noise_unit_ = 0.0;  // RMS cost modulation measured at run start
    std::int64_t analog_sample_stride_ = 1;
    std::optional<HighpassFilter> highpass_;
    UpdateObserver observer_;
};

struct TrainOutcome {
    RunResult result;
    TrainingTrace trace;
    ParamVector final_params;
};

/// Convenience wrapper: build the network and trainer, run to a stop
/// condition, return the trace and final parameters. Deterministic per seed.
TrainOutcome train(const NetworkSpec& spec, const Dataset& data, Mode mode,
                   const ClockConfig& clocks, const PerturbationScheme& scheme,
                   const ImperfectionConfig& imperfections, const StopConditions& stop,
                   std::uint64_t seed, std::int64_t stride = 100,
                   SampleOrder order = SampleOrder::Cyclic, double init_scale = 1.0);

enum class PresetKind { FiniteDifference, CoordinateDescent, Spsa, AnalogHomodyne };

struct Preset {
    Mode mode;
    ClockConfig clocks;
    PerturbationScheme scheme;
};

/// Classic-algorithm configurations: finite difference (sequential,
/// tau_theta = P * tau_p), coordinate descent (sequential, tau_theta = tau_p),
/// SPSA (random codes, tau_theta = tau_p), analog homodyne (sinusoidal with
/// assigned frequencies). eta and delta_theta keep their defaults.
Preset preset(PresetKind kind, std::size_t param_count);
Preset preset(const std::string& name, std::size_t param_count);

/// Elapsed time in units of the perturbation timescale: steps / tau_p for
/// discrete runs, steps * dt * bandwidth for sinusoidal analog runs.
double tau_p_units(std::int64_t steps, Mode mode, const ClockConfig& clocks,
                   const PerturbationScheme& scheme);

}  // namespace mgd
