#include "mgd/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "mgd/rng.hpp"

namespace mgd {

namespace {

void validate_clocks(Mode mode, const ClockConfig& clocks) {
    if (clocks.tau_p < 1) throw std::invalid_argument("clocks: tau_p must be >= 1");
    if (clocks.tau_x < 1) throw std::invalid_argument("clocks: tau_x must be >= 1");
    if (clocks.tau_theta < 0) throw std::invalid_argument("clocks: tau_theta must be >= 0");
    if (!(clocks.delta_theta > 0.0)) throw std::invalid_argument("clocks: delta_theta must be > 0");
    if (clocks.eta < 0.0) throw std::invalid_argument("clocks: eta must be >= 0");
    if (clocks.parallel_batch < 1) throw std::invalid_argument("clocks: parallel_batch must be >= 1");
    if (mode == Mode::Analog) {
        if (!(clocks.dt > 0.0)) throw std::invalid_argument("clocks: analog dt must be > 0");
        if (!(clocks.tau_hp > 0.0)) throw std::invalid_argument("clocks: tau_hp must be > 0");
        if (clocks.tau_theta < 1) {
            throw std::invalid_argument("clocks: analog tau_theta must be >= 1");
        }
    }
}

bool has_spatial_layers(const Network& net) {
    for (const auto& meta : net.layers()) {
        if (meta.kind == LayerSpec::Kind::Conv3x3 || meta.kind == LayerSpec::Kind::MaxPool2x2) {
            return true;
        }
    }
    return false;
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

Trainer::Trainer(const Network& net, const Dataset& data, Mode mode, const ClockConfig& clocks,
                 const PerturbationScheme& scheme, const ImperfectionConfig& imperfections,
                 std::uint64_t seed, SampleOrder order, double init_scale)
    : net_(net),
      data_(&data),
      mode_(mode),
      clocks_(clocks),
      imp_(imperfections),
      order_(order),
      source_(
          [&] {
              // the clock config is authoritative for amplitude and cadence
              PerturbationScheme effective = scheme;
              effective.delta_theta = clocks.delta_theta;
              effective.tau_p = clocks.tau_p;
              effective.dt = mode == Mode::Analog ? clocks.dt : 1.0;
              if (effective.kind == PerturbKind::RandomCode) {
                  effective.seed = derive_seed(seed ^ splitmix64(scheme.seed),
                                               stream_tag::perturbation);
              }
              return effective;
          }(),
          net.param_count()),
      sampling_rng_(derive_seed(seed, stream_tag::sampling)),
      noise_rng_(derive_seed(seed, stream_tag::noise)) {
    validate_clocks(mode, clocks);
    if (data.size() == 0) throw std::invalid_argument("trainer: empty dataset");
    if (mode == Mode::Analog && source_.scheme().kind == PerturbKind::SequentialDiscrete) {
        throw std::invalid_argument("trainer: analog mode needs sinusoidal or code perturbations");
    }
    if (has_spatial_layers(net_)) {
        if (!(net_.spec().input_shape == data.input_shape)) {
            throw std::invalid_argument("trainer: network input shape does not match dataset");
        }
    } else if (net_.input_size() != data.input_shape.size()) {
        throw std::invalid_argument("trainer: network expects " +
                                    std::to_string(net_.input_size()) + " inputs, dataset has " +
                                    std::to_string(data.input_shape.size()));
    }
    if (net_.output_size() != data.target_size) {
        throw std::invalid_argument("trainer: network outputs " +
                                    std::to_string(net_.output_size()) + ", dataset targets " +
                                    std::to_string(data.target_size));
    }

    if (imp_.sigma_a > 0.0) {
        net_ = Network(with_defect_activations(net_.spec()));
        defects_ = make_defect_table(net_.defect_unit_count(), imp_.sigma_a,
                                     derive_seed(seed ^ splitmix64(imp_.defect_seed),
                                                 stream_tag::defects));
    }

    theta_ = init_params(net_.spec(), derive_seed(seed, stream_tag::init), init_scale);
    grad_.assign(net_.param_count(), 0.0);
    pert_.resize(net_.param_count());
    theta_eff_.resize(net_.param_count());
    output_.resize(net_.output_size());
    sample_idx_.assign(clocks_.parallel_batch, 0);
    analog_sample_stride_ =
        std::max<std::int64_t>(1, std::llround(static_cast<double>(clocks_.tau_x) / clocks_.dt));

    if (imp_.sigma_c > 0.0) noise_unit_ = measure_noise_unit();
}

void Trainer::set_params(std::span<const double> params) {
    if (params.size() != theta_.size()) {
        throw std::invalid_argument("set_params: length mismatch");
    }
    std::copy(params.begin(), params.end(), theta_.begin());
}

void Trainer::advance_samples() {
    const std::size_t n = data_->size();
    for (auto& idx : sample_idx_) {
        if (order_ == SampleOrder::Cyclic) {
            idx = sample_cursor_;
            sample_cursor_ = (sample_cursor_ + 1) % n;
        } else {
            idx = std::uniform_int_distribution<std::size_t>(0, n - 1)(sampling_rng_);
        }
    }
}

double Trainer::measure_cost(std::span<const double> effective_params) {
    double total = 0.0;
    const DefectTable* table = defects();
    for (std::size_t idx : sample_idx_) {
        net_.forward(effective_params, data_->input(idx), output_, ws_, table);
        total += cost_mse(output_, data_->target(idx));
    }
    total = apply_cost_noise(total, imp_.sigma_c, noise_unit_, noise_rng_);
    if (!std::isfinite(total)) {
        throw TrainingDiverged("non-finite cost at step " + std::to_string(step_), step_);
    }
    return total;
}

double Trainer::measure_noise_unit() {
    // RMS of the ideal cost modulation over 100 probe perturbations of the
    // initial parameters, measured on the first sample block. Defines the
    // unit in which sigma_c is expressed.
    const int probes = 100;
    PerturbationSource probe(source_.scheme(), net_.param_count());
    std::vector<double> pert(net_.param_count());
    std::vector<std::size_t> block(clocks_.parallel_batch);
    for (std::size_t k = 0; k < block.size(); ++k) block[k] = k % data_->size();
    const DefectTable* table = defects();
    std::vector<double> y(net_.output_size());
    auto ideal_cost = [&](std::span<const double> params) {
        double total = 0.0;
        for (std::size_t idx : block) {
            net_.forward(params, data_->input(idx), y, ws_, table);
            total += cost_mse(y, data_->target(idx));
        }
        return total;
    };
    const double base = ideal_cost(theta_);
    double sum_sq = 0.0;
    for (int k = 0; k < probes; ++k) {
        probe.next(pert);
        for (std::size_t i = 0; i < theta_.size(); ++i) theta_eff_[i] = theta_[i] + pert[i];
        const double tc = ideal_cost(theta_eff_) - base;
        sum_sq += tc * tc;
    }
    return std::sqrt(sum_sq / probes);
}

void Trainer::check_finite_params() {
    for (double v : theta_) {
        if (!std::isfinite(v)) {
            throw TrainingDiverged("non-finite parameter at step " + std::to_string(step_), step_);
        }
    }
}

void Trainer::apply_update() {
    if (observer_) observer_(step_ + 1, grad_);
    noisy_param_update(theta_, grad_, clocks_.eta, imp_.sigma_theta, clocks_.delta_theta,
                       noise_rng_);
    check_finite_params();
    std::fill(grad_.begin(), grad_.end(), 0.0);
}

void Trainer::discrete_step() {
    const std::int64_t n = step_;
    if (n % clocks_.tau_x == 0) advance_samples();
    const bool update_boundary = clocks_.tau_theta != kAccumulateForever &&
                                 n % clocks_.tau_theta == 0;
    if (n % clocks_.tau_x == 0 || update_boundary) {
        baseline_cost_ = measure_cost(theta_);  // perturbations held at zero
    }
    source_.next(pert_);
    for (std::size_t i = 0; i < theta_.size(); ++i) theta_eff_[i] = theta_[i] + pert_[i];
    const double cost = measure_cost(theta_eff_);
    const double tc = cost - baseline_cost_;
    const double inv_amp_sq = 1.0 / (clocks_.delta_theta * clocks_.delta_theta);
    for (std::size_t i = 0; i < grad_.size(); ++i) {
        grad_[i] += tc * pert_[i] * inv_amp_sq;  // e = tc * theta~ / dtheta^2
    }
    if (clocks_.tau_theta != kAccumulateForever && (n + 1) % clocks_.tau_theta == 0) {
        apply_update();
    }
    step_ = n + 1;
}

void Trainer::analog_step() {
    const std::int64_t n = step_;
    if (n % analog_sample_stride_ == 0) advance_samples();
    source_.next(pert_);
    for (std::size_t i = 0; i < theta_.size(); ++i) theta_eff_[i] = theta_[i] + pert_[i];
    const double cost = measure_cost(theta_eff_);
    if (!highpass_) {
        // prime the filter with the first measurement so tc starts at zero
        highpass_.emplace(clocks_.tau_hp, clocks_.dt, cost, 0.0);
    }
    const double tc = highpass_->step(cost);
    const double dt = clocks_.dt;
    const double tau_theta = static_cast<double>(clocks_.tau_theta) * dt;
    const double gain = dt / (tau_theta + dt);
    const double feedback = tau_theta / dt;
    const double scale = dt / (clocks_.delta_theta * clocks_.delta_theta);
    for (std::size_t i = 0; i < grad_.size(); ++i) {
        const double e = tc * pert_[i] * scale;  // e = tc * theta~ * dt / dtheta^2
        grad_[i] = gain * (e + feedback * grad_[i]);
    }
    if (observer_) observer_(n + 1, grad_);
    noisy_param_update(theta_, grad_, clocks_.eta, imp_.sigma_theta, clocks_.delta_theta,
                       noise_rng_);
    check_finite_params();
    step_ = n + 1;
}

void Trainer::step() {
    if (mode_ == Mode::Discrete) {
        discrete_step();
    } else {
        analog_step();
    }
}

double Trainer::eval_mean_cost() { return dataset_mean_cost(net_, theta_, *data_, ws_, defects()); }

double Trainer::eval_accuracy() { return accuracy(net_, theta_, *data_, ws_, defects()); }

RunResult Trainer::run(const StopConditions& stop, std::int64_t stride, TrainingTrace* trace) {
    if (stride < 1) throw std::invalid_argument("run: stride must be >= 1");
    if (stop.max_steps < 0) throw std::invalid_argument("run: max_steps must be >= 0");
    if (trace) trace->stride = stride;
    RunResult result;
    while (true) {
        const bool last = step_ >= stop.max_steps;
        if (step_ % stride == 0 || last) {
            const double cost = eval_mean_cost();
            const double acc = eval_accuracy();
            result.final_cost = cost;
            result.final_accuracy = acc;
            if (trace) {
                trace->records.push_back(
                    {step_, cost, acc, l2_norm(grad_), param_checksum(theta_)});
            }
            if (stop.cost_threshold > 0.0 && cost <= stop.cost_threshold) {
                result.stop = StopReason::CostThreshold;
                result.converged = true;
                result.threshold_step = step_;
                break;
            }
            if (stop.accuracy_threshold > 0.0 && acc >= stop.accuracy_threshold) {
                result.stop = StopReason::AccuracyThreshold;
                result.converged = true;
                result.threshold_step = step_;
                break;
            }
        }
        if (last) {
            result.stop = StopReason::MaxSteps;
            break;
        }
        step();
    }
    result.steps = step_;
    return result;
}

TrainOutcome train(const NetworkSpec& spec, const Dataset& data, Mode mode,
                   const ClockConfig& clocks, const PerturbationScheme& scheme,
                   const ImperfectionConfig& imperfections, const StopConditions& stop,
                   std::uint64_t seed, std::int64_t stride, SampleOrder order, double init_scale) {
    Network net(spec);
    Trainer trainer(net, data, mode, clocks, scheme, imperfections, seed, order, init_scale);
    TrainOutcome outcome;
    outcome.result = trainer.run(stop, stride, &outcome.trace);
    outcome.final_params.assign(trainer.params().begin(), trainer.params().end());
    return outcome;
}

Preset preset(PresetKind kind, std::size_t param_count) {
    if (param_count < 1) throw std::invalid_argument("preset: need P >= 1");
    Preset p;
    p.mode = Mode::Discrete;
    switch (kind) {
        case PresetKind::FiniteDifference:
            // one full sequential sweep per update, sample held for the sweep
            p.scheme = PerturbationScheme::sequential();
            p.clocks.tau_p = 1;
            p.clocks.tau_theta = static_cast<std::int64_t>(param_count);
            p.clocks.tau_x = static_cast<std::int64_t>(param_count);
            break;
        case PresetKind::CoordinateDescent:
            p.scheme = PerturbationScheme::sequential();
            p.clocks.tau_p = 1;
            p.clocks.tau_theta = 1;
            p.clocks.tau_x = 1;
            break;
        case PresetKind::Spsa:
            p.scheme = PerturbationScheme::random(0);
            p.clocks.tau_p = 1;
            p.clocks.tau_theta = 1;
            p.clocks.tau_x = 1;
            break;
        case PresetKind::AnalogHomodyne:
            p.mode = Mode::Analog;
            p.scheme = PerturbationScheme::sinusoidal(0.3, 1.0);
            p.clocks.dt = 1.0;
            p.clocks.tau_hp = 10.0;
            p.clocks.tau_theta = 1;
            p.clocks.tau_x = 1;
            p.clocks.tau_p = 3;  // ~1/bandwidth
            break;
    }
    p.scheme.delta_theta = p.clocks.delta_theta;
    p.scheme.tau_p = p.clocks.tau_p;
    return p;
}

Preset preset(const std::string& name, std::size_t param_count) {
    if (name == "finite_difference") return preset(PresetKind::FiniteDifference, param_count);
    if (name == "coordinate_descent") return preset(PresetKind::CoordinateDescent, param_count);
    if (name == "spsa") return preset(PresetKind::Spsa, param_count);
    if (name == "analog_homodyne") return preset(PresetKind::AnalogHomodyne, param_count);
    throw std::invalid_argument("preset: unknown name '" + name + "'");
}

double tau_p_units(std::int64_t steps, Mode mode, const ClockConfig& clocks,
                   const PerturbationScheme& scheme) {
    if (mode == Mode::Analog && scheme.kind == PerturbKind::Sinusoidal && scheme.bandwidth > 0.0) {
        return static_cast<double>(steps) * clocks.dt * scheme.bandwidth;  // t / (1/bandwidth)
    }
    return static_cast<double>(steps) / static_cast<double>(clocks.tau_p);
}

}  // namespace mgd
