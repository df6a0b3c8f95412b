#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgd/datasets.hpp"
#include "mgd/trainer.hpp"

namespace mgd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TaskConfig {
    std::string name;  // parity | nist7x7 | idx | cifar10
    // parity
    int n_bits = 2;
    // nist7x7
    int samples_per_class = 25;
    double pixel_flip_prob = 0.0;
    int shift_range = 0;
    std::uint64_t generator_seed = 1;
    // idx
    std::string images, labels;
    std::string test_images, test_labels;  // optional held-out split for accuracy
    // cifar10
    std::vector<std::string> batches;
};

/// A fully described experiment: task, network, mode, clocks, perturbation,
/// imperfections, stop conditions and the seed ensemble. Parsed from JSON;
/// unknown fields are rejected with a field-level message.
struct ExperimentConfig {
    int schema_version = 1;
    TaskConfig task;
    NetworkSpec network;  // input shape comes from the task; layer 'in' fields are inferred
    Mode mode = Mode::Discrete;
    ClockConfig clocks;
    PerturbationScheme scheme;
    ImperfectionConfig imperfections;
    StopConditions stop;
    std::vector<std::uint64_t> seeds;
    std::int64_t record_stride = 100;
    SampleOrder sample_order = SampleOrder::Cyclic;
    double init_scale = 1.0;
    std::string output_dir = "out";

    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

Dataset build_task_dataset(const TaskConfig& task);
/// Held-out evaluation split when the task provides one (idx test files);
/// otherwise returns false and evaluation uses the training set.
bool build_eval_dataset(const TaskConfig& task, Dataset& out);

struct ResultRecord {
    std::uint64_t seed = 0;
    bool converged = false;
    double time_to_threshold = 0.0;  // in tau_p units; NaN when not converged
    double final_accuracy = 0.0;
    double final_cost = 0.0;
};

struct EnsembleSummary {
    std::vector<ResultRecord> per_seed;
    double converged_fraction = 0.0;
    double q1_time = 0.0, median_time = 0.0, q3_time = 0.0;  // over converged seeds
    double median_final_accuracy = 0.0;
    double median_final_cost = 0.0;
};

EnsembleSummary summarize(std::vector<ResultRecord> per_seed);

/// Run every seed of the ensemble (seeds may execute concurrently; output is
/// deterministic). With write_files, emits trace_<seed>.csv, params_<seed>.bin
/// and summary.csv under output_dir.
EnsembleSummary run_experiment(const ExperimentConfig& config, bool write_files = false);

enum class SweepAxis { Eta, TauTheta, SigmaC, SigmaTheta, SigmaA };
SweepAxis sweep_axis_from_name(const std::string& name);

struct SweepPoint {
    double value = 0.0;
    EnsembleSummary summary;
};

struct SweepResult {
    SweepAxis axis;
    std::vector<SweepPoint> points;
    /// Eta sweeps only: largest value whose converged fraction is >= 0.5;
    /// NaN when no value qualifies.
    double max_eta = 0.0;
};

SweepResult run_sweep(const ExperimentConfig& config, SweepAxis axis,
                      const std::vector<double>& values, bool write_files = false);

/// Gradient-angle protocol: accumulate G with tau_theta = infinity and
/// tau_x = tau_p = 1, logging the angle between G and the full-dataset
/// backpropagation gradient at each checkpoint step.
struct AngleResult {
    std::vector<std::int64_t> checkpoints;
    std::vector<std::vector<double>> per_seed_angles;  // [seed][checkpoint], degrees
    std::vector<double> q1, median, q3;                // per checkpoint
};

AngleResult run_angle_protocol(const ExperimentConfig& config,
                               const std::vector<std::int64_t>& checkpoints,
                               bool write_files = false);

/// Projected wall-clock training time on hardware: overhead_factor * steps *
/// tau_p_seconds. The default factor 2 accounts for one baseline plus one
/// perturbed inference per step.
double estimate_time(double steps, double tau_p_seconds, double overhead_factor = 2.0);

// Locale-independent CSV helpers (round-trip "%g"-free formatting via
// std::to_chars; the strict reader rejects anything std::from_chars cannot
// parse).
std::string format_number(double value);
double parse_number(const std::string& text);  // throws on trailing junk
std::vector<std::vector<std::string>> read_csv(const std::string& path);

/// Type-7 (linear interpolation) quantile of a sorted sequence.
double quantile_sorted(const std::vector<double>& sorted, double p);

}  // namespace mgd
