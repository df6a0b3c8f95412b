#include "mgd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "mgd/gradient.hpp"
#include "mgd/rng.hpp"

namespace mgd {

using nlohmann::json;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw ConfigError(path + ": " + message);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* k) { return it.key() == k; }) == allowed.end()) {
            fail(path + "." + it.key(), "unknown field");
        }
    }
}

double get_number(const json& obj, const std::string& path, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number()) fail(path + "." + key, "expected a number");
    return obj[key].get<double>();
}

std::int64_t get_int(const json& obj, const std::string& path, const char* key,
                     std::int64_t fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_number_integer()) fail(path + "." + key, "expected an integer");
    return obj[key].get<std::int64_t>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj[key].is_string()) fail(path + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

std::string require_string(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key)) fail(path + "." + key, "missing required field");
    if (!obj[key].is_string()) fail(path + "." + key, "expected a string");
    return obj[key].get<std::string>();
}

Activation parse_activation(const std::string& name, const std::string& path) {
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "relu") return Activation::Relu;
    if (name == "linear") return Activation::Linear;
    fail(path, "unknown activation '" + name + "' (sigmoid|relu|linear)");
}

TaskConfig parse_task(const json& obj, const std::string& path) {
    check_keys(obj, path,
               {"name", "n_bits", "samples_per_class", "pixel_flip_prob", "shift_range", "seed",
                "images", "labels", "test_images", "test_labels", "batches"});
    TaskConfig task;
    task.name = require_string(obj, path, "name");
    task.n_bits = static_cast<int>(get_int(obj, path, "n_bits", task.n_bits));
    task.samples_per_class =
        static_cast<int>(get_int(obj, path, "samples_per_class", task.samples_per_class));
    task.pixel_flip_prob = get_number(obj, path, "pixel_flip_prob", task.pixel_flip_prob);
    task.shift_range = static_cast<int>(get_int(obj, path, "shift_range", task.shift_range));
    task.generator_seed = static_cast<std::uint64_t>(get_int(obj, path, "seed", 1));
    task.images = get_string(obj, path, "images", "");
    task.labels = get_string(obj, path, "labels", "");
    task.test_images = get_string(obj, path, "test_images", "");
    task.test_labels = get_string(obj, path, "test_labels", "");
    if (obj.contains("batches")) {
        if (!obj["batches"].is_array()) fail(path + ".batches", "expected an array of paths");
        for (const auto& b : obj["batches"]) task.batches.push_back(b.get<std::string>());
    }
    if (task.name != "parity" && task.name != "nist7x7" && task.name != "idx" &&
        task.name != "cifar10") {
        fail(path + ".name", "unknown task '" + task.name + "' (parity|nist7x7|idx|cifar10)");
    }
    if (task.name == "idx" && (task.images.empty() || task.labels.empty())) {
        fail(path, "idx task requires images and labels paths");
    }
    if (task.name == "cifar10" && task.batches.empty()) {
        fail(path + ".batches", "cifar10 task requires batch files");
    }
    return task;
}

NetworkSpec parse_network(const json& obj, const std::string& path) {
    check_keys(obj, path, {"layers"});
    if (!obj.contains("layers") || !obj["layers"].is_array() || obj["layers"].empty()) {
        fail(path + ".layers", "expected a non-empty array");
    }
    NetworkSpec spec;
    int index = 0;
    for (const auto& item : obj["layers"]) {
        const std::string lpath = path + ".layers[" + std::to_string(index++) + "]";
        check_keys(item, lpath, {"kind", "in", "out", "activation"});
        const std::string kind = require_string(item, lpath, "kind");
        if (kind == "dense") {
            const int out = static_cast<int>(get_int(item, lpath, "out", 0));
            if (out < 1) fail(lpath + ".out", "dense layer needs out >= 1");
            const int in = static_cast<int>(get_int(item, lpath, "in", 0));
            spec.layers.push_back(LayerSpec::dense(
                in, out,
                parse_activation(get_string(item, lpath, "activation", "sigmoid"),
                                 lpath + ".activation")));
        } else if (kind == "conv3x3") {
            const int out = static_cast<int>(get_int(item, lpath, "out", 0));
            if (out < 1) fail(lpath + ".out", "conv3x3 layer needs out >= 1");
            const int in = static_cast<int>(get_int(item, lpath, "in", 0));
            spec.layers.push_back(LayerSpec::conv3x3(in, out));
        } else if (kind == "maxpool2x2") {
            spec.layers.push_back(LayerSpec::maxpool2x2());
        } else if (kind == "flatten") {
            spec.layers.push_back(LayerSpec::flatten());
        } else {
            fail(lpath + ".kind", "unknown layer kind '" + kind + "'");
        }
    }
    return spec;
}

PerturbKind parse_perturb_kind(const std::string& name, const std::string& path) {
    if (name == "sinusoidal") return PerturbKind::Sinusoidal;
    if (name == "sequential") return PerturbKind::SequentialDiscrete;
    if (name == "walsh") return PerturbKind::WalshCode;
    if (name == "random") return PerturbKind::RandomCode;
    fail(path, "unknown perturbation '" + name + "' (sinusoidal|sequential|walsh|random)");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(root, "config",
               {"schema_version", "task", "network", "mode", "clocks", "perturbation",
                "imperfections", "stop", "seeds", "record_stride", "sample_order", "init_scale",
                "output_dir"});

    ExperimentConfig config;
    if (!root.contains("schema_version")) fail("config.schema_version", "missing required field");
    config.schema_version = static_cast<int>(get_int(root, "config", "schema_version", 0));
    if (config.schema_version != 1) {
        fail("config.schema_version",
             "unsupported version " + std::to_string(config.schema_version) + " (expected 1)");
    }
    if (!root.contains("task")) fail("config.task", "missing required field");
    config.task = parse_task(root["task"], "config.task");
    if (!root.contains("network")) fail("config.network", "missing required field");
    config.network = parse_network(root["network"], "config.network");

    const std::string mode = get_string(root, "config", "mode", "discrete");
    if (mode == "discrete") {
        config.mode = Mode::Discrete;
    } else if (mode == "analog") {
        config.mode = Mode::Analog;
    } else {
        fail("config.mode", "expected 'discrete' or 'analog'");
    }

    if (root.contains("clocks")) {
        const json& c = root["clocks"];
        check_keys(c, "config.clocks",
                   {"tau_p", "tau_theta", "tau_x", "tau_hp", "dt", "eta", "delta_theta",
                    "parallel_batch"});
        config.clocks.tau_p = get_int(c, "config.clocks", "tau_p", config.clocks.tau_p);
        config.clocks.tau_theta = get_int(c, "config.clocks", "tau_theta", config.clocks.tau_theta);
        config.clocks.tau_x = get_int(c, "config.clocks", "tau_x", config.clocks.tau_x);
        config.clocks.tau_hp = get_number(c, "config.clocks", "tau_hp", config.clocks.tau_hp);
        config.clocks.dt = get_number(c, "config.clocks", "dt", config.clocks.dt);
        config.clocks.eta = get_number(c, "config.clocks", "eta", config.clocks.eta);
        config.clocks.delta_theta =
            get_number(c, "config.clocks", "delta_theta", config.clocks.delta_theta);
        config.clocks.parallel_batch = static_cast<int>(
            get_int(c, "config.clocks", "parallel_batch", config.clocks.parallel_batch));
        if (config.clocks.tau_x < 1) fail("config.clocks.tau_x", "must be >= 1");
        if (config.clocks.tau_p < 1) fail("config.clocks.tau_p", "must be >= 1");
        if (config.clocks.tau_theta < 0) {
            fail("config.clocks.tau_theta", "must be >= 0 (0 = integrate forever)");
        }
        if (!(config.clocks.delta_theta > 0.0)) fail("config.clocks.delta_theta", "must be > 0");
        if (config.clocks.parallel_batch < 1) fail("config.clocks.parallel_batch", "must be >= 1");
    }

    if (root.contains("perturbation")) {
        const json& p = root["perturbation"];
        check_keys(p, "config.perturbation",
                   {"kind", "delta_theta", "tau_p", "bandwidth", "seed"});
        config.scheme.kind = parse_perturb_kind(
            get_string(p, "config.perturbation", "kind", "random"), "config.perturbation.kind");
        config.scheme.bandwidth =
            get_number(p, "config.perturbation", "bandwidth", config.scheme.bandwidth);
        config.scheme.seed =
            static_cast<std::uint64_t>(get_int(p, "config.perturbation", "seed", 0));
        // delta_theta / tau_p may live here or under clocks; both places must agree
        if (p.contains("delta_theta")) {
            const double v = get_number(p, "config.perturbation", "delta_theta", 0.0);
            if (root.contains("clocks") && root["clocks"].contains("delta_theta") &&
                v != config.clocks.delta_theta) {
                fail("config.perturbation.delta_theta", "conflicts with clocks.delta_theta");
            }
            config.clocks.delta_theta = v;
            if (!(v > 0.0)) fail("config.perturbation.delta_theta", "must be > 0");
        }
        if (p.contains("tau_p")) {
            const std::int64_t v = get_int(p, "config.perturbation", "tau_p", 1);
            if (root.contains("clocks") && root["clocks"].contains("tau_p") &&
                v != config.clocks.tau_p) {
                fail("config.perturbation.tau_p", "conflicts with clocks.tau_p");
            }
            if (v < 1) fail("config.perturbation.tau_p", "must be >= 1");
            config.clocks.tau_p = v;
        }
        if (config.scheme.kind == PerturbKind::Sinusoidal && !(config.scheme.bandwidth > 0.0)) {
            fail("config.perturbation.bandwidth", "sinusoidal scheme needs bandwidth > 0");
        }
    }
    config.scheme.delta_theta = config.clocks.delta_theta;
    config.scheme.tau_p = config.clocks.tau_p;
    config.scheme.dt = config.clocks.dt;

    if (root.contains("imperfections")) {
        const json& i = root["imperfections"];
        check_keys(i, "config.imperfections", {"sigma_c", "sigma_theta", "sigma_a", "defect_seed"});
        config.imperfections.sigma_c = get_number(i, "config.imperfections", "sigma_c", 0.0);
        config.imperfections.sigma_theta =
            get_number(i, "config.imperfections", "sigma_theta", 0.0);
        config.imperfections.sigma_a = get_number(i, "config.imperfections", "sigma_a", 0.0);
        config.imperfections.defect_seed =
            static_cast<std::uint64_t>(get_int(i, "config.imperfections", "defect_seed", 0));
        if (config.imperfections.sigma_c < 0.0) fail("config.imperfections.sigma_c", "must be >= 0");
        if (config.imperfections.sigma_theta < 0.0) {
            fail("config.imperfections.sigma_theta", "must be >= 0");
        }
        if (config.imperfections.sigma_a < 0.0) fail("config.imperfections.sigma_a", "must be >= 0");
    }

    if (root.contains("stop")) {
        const json& s = root["stop"];
        check_keys(s, "config.stop", {"max_steps", "cost_threshold", "accuracy_threshold"});
        config.stop.max_steps = get_int(s, "config.stop", "max_steps", config.stop.max_steps);
        config.stop.cost_threshold = get_number(s, "config.stop", "cost_threshold", 0.0);
        config.stop.accuracy_threshold = get_number(s, "config.stop", "accuracy_threshold", 0.0);
        if (config.stop.max_steps < 0) fail("config.stop.max_steps", "must be >= 0");
    }

    if (!root.contains("seeds")) fail("config.seeds", "missing required field");
    const json& seeds = root["seeds"];
    if (seeds.is_array()) {
        for (const auto& s : seeds) {
            if (!s.is_number_integer()) fail("config.seeds", "expected integers");
            config.seeds.push_back(s.get<std::uint64_t>());
        }
    } else if (seeds.is_object()) {
        check_keys(seeds, "config.seeds", {"count", "base"});
        const std::int64_t count = get_int(seeds, "config.seeds", "count", 0);
        const std::int64_t base = get_int(seeds, "config.seeds", "base", 1);
        if (count < 1) fail("config.seeds.count", "must be >= 1");
        for (std::int64_t k = 0; k < count; ++k) {
            config.seeds.push_back(static_cast<std::uint64_t>(base + k));
        }
    } else {
        fail("config.seeds", "expected an array or {count, base}");
    }
    if (config.seeds.empty()) fail("config.seeds", "must not be empty");

    config.record_stride = get_int(root, "config", "record_stride", config.record_stride);
    if (config.record_stride < 1) fail("config.record_stride", "must be >= 1");
    const std::string order = get_string(root, "config", "sample_order", "cyclic");
    if (order == "cyclic") {
        config.sample_order = SampleOrder::Cyclic;
    } else if (order == "random") {
        config.sample_order = SampleOrder::Random;
    } else {
        fail("config.sample_order", "expected 'cyclic' or 'random'");
    }
    config.init_scale = get_number(root, "config", "init_scale", config.init_scale);
    if (!(config.init_scale > 0.0)) fail("config.init_scale", "must be > 0");
    config.output_dir = get_string(root, "config", "output_dir", config.output_dir);
    return config;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

Dataset build_task_dataset(const TaskConfig& task) {
    if (task.name == "parity") return parity_dataset(task.n_bits);
    if (task.name == "nist7x7") {
        return nist7x7_dataset(task.samples_per_class, task.pixel_flip_prob, task.shift_range,
                               task.generator_seed);
    }
    if (task.name == "idx") return load_idx(task.images, task.labels);
    if (task.name == "cifar10") return load_cifar10(task.batches);
    throw ConfigError("unknown task '" + task.name + "'");
}

bool build_eval_dataset(const TaskConfig& task, Dataset& out) {
    if (task.name == "idx" && !task.test_images.empty() && !task.test_labels.empty()) {
        out = load_idx(task.test_images, task.test_labels);
        return true;
    }
    return false;
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) return kNan;
    if (sorted.size() == 1) return sorted.front();
    const double h = p * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

EnsembleSummary summarize(std::vector<ResultRecord> per_seed) {
    EnsembleSummary summary;
    summary.per_seed = std::move(per_seed);
    if (summary.per_seed.empty()) return summary;
    std::vector<double> times, accs, costs;
    for (const auto& r : summary.per_seed) {
        if (r.converged) times.push_back(r.time_to_threshold);
        accs.push_back(r.final_accuracy);
        costs.push_back(r.final_cost);
    }
    summary.converged_fraction =
        static_cast<double>(times.size()) / static_cast<double>(summary.per_seed.size());
    std::sort(times.begin(), times.end());
    std::sort(accs.begin(), accs.end());
    std::sort(costs.begin(), costs.end());
    summary.q1_time = quantile_sorted(times, 0.25);
    summary.median_time = quantile_sorted(times, 0.5);
    summary.q3_time = quantile_sorted(times, 0.75);
    summary.median_final_accuracy = quantile_sorted(accs, 0.5);
    summary.median_final_cost = quantile_sorted(costs, 0.5);
    return summary;
}

std::string format_number(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_number(const std::string& text) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last) {
        throw std::runtime_error("not a number: '" + text + "'");
    }
    return value;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (!rows.empty() && cells.size() != rows.front().size()) {
            throw std::runtime_error(path + ": ragged row with " + std::to_string(cells.size()) +
                                     " cells");
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

namespace {

void write_trace_csv(const std::string& path, const TrainingTrace& trace) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "step,cost,accuracy,g_norm\n";
    for (const auto& rec : trace.records) {
        f << rec.step << ',' << format_number(rec.cost) << ',' << format_number(rec.accuracy)
          << ',' << format_number(rec.g_norm) << '\n';
    }
}

void write_summary_csv(const std::string& path, const EnsembleSummary& summary) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "seed,converged,time_to_threshold,final_accuracy,final_cost\n";
    for (const auto& r : summary.per_seed) {
        f << r.seed << ',' << (r.converged ? 1 : 0) << ',' << format_number(r.time_to_threshold)
          << ',' << format_number(r.final_accuracy) << ',' << format_number(r.final_cost) << '\n';
    }
}

struct SeedOutcome {
    ResultRecord record;
    TrainingTrace trace;
    ParamVector params;
};

/// Run fn(i) for i in [0, n) across worker threads; each index is handled
/// exactly once and results land in caller-owned slots, so the output is
/// independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    unsigned workers = std::thread::hardware_concurrency();
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr error;
    std::mutex error_mutex;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::vector<SeedOutcome> run_seeds(const ExperimentConfig& config, const Network& net,
                                   const Dataset& data, const Dataset* eval_data,
                                   bool want_traces) {
    std::vector<SeedOutcome> outcomes(config.seeds.size());
    parallel_for(config.seeds.size(), [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        SeedOutcome& out = outcomes[i];
        out.record.seed = seed;
        try {
            Trainer trainer(net, data, config.mode, config.clocks, config.scheme,
                            config.imperfections, seed, config.sample_order, config.init_scale);
            const RunResult rr = trainer.run(config.stop, config.record_stride,
                                             want_traces ? &out.trace : nullptr);
            out.record.converged = rr.converged;
            out.record.time_to_threshold =
                rr.converged
                    ? tau_p_units(rr.threshold_step, config.mode, config.clocks, config.scheme)
                    : kNan;
            out.record.final_cost = rr.final_cost;
            out.record.final_accuracy =
                eval_data ? accuracy(trainer.network(), trainer.params(), *eval_data,
                                     trainer.defects())
                          : rr.final_accuracy;
            out.params.assign(trainer.params().begin(), trainer.params().end());
        } catch (const TrainingDiverged&) {
            // a diverged seed counts as not converged
            out.record.converged = false;
            out.record.time_to_threshold = kNan;
            out.record.final_cost = kNan;
            out.record.final_accuracy = kNan;
        }
    });
    return outcomes;
}

}  // namespace

EnsembleSummary run_experiment(const ExperimentConfig& config, bool write_files) {
    const Dataset data = build_task_dataset(config.task);
    Dataset eval_data;
    const bool has_eval = build_eval_dataset(config.task, eval_data);
    NetworkSpec spec = config.network;
    spec.input_shape = data.input_shape;
    spec.output_size = 0;  // taken from the last layer, then checked against the task
    Network net(spec);
    if (net.output_size() != data.target_size) {
        throw ConfigError("config.network: last layer outputs " +
                          std::to_string(net.output_size()) + " values but task '" +
                          config.task.name + "' has " + std::to_string(data.target_size) +
                          " targets");
    }

    auto outcomes = run_seeds(config, net, data, has_eval ? &eval_data : nullptr, write_files);

    std::vector<ResultRecord> records;
    records.reserve(outcomes.size());
    for (auto& o : outcomes) records.push_back(o.record);
    EnsembleSummary summary = summarize(std::move(records));

    if (write_files) {
        std::filesystem::create_directories(config.output_dir);
        const std::filesystem::path dir(config.output_dir);
        for (auto& o : outcomes) {
            write_trace_csv((dir / ("trace_" + std::to_string(o.record.seed) + ".csv")).string(),
                            o.trace);
            if (!o.params.empty()) {
                save_params(o.params,
                            (dir / ("params_" + std::to_string(o.record.seed) + ".bin")).string());
            }
        }
        write_summary_csv((dir / "summary.csv").string(), summary);
    }
    return summary;
}

SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "eta") return SweepAxis::Eta;
    if (name == "tau_theta") return SweepAxis::TauTheta;
    if (name == "sigma_c") return SweepAxis::SigmaC;
    if (name == "sigma_theta") return SweepAxis::SigmaTheta;
    if (name == "sigma_a") return SweepAxis::SigmaA;
    throw ConfigError("unknown sweep axis '" + name +
                      "' (eta|tau_theta|sigma_c|sigma_theta|sigma_a)");
}

SweepResult run_sweep(const ExperimentConfig& config, SweepAxis axis,
                      const std::vector<double>& values, bool write_files) {
    if (values.empty()) throw ConfigError("sweep: values must not be empty");
    SweepResult result;
    result.axis = axis;
    result.max_eta = kNan;
    for (double value : values) {
        ExperimentConfig point = config;
        switch (axis) {
            case SweepAxis::Eta:
                point.clocks.eta = value;
                break;
            case SweepAxis::TauTheta:
                point.clocks.tau_theta = static_cast<std::int64_t>(std::llround(value));
                break;
            case SweepAxis::SigmaC:
                point.imperfections.sigma_c = value;
                break;
            case SweepAxis::SigmaTheta:
                point.imperfections.sigma_theta = value;
                break;
            case SweepAxis::SigmaA:
                point.imperfections.sigma_a = value;
                break;
        }
        SweepPoint sp;
        sp.value = value;
        sp.summary = run_experiment(point, false);
        if (axis == SweepAxis::Eta && sp.summary.converged_fraction >= 0.5) {
            if (std::isnan(result.max_eta) || value > result.max_eta) result.max_eta = value;
        }
        result.points.push_back(std::move(sp));
    }
    if (write_files) {
        std::filesystem::create_directories(config.output_dir);
        const auto path = std::filesystem::path(config.output_dir) / "sweep.csv";
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
        f << "axis_value,converged_fraction,q1_time,median_time,q3_time,"
             "median_final_accuracy,median_final_cost\n";
        for (const auto& p : result.points) {
            f << format_number(p.value) << ',' << format_number(p.summary.converged_fraction)
              << ',' << format_number(p.summary.q1_time) << ','
              << format_number(p.summary.median_time) << ',' << format_number(p.summary.q3_time)
              << ',' << format_number(p.summary.median_final_accuracy) << ','
              << format_number(p.summary.median_final_cost) << '\n';
        }
    }
    return result;
}

AngleResult run_angle_protocol(const ExperimentConfig& config,
                               const std::vector<std::int64_t>& checkpoints, bool write_files) {
    if (checkpoints.empty()) throw ConfigError("angle: checkpoints must not be empty");
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        if (checkpoints[i] <= checkpoints[i - 1]) {
            throw ConfigError("angle: checkpoints must be strictly increasing");
        }
    }
    const Dataset data = build_task_dataset(config.task);
    NetworkSpec spec = config.network;
    spec.input_shape = data.input_shape;
    spec.output_size = 0;
    Network net(spec);

    AngleResult result;
    result.checkpoints = checkpoints;
    result.per_seed_angles.resize(config.seeds.size());

    ExperimentConfig protocol = config;
    protocol.clocks.tau_theta = kAccumulateForever;
    protocol.clocks.tau_x = 1;
    protocol.clocks.tau_p = 1;
    protocol.scheme.tau_p = 1;

    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

    parallel_for(config.seeds.size(), [&](std::size_t i) {
        Trainer trainer(net, data, Mode::Discrete, protocol.clocks, protocol.scheme,
                        protocol.imperfections, protocol.seeds[i], protocol.sample_order,
                        protocol.init_scale);
        // tau_theta = infinity: theta never changes, so the reference gradient
        // is fixed for the whole run
        const GradientVector reference =
            backprop_grad(trainer.network(), trainer.params(), data, all, trainer.defects());
        for (std::int64_t cp : checkpoints) {
            while (trainer.step_count() < cp) trainer.step();
            result.per_seed_angles[i].push_back(angle_between(trainer.gradient_accum(), reference));
        }
    });

    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        std::vector<double> angles;
        angles.reserve(config.seeds.size());
        for (const auto& seed_angles : result.per_seed_angles) angles.push_back(seed_angles[c]);
        std::sort(angles.begin(), angles.end());
        result.q1.push_back(quantile_sorted(angles, 0.25));
        result.median.push_back(quantile_sorted(angles, 0.5));
        result.q3.push_back(quantile_sorted(angles, 0.75));
    }

    if (write_files) {
        std::filesystem::create_directories(config.output_dir);
        const std::filesystem::path dir(config.output_dir);
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            std::ofstream f(dir / ("angle_" + std::to_string(config.seeds[i]) + ".csv"));
            f << "step,angle_deg\n";
            for (std::size_t c = 0; c < checkpoints.size(); ++c) {
                f << checkpoints[c] << ',' << format_number(result.per_seed_angles[i][c]) << '\n';
            }
        }
        std::ofstream f(dir / "angle_summary.csv");
        f << "step,q1,median,q3\n";
        for (std::size_t c = 0; c < checkpoints.size(); ++c) {
            f << checkpoints[c] << ',' << format_number(result.q1[c]) << ','
              << format_number(result.median[c]) << ',' << format_number(result.q3[c]) << '\n';
        }
    }
    return result;
}

double estimate_time(double steps, double tau_p_seconds, double overhead_factor) {
    if (!(steps > 0.0) || !(tau_p_seconds > 0.0) || !(overhead_factor > 0.0)) {
        throw std::invalid_argument("estimate_time: all inputs must be > 0");
    }
    return overhead_factor * steps * tau_p_seconds;
}

}  // namespace mgd
