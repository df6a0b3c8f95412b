#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mgd/gradient.hpp"
#include "mgd/trainer.hpp"

using namespace mgd;

namespace {

Dataset single_sample(Shape shape, std::vector<double> x, std::vector<double> t) {
    Dataset d;
    d.input_shape = shape;
    d.target_size = static_cast<int>(t.size());
    d.count = 1;
    d.inputs = std::move(x);
    d.targets = std::move(t);
    return d;
}

NetworkSpec affine_unit() {
    NetworkSpec spec;
    spec.input_shape = {1, 1, 1};
    spec.layers = {LayerSpec::dense(1, 1, Activation::Linear)};
    return spec;
}

std::vector<std::size_t> all_indices(const Dataset& d) {
    std::vector<std::size_t> idx(d.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

}  // namespace

TEST_CASE("one sequential step measures the forward difference exactly") {
    // C(w, b) = (w + b)^2 with w = 1, b = 0; perturbing w by 0.01 gives
    // G_w = (1.01^2 - 1) / 0.01 = 2.01
    Network net(affine_unit());
    const Dataset d = single_sample({1, 1, 1}, {1.0}, {0.0});
    ClockConfig clocks;
    clocks.eta = 0.1;
    clocks.delta_theta = 0.01;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::sequential(), {}, 1);
    t.set_params(std::vector<double>{1.0, 0.0});

    std::vector<double> captured;
    t.set_update_observer([&](std::int64_t, std::span<const double> g) {
        captured.assign(g.begin(), g.end());
    });
    t.step();
    REQUIRE(captured.size() == 2);
    CHECK(captured[0] == doctest::Approx(2.01).epsilon(1e-10));
    CHECK(captured[1] == 0.0);  // unperturbed component accumulates exactly zero
    CHECK(t.params()[0] == doctest::Approx(1.0 - 0.1 * 2.01).epsilon(1e-12));
    CHECK(t.params()[1] == 0.0);
}

TEST_CASE("eta = 0 leaves the parameters bit-identical") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.eta = 0.0;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::random(3), {}, 4);
    const std::vector<double> before(t.params().begin(), t.params().end());
    for (int n = 0; n < 200; ++n) t.step();
    const std::vector<double> after(t.params().begin(), t.params().end());
    CHECK(before == after);
}

TEST_CASE("tau_theta = infinity accumulates forever without updating") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.tau_theta = kAccumulateForever;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::random(5), {}, 9);
    const std::vector<double> before(t.params().begin(), t.params().end());
    bool observed = false;
    t.set_update_observer([&](std::int64_t, std::span<const double>) { observed = true; });
    for (int n = 0; n < 500; ++n) t.step();
    CHECK_FALSE(observed);
    CHECK(std::equal(before.begin(), before.end(), t.params().begin()));
    double norm = 0.0;
    for (double g : t.gradient_accum()) norm += g * g;
    CHECK(norm > 0.0);
}

TEST_CASE("sequential integration over P steps equals the forward-difference oracle") {
    for (auto widths : {std::vector<int>{2, 2, 1}, std::vector<int>{49, 4, 4}}) {
        Network net(NetworkSpec::mlp(widths));
        const std::size_t p = net.param_count();
        Dataset d;
        if (widths[0] == 2) {
            d = parity_dataset(2);
        } else {
            d = nist7x7_dataset(1, 0.0, 0, 1);
        }
        const auto pre = preset(PresetKind::FiniteDifference, p);
        ClockConfig clocks = pre.clocks;
        clocks.eta = 0.5;
        Trainer t(net, d, pre.mode, clocks, pre.scheme, {}, 17);

        std::vector<double> g_integrated;
        t.set_update_observer([&](std::int64_t, std::span<const double> g) {
            if (g_integrated.empty()) g_integrated.assign(g.begin(), g.end());
        });
        const std::vector<double> theta0(t.params().begin(), t.params().end());
        for (std::size_t n = 0; n < p; ++n) t.step();
        REQUIRE(g_integrated.size() == p);

        // oracle: forward finite differences at the same amplitude, same sample
        const std::vector<std::size_t> batch = {0};
        const auto fd =
            finite_diff_grad(net, theta0, d, batch, clocks.delta_theta, FdMode::Forward);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            num += (g_integrated[i] - fd[i]) * (g_integrated[i] - fd[i]);
            den += fd[i] * fd[i];
        }
        CHECK(std::sqrt(num / den) < 1e-9);
    }
}

TEST_CASE("batching identity: one tau_theta = 4 tau_x window equals four short windows") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);

    ClockConfig long_clocks;
    long_clocks.tau_x = 5;
    long_clocks.tau_theta = 20;
    long_clocks.eta = 0.0;  // keep theta fixed so the windows see identical state
    const auto scheme = PerturbationScheme::walsh();

    Trainer long_run(net, d, Mode::Discrete, long_clocks, scheme, {}, 23);
    std::vector<double> g_long;
    long_run.set_update_observer([&](std::int64_t, std::span<const double> g) {
        if (g_long.empty()) g_long.assign(g.begin(), g.end());
    });
    for (int n = 0; n < 20; ++n) long_run.step();
    REQUIRE_FALSE(g_long.empty());

    ClockConfig short_clocks = long_clocks;
    short_clocks.tau_theta = 5;
    Trainer short_run(net, d, Mode::Discrete, short_clocks, scheme, {}, 23);
    std::vector<double> g_sum(net.param_count(), 0.0);
    short_run.set_update_observer([&](std::int64_t, std::span<const double> g) {
        for (std::size_t i = 0; i < g.size(); ++i) g_sum[i] += g[i];
    });
    for (int n = 0; n < 20; ++n) short_run.step();

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < g_long.size(); ++i) {
        num += (g_long[i] - g_sum[i]) * (g_long[i] - g_sum[i]);
        den += g_long[i] * g_long[i];
    }
    CHECK(std::sqrt(num / den) < 1e-13);
}

TEST_CASE("parallel batch sums the per-sample error signals for one perturbation") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.parallel_batch = 4;
    clocks.eta = 1.0;
    // walsh column 0 is all +delta_theta, so the step's perturbation is known
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::walsh(), {}, 31);
    const std::vector<double> theta0(t.params().begin(), t.params().end());
    std::vector<double> g_step;
    t.set_update_observer([&](std::int64_t, std::span<const double> g) {
        g_step.assign(g.begin(), g.end());
    });
    t.step();
    REQUIRE_FALSE(g_step.empty());

    Workspace ws;
    std::vector<double> plus(theta0);
    for (auto& v : plus) v += clocks.delta_theta;
    const auto idx = all_indices(d);
    const double c0 = batch_cost(net, theta0, d, idx, ws);
    const double cp = batch_cost(net, plus, d, idx, ws);
    const double expect = (cp - c0) * clocks.delta_theta /
                          (clocks.delta_theta * clocks.delta_theta);
    for (double g : g_step) CHECK(g == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("update step moves theta by exactly -eta G") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.eta = 0.7;
    clocks.tau_theta = 3;
    clocks.tau_x = 3;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::random(2), {}, 41);
    const std::vector<double> before(t.params().begin(), t.params().end());
    std::vector<double> g_at_update;
    t.set_update_observer([&](std::int64_t, std::span<const double> g) {
        g_at_update.assign(g.begin(), g.end());
    });
    for (int n = 0; n < 3; ++n) t.step();
    REQUIRE_FALSE(g_at_update.empty());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(t.params()[i] == before[i] - clocks.eta * g_at_update[i]);
    }
}

TEST_CASE("gradient accumulation scale grows linearly with integration time") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.tau_theta = kAccumulateForever;
    clocks.tau_x = 1 << 20;  // hold one sample for the whole run
    std::vector<double> ratios;
    for (std::uint64_t seed = 1; seed <= 31; ++seed) {
        Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::random(0), {}, seed);
        auto norm = [&] {
            double s = 0.0;
            for (double g : t.gradient_accum()) s += g * g;
            return std::sqrt(s);
        };
        for (int n = 0; n < 20; ++n) t.step();
        const double g20 = norm();
        for (int n = 20; n < 200; ++n) t.step();
        ratios.push_back(norm() / g20);
    }
    std::sort(ratios.begin(), ratios.end());
    const double median = ratios[ratios.size() / 2];
    CHECK(median > 6.0);
    CHECK(median < 14.0);
}

TEST_CASE("coordinate descent on a convex quadratic: cost descends to the bias floor") {
    Network net(affine_unit());
    const Dataset d = single_sample({1, 1, 1}, {1.0}, {0.0});
    ClockConfig clocks;
    clocks.eta = 0.05;
    clocks.delta_theta = 1e-4;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::sequential(), {}, 51);
    t.set_params(std::vector<double>{1.0, 0.3});
    // forward differences bias the estimate by delta_theta/2, so the cost
    // settles into a floor of (delta_theta/2)^2; monotone descent holds above it
    const double floor = clocks.delta_theta * clocks.delta_theta;
    double prev = t.eval_mean_cost();
    for (int n = 0; n < 400; ++n) {
        t.step();
        const double cost = t.eval_mean_cost();
        if (prev > floor) CHECK(cost <= prev + 1e-12);
        prev = cost;
    }
    CHECK(prev < 1e-6);
}

TEST_CASE("training is deterministic per seed, traces included") {
    const auto spec = NetworkSpec::mlp({2, 2, 1});
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.eta = 5.0;
    StopConditions stop;
    stop.max_steps = 400;
    const auto a = train(spec, d, Mode::Discrete, clocks, PerturbationScheme::random(0), {}, stop,
                         7, 50);
    const auto b = train(spec, d, Mode::Discrete, clocks, PerturbationScheme::random(0), {}, stop,
                         7, 50);
    REQUIRE(a.trace.records.size() == b.trace.records.size());
    for (std::size_t i = 0; i < a.trace.records.size(); ++i) {
        CHECK(a.trace.records[i].cost == b.trace.records[i].cost);
        CHECK(a.trace.records[i].theta_checksum == b.trace.records[i].theta_checksum);
    }
    CHECK(a.final_params == b.final_params);

    const auto c = train(spec, d, Mode::Discrete, clocks, PerturbationScheme::random(0), {}, stop,
                         8, 50);
    CHECK(a.final_params != c.final_params);
}

TEST_CASE("sequential zero components contribute exactly zero error signal") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.tau_theta = kAccumulateForever;
    clocks.tau_x = 1 << 20;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::sequential(), {}, 3);
    t.step();  // only parameter 0 was perturbed
    const auto g = t.gradient_accum();
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("highpass filter: DC rejection and step response") {
    HighpassFilter flat(10.0, 1.0, 5.0, 0.0);  // primed at the signal value
    for (int n = 0; n < 50; ++n) CHECK(flat.step(5.0) == 0.0);

    HighpassFilter hp(10.0, 1.0);  // history at zero, then a unit step
    const double k = 10.0 / 11.0;
    double expected = k;
    for (int n = 0; n < 20; ++n) {
        CHECK(hp.step(1.0) == doctest::Approx(expected).epsilon(1e-12));
        expected *= k;
    }
}

TEST_CASE("lowpass filter: converges to a constant input") {
    LowpassFilter lp(10.0, 1.0);
    double y = 0.0;
    for (int n = 0; n < 500; ++n) y = lp.step(3.25);
    CHECK(y == doctest::Approx(3.25).epsilon(1e-8));
}

TEST_CASE("analog homodyne training solves XOR for most seeds") {
    const auto spec = NetworkSpec::mlp({2, 2, 1});
    const Dataset d = parity_dataset(2);
    auto pre = preset(PresetKind::AnalogHomodyne, param_count(spec));
    // sample switches inject highpass transients of size ~ jump/delta_theta
    // into e, so analog runs want a wide amplitude, long tau_x and some
    // integration smoothing
    pre.clocks.eta = 0.05;
    pre.clocks.delta_theta = 0.5;
    pre.clocks.tau_x = 2500;
    pre.clocks.tau_theta = 10;
    StopConditions stop;
    stop.max_steps = 300000;
    stop.cost_threshold = 0.04;
    int converged = 0;
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto out = train(spec, d, pre.mode, pre.clocks, pre.scheme, {}, stop, seed, 500);
        if (out.result.converged) ++converged;
    }
    CHECK(converged >= 3);
}

TEST_CASE("presets pin the classic algorithm clocks") {
    const auto fd = preset(PresetKind::FiniteDifference, 9);
    CHECK(fd.clocks.tau_theta == 9);
    CHECK(fd.scheme.kind == PerturbKind::SequentialDiscrete);

    const auto spsa = preset(PresetKind::Spsa, 9);
    CHECK(spsa.clocks.tau_theta == spsa.clocks.tau_p);
    CHECK(spsa.scheme.kind == PerturbKind::RandomCode);

    const auto cd1 = preset(PresetKind::CoordinateDescent, 1);
    const auto fd1 = preset(PresetKind::FiniteDifference, 1);
    CHECK(cd1.clocks.tau_theta == fd1.clocks.tau_theta);
    CHECK(cd1.clocks.tau_x == fd1.clocks.tau_x);
    CHECK(cd1.scheme.kind == fd1.scheme.kind);

    const auto analog = preset(PresetKind::AnalogHomodyne, 9);
    CHECK(analog.mode == Mode::Analog);
    CHECK(analog.scheme.kind == PerturbKind::Sinusoidal);

    CHECK_THROWS_AS(preset("nonsense", 9), std::invalid_argument);
}

TEST_CASE("run stops on thresholds and reports the crossing step") {
    const auto spec = NetworkSpec::mlp({2, 2, 1});
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.eta = 5.0;
    Network net(spec);
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::random(0), {}, 1);
    StopConditions stop;
    stop.max_steps = 30000;
    stop.cost_threshold = 0.04;
    const auto r = t.run(stop, 100);
    if (r.converged) {
        CHECK(r.stop == StopReason::CostThreshold);
        CHECK(r.threshold_step % 100 == 0);
        CHECK(r.final_cost <= 0.04);
    } else {
        CHECK(r.steps == stop.max_steps);
    }
}

TEST_CASE("divergence raises a diagnostic") {
    Network net(affine_unit());
    const Dataset d = single_sample({1, 1, 1}, {1.0}, {0.0});
    ClockConfig clocks;
    clocks.eta = 1e160;
    Trainer t(net, d, Mode::Discrete, clocks, PerturbationScheme::sequential(), {}, 1);
    t.set_params(std::vector<double>{1.0, 0.0});
    StopConditions stop;
    stop.max_steps = 50;
    CHECK_THROWS_AS(t.run(stop, 10), TrainingDiverged);
}

TEST_CASE("trainer validates its configuration") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;

    ClockConfig bad_tau_x = clocks;
    bad_tau_x.tau_x = 0;
    CHECK_THROWS_AS(Trainer(net, d, Mode::Discrete, bad_tau_x, PerturbationScheme::random(0), {},
                            1),
                    std::invalid_argument);

    ClockConfig bad_amp = clocks;
    bad_amp.delta_theta = 0.0;
    CHECK_THROWS_AS(Trainer(net, d, Mode::Discrete, bad_amp, PerturbationScheme::random(0), {}, 1),
                    std::invalid_argument);

    CHECK_THROWS_AS(Trainer(net, d, Mode::Analog, clocks, PerturbationScheme::sequential(), {}, 1),
                    std::invalid_argument);

    const Dataset wrong = parity_dataset(3);
    CHECK_THROWS_AS(Trainer(net, wrong, Mode::Discrete, clocks, PerturbationScheme::random(0), {},
                            1),
                    std::invalid_argument);
}

TEST_CASE("all-zero imperfections reproduce the ideal run bit-exactly") {
    const auto spec = NetworkSpec::mlp({2, 2, 1});
    const Dataset d = parity_dataset(2);
    ClockConfig clocks;
    clocks.eta = 5.0;
    StopConditions stop;
    stop.max_steps = 300;
    ImperfectionConfig zeros;  // all sigmas zero
    const auto ideal = train(spec, d, Mode::Discrete, clocks, PerturbationScheme::random(0), {},
                             stop, 13, 50);
    const auto with_zeros = train(spec, d, Mode::Discrete, clocks, PerturbationScheme::random(0),
                                  zeros, stop, 13, 50);
    CHECK(ideal.final_params == with_zeros.final_params);
    REQUIRE(ideal.trace.records.size() == with_zeros.trace.records.size());
    for (std::size_t i = 0; i < ideal.trace.records.size(); ++i) {
        CHECK(ideal.trace.records[i].theta_checksum == with_zeros.trace.records[i].theta_checksum);
    }
}

TEST_CASE("tau_p_units converts step counts to perturbation timescales") {
    ClockConfig clocks;
    clocks.tau_p = 4;
    CHECK(tau_p_units(1000, Mode::Discrete, clocks, PerturbationScheme::sequential(4)) == 250.0);
    ClockConfig analog;
    analog.dt = 0.5;
    CHECK(tau_p_units(1000, Mode::Analog, analog, PerturbationScheme::sinusoidal(0.3, 0.5)) ==
          doctest::Approx(1000 * 0.5 * 0.3));
}
