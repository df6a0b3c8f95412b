#include <benchmark/benchmark.h>

#include "mgd/gradient.hpp"
#include "mgd/trainer.hpp"

namespace {

using namespace mgd;

void BM_forward_xor(benchmark::State& state) {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const auto theta = init_params(net.spec(), 1);
    const Dataset data = parity_dataset(2);
    Workspace ws;
    std::vector<double> y(1);
    for (auto _ : state) {
        net.forward(theta, data.input(0), y, ws);
        benchmark::DoNotOptimize(y[0]);
    }
}
BENCHMARK(BM_forward_xor);

void BM_forward_nist7x7(benchmark::State& state) {
    Network net(NetworkSpec::mlp({49, 4, 4}));
    const auto theta = init_params(net.spec(), 1);
    const Dataset data = nist7x7_dataset(1, 0.0, 0, 1);
    Workspace ws;
    std::vector<double> y(4);
    for (auto _ : state) {
        net.forward(theta, data.input(0), y, ws);
        benchmark::DoNotOptimize(y[0]);
    }
}
BENCHMARK(BM_forward_nist7x7);

void BM_forward_cifar_cnn(benchmark::State& state) {
    NetworkSpec spec;
    spec.input_shape = {3, 32, 32};
    spec.layers = {LayerSpec::conv3x3(0, 16), LayerSpec::maxpool2x2(),
                   LayerSpec::conv3x3(0, 32), LayerSpec::maxpool2x2(),
                   LayerSpec::conv3x3(0, 64), LayerSpec::maxpool2x2(),
                   LayerSpec::flatten(),      LayerSpec::dense(0, 10, Activation::Linear)};
    Network net(spec);
    const auto theta = init_params(spec, 1, 0.1);
    std::vector<double> x(3 * 32 * 32, 0.5);
    Workspace ws;
    std::vector<double> y(10);
    for (auto _ : state) {
        net.forward(theta, x, y, ws);
        benchmark::DoNotOptimize(y[0]);
    }
}
BENCHMARK(BM_forward_cifar_cnn);

void BM_discrete_step_xor(benchmark::State& state) {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const Dataset data = parity_dataset(2);
    ClockConfig clocks;
    clocks.eta = 5.0;
    Trainer trainer(net, data, Mode::Discrete, clocks, PerturbationScheme::random(0), {}, 1);
    for (auto _ : state) {
        trainer.step();
    }
}
BENCHMARK(BM_discrete_step_xor);

void BM_perturbation_refresh_220(benchmark::State& state) {
    PerturbationSource source(PerturbationScheme::random(1), 220);
    std::vector<double> out(220);
    for (auto _ : state) {
        source.next(out);
        benchmark::DoNotOptimize(out[0]);
    }
}
BENCHMARK(BM_perturbation_refresh_220);

void BM_backprop_nist7x7(benchmark::State& state) {
    Network net(NetworkSpec::mlp({49, 4, 4}));
    const auto theta = init_params(net.spec(), 1);
    const Dataset data = nist7x7_dataset(1, 0.0, 0, 1);
    const std::vector<std::size_t> batch = {0, 1, 2, 3};
    for (auto _ : state) {
        auto grad = backprop_grad(net, theta, data, batch);
        benchmark::DoNotOptimize(grad.data());
    }
}
BENCHMARK(BM_backprop_nist7x7);

}  // namespace

BENCHMARK_MAIN();
