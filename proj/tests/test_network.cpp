#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "mgd/datasets.hpp"
#include "mgd/network.hpp"

using namespace mgd;

TEST_CASE("parameter counts for the reference networks") {
    CHECK(param_count(NetworkSpec::mlp({2, 2, 1})) == 9);
    CHECK(param_count(NetworkSpec::mlp({49, 4, 4})) == 220);
}

TEST_CASE("init_params is deterministic, bounded, seed-sensitive") {
    const auto spec = NetworkSpec::mlp({2, 2, 1});
    const auto a = init_params(spec, 7, 1.0);
    const auto b = init_params(spec, 7, 1.0);
    const auto c = init_params(spec, 8, 1.0);
    CHECK(a.size() == 9);
    CHECK(a == b);
    CHECK(a != c);
    for (double v : a) CHECK(std::abs(v) <= 1.0);
    CHECK_THROWS_AS(init_params(spec, 1, 0.0), std::invalid_argument);
}

TEST_CASE("forward: affine identity and sigmoid midpoint") {
    NetworkSpec affine;
    affine.input_shape = {1, 1, 1};
    affine.layers = {LayerSpec::dense(1, 1, Activation::Linear)};
    const std::vector<double> theta = {2.0, 3.0};  // w, b
    const std::vector<double> x = {1.0};
    CHECK(forward(affine, theta, x)[0] == 5.0);

    NetworkSpec sig = affine;
    sig.layers[0].activation = Activation::Sigmoid;
    const std::vector<double> zeros = {0.0, 0.0};
    CHECK(forward(sig, zeros, std::vector<double>{-3.7})[0] == 0.5);
}

namespace {

// independent 2-2-1 evaluation: explicit matrix algebra, own sigmoid
double hand_rolled_221(const std::vector<double>& t, double x0, double x1) {
    auto sg = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    // layout: W1 row-major (2x2), b1 (2), W2 (1x2), b2 (1)
    const double h0 = sg(t[0] * x0 + t[1] * x1 + t[4]);
    const double h1 = sg(t[2] * x0 + t[3] * x1 + t[5]);
    return sg(t[6] * h0 + t[7] * h1 + t[8]);
}

}  // namespace

TEST_CASE("forward matches an independent matrix-multiply evaluation") {
    const auto spec = NetworkSpec::mlp({2, 2, 1});
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto theta = init_params(spec, seed, 1.5);
        const std::vector<double> x = {0.0, 1.0};
        const double expected = hand_rolled_221(theta, x[0], x[1]);
        CHECK(forward(spec, theta, x)[0] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("forward is pure: repeated calls are bit-identical") {
    const auto spec = NetworkSpec::mlp({49, 4, 4});
    const auto theta = init_params(spec, 3);
    std::vector<double> x(49);
    for (int i = 0; i < 49; ++i) x[i] = (i % 5) / 4.0;
    Network net(spec);
    const auto y1 = net.forward(theta, x);
    const auto y2 = net.forward(theta, x);
    CHECK(y1 == y2);
}

TEST_CASE("forward rejects shape mismatches") {
    Network net(NetworkSpec::mlp({2, 2, 1}));
    const auto theta = init_params(net.spec(), 1);
    CHECK_THROWS_AS(net.forward(theta, std::vector<double>{1.0, 2.0, 3.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(net.forward(std::vector<double>(4, 0.0), std::vector<double>{1.0, 0.0}),
                    std::invalid_argument);
}

TEST_CASE("cost_mse basics") {
    CHECK(cost_mse(std::vector<double>{0.3, 0.7}, std::vector<double>{0.3, 0.7}) == 0.0);
    CHECK(cost_mse(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) == 1.0);
    CHECK(cost_mse(std::vector<double>{0.5}, std::vector<double>{0.0}) == 0.25);
    CHECK_THROWS_AS(cost_mse(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                    std::invalid_argument);
}

TEST_CASE("cost_mse symmetry and quadratic scaling") {
    const std::vector<double> y = {0.2, 0.9, -0.4};
    const std::vector<double> t = {1.0, 0.1, 0.3};
    CHECK(cost_mse(y, t) == cost_mse(t, y));
    std::vector<double> y2 = y, t2 = t;
    const double alpha = 3.5;
    for (auto& v : y2) v *= alpha;
    for (auto& v : t2) v *= alpha;
    CHECK(cost_mse(y2, t2) == doctest::Approx(alpha * alpha * cost_mse(y, t)).epsilon(1e-12));
}

TEST_CASE("accuracy: exact classifier, constant output, trained XOR solution") {
    // identity passthrough scores every sample right
    NetworkSpec ident;
    ident.input_shape = {1, 1, 2};
    ident.layers = {LayerSpec::dense(2, 2, Activation::Linear)};
    const std::vector<double> eye = {1, 0, 0, 1, 0, 0};
    Dataset two;
    two.input_shape = {1, 1, 2};
    two.target_size = 2;
    two.count = 2;
    two.inputs = {1, 0, 0, 1};
    two.targets = {1, 0, 0, 1};
    CHECK(accuracy(Network(ident), eye, two) == 1.0);

    // constant output on a balanced 2-class set scores one class only
    const std::vector<double> constant = {0, 0, 0, 0, 0.7, 0.1};
    CHECK(accuracy(Network(ident), constant, two) == 0.5);

    // hand-built XOR solution (OR and AND hidden units): low cost, full accuracy
    const auto xor_spec = NetworkSpec::mlp({2, 2, 1});
    const std::vector<double> solution = {20, 20, 20, 20, -10, -30, 20, -20, -10};
    const Dataset xor_data = parity_dataset(2);
    Network xor_net(xor_spec);
    CHECK(dataset_mean_cost(xor_net, solution, xor_data) < 0.04);
    CHECK(accuracy(xor_net, solution, xor_data) == 1.0);

    Dataset empty;
    empty.input_shape = {1, 1, 2};
    empty.target_size = 2;
    CHECK_THROWS_AS(accuracy(Network(ident), eye, empty), std::invalid_argument);
}

TEST_CASE("conv shape arithmetic reproduces the published feature counts") {
    // 3x32x32 -> conv(16)/pool -> conv(32)/pool -> conv(64)/pool -> 256 features -> 10
    NetworkSpec cifar;
    cifar.input_shape = {3, 32, 32};
    cifar.layers = {LayerSpec::conv3x3(0, 16), LayerSpec::maxpool2x2(),
                    LayerSpec::conv3x3(0, 32), LayerSpec::maxpool2x2(),
                    LayerSpec::conv3x3(0, 64), LayerSpec::maxpool2x2(),
                    LayerSpec::flatten(),      LayerSpec::dense(0, 10, Activation::Linear)};
    Network net(cifar);
    CHECK(net.param_count() == 26154);
    CHECK(net.layers()[6].out_shape.size() == 256);  // flattened conv features
    CHECK(net.output_size() == 10);
}

TEST_CASE("conv forward: known 3x3 kernel on a known plane") {
    NetworkSpec spec;
    spec.input_shape = {1, 3, 3};
    spec.layers = {LayerSpec::conv3x3(1, 1)};
    // single valid position: dot(kernel, image) + bias
    std::vector<double> theta(10);
    std::vector<double> x(9);
    double expected = 0.0;
    for (int i = 0; i < 9; ++i) {
        theta[i] = 0.1 * (i + 1);
        x[i] = i;
        expected += theta[i] * x[i];
    }
    theta[9] = 0.5;  // bias
    expected += 0.5;
    const auto y = forward(spec, theta, x);
    CHECK(y.size() == 1);
    CHECK(y[0] == doctest::Approx(expected).epsilon(1e-12));

    // negative pre-activation gets clipped by the relu output
    theta[9] = -1000.0;
    CHECK(forward(spec, theta, x)[0] == 0.0);
}

TEST_CASE("maxpool picks the maximum of each 2x2 window and drops odd edges") {
    NetworkSpec spec;
    spec.input_shape = {1, 3, 3};
    spec.layers = {LayerSpec::maxpool2x2()};
    const std::vector<double> x = {1, 5, 9, 3, 2, 8, 7, 6, 4};
    const auto y = forward(spec, {}, x);
    CHECK(y.size() == 1);
    CHECK(y[0] == 5.0);
}

TEST_CASE("parameter serialization round-trips bit-exactly") {
    ParamVector params = {0.0, -0.0, 1.5, -2.25e-300, 3.14159, 1e308};
    const auto bytes = encode_params(params);
    CHECK(bytes.size() == 8 + 8 * params.size());
    CHECK(bytes[0] == params.size());  // little-endian header
    const auto back = decode_params(bytes);
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(std::memcmp(&params[i], &back[i], 8) == 0);
    }

    const auto path = std::filesystem::temp_directory_path() / "mgd_params_test.bin";
    save_params(params, path.string());
    const auto loaded = load_params(path.string());
    CHECK(loaded.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(std::memcmp(&params[i], &loaded[i], 8) == 0);
    }
    std::filesystem::remove(path);

    auto bad = bytes;
    bad.pop_back();
    CHECK_THROWS(decode_params(bad));
}

TEST_CASE("invalid specs are rejected") {
    NetworkSpec empty;
    empty.input_shape = {1, 1, 2};
    CHECK_THROWS_AS(Network{empty}, std::invalid_argument);

    NetworkSpec mismatched;
    mismatched.input_shape = {1, 1, 2};
    mismatched.layers = {LayerSpec::dense(3, 1, Activation::Sigmoid)};
    CHECK_THROWS_AS(Network{mismatched}, std::invalid_argument);

    NetworkSpec tiny_conv;
    tiny_conv.input_shape = {1, 2, 2};
    tiny_conv.layers = {LayerSpec::conv3x3(1, 4)};
    CHECK_THROWS_AS(Network{tiny_conv}, std::invalid_argument);

    NetworkSpec wrong_out;
    wrong_out.input_shape = {1, 1, 2};
    wrong_out.layers = {LayerSpec::dense(2, 3, Activation::Sigmoid)};
    wrong_out.output_size = 4;
    CHECK_THROWS_AS(Network{wrong_out}, std::invalid_argument);
}

TEST_CASE("defect-logistic layers demand a table") {
    auto spec = with_defect_activations(NetworkSpec::mlp({2, 2, 1}));
    Network net(spec);
    CHECK(net.defect_unit_count() == 3);
    const auto theta = init_params(spec, 1);
    CHECK_THROWS_AS(net.forward(theta, std::vector<double>{0.0, 1.0}), std::invalid_argument);

    // a zero-sigma table reproduces the plain sigmoid bit-for-bit
    const auto table = make_defect_table(net.defect_unit_count(), 0.0, 1);
    Network plain(NetworkSpec::mlp({2, 2, 1}));
    const auto y_defect = net.forward(theta, std::vector<double>{0.0, 1.0}, &table);
    const auto y_plain = plain.forward(theta, std::vector<double>{0.0, 1.0});
    CHECK(y_defect == y_plain);
}
