#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgd/imperfections.hpp"

namespace mgd {

enum class Activation { Linear, Sigmoid, Relu, DefectLogistic };

/// Tensor shape in channels x height x width order. Flat vectors use (1,1,n).
struct Shape {
    int c = 1, h = 1, w = 1;
    int size() const { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

struct LayerSpec {
    enum class Kind { Dense, Conv3x3, MaxPool2x2, Flatten };

    Kind kind = Kind::Dense;
    int in = 0;   // dense: input units; conv: input channels. 0 = infer from the incoming shape.
    int out = 0;  // dense: output units; conv: output channels
    Activation activation = Activation::Linear;

    static LayerSpec dense(int in, int out, Activation act) { return {Kind::Dense, in, out, act}; }
    // stride 1, no padding, relu output
    static LayerSpec conv3x3(int in_channels, int out_channels) {
        return {Kind::Conv3x3, in_channels, out_channels, Activation::Relu};
    }
    static LayerSpec maxpool2x2() { return {Kind::MaxPool2x2, 0, 0, Activation::Linear}; }
    static LayerSpec flatten() { return {Kind::Flatten, 0, 0, Activation::Linear}; }
};

/// Layered feedforward model treated as a black box f(x; theta) by the
/// trainer. Parameter layout is deterministic: layers in order, each layer's
/// weights row-major, then its biases.
struct NetworkSpec {
    Shape input_shape;
    std::vector<LayerSpec> layers;
    int output_size = 0;  // 0 = take the last layer's output size

    /// Fully-connected net: widths = {in, hidden..., out}, e.g. {2,2,1} for
    /// the 9-parameter XOR network.
    static NetworkSpec mlp(const std::vector<int>& widths,
                           Activation activation = Activation::Sigmoid);
};

/// Flat parameter vector of length param_count(spec).
using ParamVector = std::vector<double>;

std::size_t param_count(const NetworkSpec& spec);

/// i.i.d. uniform on [-scale, +scale]; identical seed gives an identical vector.
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed, double scale = 1.0);

/// Mean squared error over the outputs. Throws on length mismatch.
double cost_mse(std::span<const double> y, std::span<const double> target);

/// Scratch buffers for forward evaluation; reuse across calls on a thread.
struct Workspace {
    std::vector<double> ping, pong;
};

/// A validated NetworkSpec with resolved shapes and parameter offsets.
/// Evaluation is pure: identical (params, x) give bit-identical outputs, and
/// concurrent calls are safe as long as each caller owns its Workspace.
class Network {
  public:
    struct LayerMeta {
        LayerSpec::Kind kind;
        Activation activation;
        Shape in_shape, out_shape;
        std::size_t param_offset = 0;  // weights begin here; biases follow the weights
        std::size_t weight_count = 0;
        std::size_t bias_count = 0;
        int defect_offset = -1;  // first index into a DefectTable (dense layers only)
    };

    /// Validates shape compatibility; throws std::invalid_argument on error.
    explicit Network(NetworkSpec spec);

    const NetworkSpec& spec() const { return spec_; }
    const std::vector<LayerMeta>& layers() const { return layers_; }
    std::size_t param_count() const { return param_count_; }
    int input_size() const { return spec_.input_shape.size(); }
    int output_size() const { return spec_.output_size; }
    /// Total dense output units; a DefectTable for this network must have at
    /// least this many entries.
    int defect_unit_count() const { return defect_units_; }

    void forward(std::span<const double> params, std::span<const double> x,
                 std::span<double> y, Workspace& ws, const DefectTable* defects = nullptr) const;
    std::vector<double> forward(std::span<const double> params, std::span<const double> x,
                                const DefectTable* defects = nullptr) const;

  private:
    NetworkSpec spec_;
    std::vector<LayerMeta> layers_;
    std::size_t param_count_ = 0;
    int defect_units_ = 0;
    int max_buffer_ = 0;
};

/// One-shot forward convenience; compiles the spec on every call.
std::vector<double> forward(const NetworkSpec& spec, std::span<const double> params,
                            std::span<const double> x, const DefectTable* defects = nullptr);

struct Dataset;  // datasets.hpp

/// Fraction of samples classified correctly: argmax(y) == argmax(target) for
/// multi-output tasks (first index wins ties), y > 0.5 for single-output.
double accuracy(const Network& net, std::span<const double> params, const Dataset& data,
                const DefectTable* defects = nullptr);
double accuracy(const Network& net, std::span<const double> params, const Dataset& data,
                Workspace& ws, const DefectTable* defects = nullptr);

/// Mean of cost_mse over all samples in the dataset.
double dataset_mean_cost(const Network& net, std::span<const double> params, const Dataset& data,
                         const DefectTable* defects = nullptr);
double dataset_mean_cost(const Network& net, std::span<const double> params, const Dataset& data,
                         Workspace& ws, const DefectTable* defects = nullptr);

/// Replace every sigmoid activation with the per-neuron defect logistic.
NetworkSpec with_defect_activations(NetworkSpec spec);

// ParamVector serialization: 8-byte little-endian header storing P, followed
// by P little-endian IEEE-754 doubles. Round-trips bit-exactly.
std::vector<std::uint8_t> encode_params(const ParamVector& params);
ParamVector decode_params(std::span<const std::uint8_t> bytes);
void save_params(const ParamVector& params, const std::string& path);
ParamVector load_params(const std::string& path);

/// FNV-1a over the raw bytes; used for cheap trace checksums.
std::uint64_t param_checksum(std::span<const double> params);

}  // namespace mgd
