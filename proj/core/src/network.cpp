#include "mgd/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mgd/datasets.hpp"
#include "mgd/rng.hpp"

namespace mgd {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string shape_str(const Shape& s) {
    return std::to_string(s.c) + "x" + std::to_string(s.h) + "x" + std::to_string(s.w);
}

}  // namespace

NetworkSpec NetworkSpec::mlp(const std::vector<int>& widths, Activation activation) {
    if (widths.size() < 2) {
        throw std::invalid_argument("mlp: need at least input and output widths");
    }
    NetworkSpec spec;
    spec.input_shape = {1, 1, widths.front()};
    for (std::size_t i = 1; i < widths.size(); ++i) {
        spec.layers.push_back(LayerSpec::dense(widths[i - 1], widths[i], activation));
    }
    spec.output_size = widths.back();
    return spec;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    if (spec_.layers.empty()) {
        throw std::invalid_argument("network spec has no layers");
    }
    if (spec_.input_shape.size() < 1) {
        throw std::invalid_argument("network input shape is empty");
    }
    Shape cur = spec_.input_shape;
    std::size_t offset = 0;
    max_buffer_ = cur.size();
    for (auto& layer : spec_.layers) {
        LayerMeta meta;
        meta.kind = layer.kind;
        meta.activation = layer.activation;
        meta.in_shape = cur;
        switch (layer.kind) {
            case LayerSpec::Kind::Dense: {
                const int in = cur.size();
                if (layer.in == 0) layer.in = in;
                if (layer.in != in) {
                    throw std::invalid_argument("dense layer expects " + std::to_string(layer.in) +
                                                " inputs but gets " + shape_str(cur));
                }
                if (layer.out <= 0) throw std::invalid_argument("dense layer needs out > 0");
                meta.out_shape = {1, 1, layer.out};
                meta.weight_count = static_cast<std::size_t>(layer.in) * layer.out;
                meta.bias_count = layer.out;
                meta.defect_offset = defect_units_;
                defect_units_ += layer.out;
                break;
            }
            case LayerSpec::Kind::Conv3x3: {
                if (layer.in == 0) layer.in = cur.c;
                if (layer.in != cur.c) {
                    throw std::invalid_argument("conv3x3 expects " + std::to_string(layer.in) +
                                                " input channels but gets " + shape_str(cur));
                }
                if (layer.out <= 0) throw std::invalid_argument("conv3x3 needs out > 0");
                if (cur.h < 3 || cur.w < 3) {
                    throw std::invalid_argument("conv3x3 input too small: " + shape_str(cur));
                }
                if (layer.activation != Activation::Relu) {
                    throw std::invalid_argument("conv3x3 layers use relu activation");
                }
                meta.out_shape = {layer.out, cur.h - 2, cur.w - 2};
                meta.weight_count = 9u * static_cast<std::size_t>(layer.in) * layer.out;
                meta.bias_count = layer.out;
                break;
            }
            case LayerSpec::Kind::MaxPool2x2: {
                if (cur.h < 2 || cur.w < 2) {
                    throw std::invalid_argument("maxpool2x2 input too small: " + shape_str(cur));
                }
                meta.out_shape = {cur.c, cur.h / 2, cur.w / 2};
                break;
            }
            case LayerSpec::Kind::Flatten: {
                meta.out_shape = {1, 1, cur.size()};
                break;
            }
        }
        meta.param_offset = offset;
        offset += meta.weight_count + meta.bias_count;
        cur = meta.out_shape;
        max_buffer_ = std::max(max_buffer_, cur.size());
        layers_.push_back(meta);
    }
    param_count_ = offset;
    if (spec_.output_size == 0) {
        spec_.output_size = cur.size();
    } else if (spec_.output_size != cur.size()) {
        throw std::invalid_argument("spec declares output size " +
                                    std::to_string(spec_.output_size) + " but layers produce " +
                                    std::to_string(cur.size()));
    }
}

void Network::forward(std::span<const double> params, std::span<const double> x,
                      std::span<double> y, Workspace& ws, const DefectTable* defects) const {
    if (static_cast<int>(x.size()) != input_size()) {
        throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                    " values, expected " + std::to_string(input_size()));
    }
    if (params.size() != param_count_) {
        throw std::invalid_argument("forward: parameter vector has " +
                                    std::to_string(params.size()) + " values, expected " +
                                    std::to_string(param_count_));
    }
    if (static_cast<int>(y.size()) != output_size()) {
        throw std::invalid_argument("forward: output span size mismatch");
    }
    ws.ping.resize(max_buffer_);
    ws.pong.resize(max_buffer_);
    double* cur = ws.ping.data();
    double* nxt = ws.pong.data();
    std::copy(x.begin(), x.end(), cur);

    for (const auto& layer : layers_) {
        switch (layer.kind) {
            case LayerSpec::Kind::Dense: {
                const int in = layer.in_shape.size();
                const int out = layer.out_shape.size();
                const double* w = params.data() + layer.param_offset;
                const double* b = w + layer.weight_count;
                for (int j = 0; j < out; ++j) {
                    const double* wj = w + static_cast<std::size_t>(j) * in;
                    double s = b[j];
                    for (int i = 0; i < in; ++i) s += wj[i] * cur[i];
                    nxt[j] = s;
                }
                switch (layer.activation) {
                    case Activation::Linear:
                        break;
                    case Activation::Sigmoid:
                        for (int j = 0; j < out; ++j) nxt[j] = sigmoid(nxt[j]);
                        break;
                    case Activation::Relu:
                        for (int j = 0; j < out; ++j) nxt[j] = nxt[j] > 0.0 ? nxt[j] : 0.0;
                        break;
                    case Activation::DefectLogistic: {
                        if (defects == nullptr) {
                            throw std::invalid_argument(
                                "forward: defect-logistic activation requires a DefectTable");
                        }
                        if (defects->size() <
                            static_cast<std::size_t>(layer.defect_offset + out)) {
                            throw std::invalid_argument("forward: DefectTable too small");
                        }
                        for (int j = 0; j < out; ++j) {
                            nxt[j] = defect_logistic(*defects, layer.defect_offset + j, nxt[j]);
                        }
                        break;
                    }
                }
                std::swap(cur, nxt);
                break;
            }
            case LayerSpec::Kind::Conv3x3: {
                const int ic = layer.in_shape.c, ih = layer.in_shape.h, iw = layer.in_shape.w;
                const int oc = layer.out_shape.c, oh = layer.out_shape.h, ow = layer.out_shape.w;
                const double* w = params.data() + layer.param_offset;
                const double* b = w + layer.weight_count;
                for (int o = 0; o < oc; ++o) {
                    double* out = nxt + static_cast<std::size_t>(o) * oh * ow;
                    std::fill(out, out + oh * ow, b[o]);
                    for (int c = 0; c < ic; ++c) {
                        const double* k = w + (static_cast<std::size_t>(o) * ic + c) * 9;
                        const double* in = cur + static_cast<std::size_t>(c) * ih * iw;
                        for (int yy = 0; yy < oh; ++yy) {
                            const double* r0 = in + (yy + 0) * iw;
                            const double* r1 = in + (yy + 1) * iw;
                            const double* r2 = in + (yy + 2) * iw;
                            double* orow = out + yy * ow;
                            for (int xx = 0; xx < ow; ++xx) {
                                orow[xx] += k[0] * r0[xx] + k[1] * r0[xx + 1] + k[2] * r0[xx + 2] +
                                            k[3] * r1[xx] + k[4] * r1[xx + 1] + k[5] * r1[xx + 2] +
                                            k[6] * r2[xx] + k[7] * r2[xx + 1] + k[8] * r2[xx + 2];
                            }
                        }
                    }
                }
                const int n = oc * oh * ow;
                for (int i = 0; i < n; ++i) nxt[i] = nxt[i] > 0.0 ? nxt[i] : 0.0;
                std::swap(cur, nxt);
                break;
            }
            case LayerSpec::Kind::MaxPool2x2: {
                const int c = layer.in_shape.c, ih = layer.in_shape.h, iw = layer.in_shape.w;
                const int oh = layer.out_shape.h, ow = layer.out_shape.w;
                for (int ch = 0; ch < c; ++ch) {
                    const double* in = cur + static_cast<std::size_t>(ch) * ih * iw;
                    double* out = nxt + static_cast<std::size_t>(ch) * oh * ow;
                    for (int yy = 0; yy < oh; ++yy) {
                        for (int xx = 0; xx < ow; ++xx) {
                            const double* p = in + (2 * yy) * iw + 2 * xx;
                            const double m0 = std::max(p[0], p[1]);
                            const double m1 = std::max(p[iw], p[iw + 1]);
                            out[yy * ow + xx] = std::max(m0, m1);
                        }
                    }
                }
                std::swap(cur, nxt);
                break;
            }
            case LayerSpec::Kind::Flatten:
                break;  // storage is already flat
        }
    }
    std::copy(cur, cur + output_size(), y.data());
}

std::vector<double> Network::forward(std::span<const double> params, std::span<const double> x,
                                     const DefectTable* defects) const {
    Workspace ws;
    std::vector<double> y(output_size());
    forward(params, x, y, ws, defects);
    return y;
}

std::vector<double> forward(const NetworkSpec& spec, std::span<const double> params,
                            std::span<const double> x, const DefectTable* defects) {
    return Network(spec).forward(params, x, defects);
}

std::size_t param_count(const NetworkSpec& spec) { return Network(spec).param_count(); }

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("init_params: scale must be > 0");
    const std::size_t n = param_count(spec);
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-scale, scale);
    ParamVector params(n);
    for (auto& v : params) v = dist(rng);
    return params;
}

double cost_mse(std::span<const double> y, std::span<const double> target) {
    if (y.size() != target.size()) {
        throw std::invalid_argument("cost_mse: length mismatch (" + std::to_string(y.size()) +
                                    " vs " + std::to_string(target.size()) + ")");
    }
    if (y.empty()) throw std::invalid_argument("cost_mse: empty vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = y[i] - target[i];
        sum += d * d;
    }
    return sum / static_cast<double>(y.size());
}

namespace {

int predicted_class(std::span<const double> y) {
    if (y.size() == 1) return y[0] > 0.5 ? 1 : 0;
    return static_cast<int>(std::max_element(y.begin(), y.end()) - y.begin());
}

}  // namespace

double accuracy(const Network& net, std::span<const double> params, const Dataset& data,
                Workspace& ws, const DefectTable* defects) {
    if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
    std::vector<double> y(net.output_size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        net.forward(params, data.input(i), y, ws, defects);
        if (predicted_class(y) == predicted_class(data.target(i))) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

double accuracy(const Network& net, std::span<const double> params, const Dataset& data,
                const DefectTable* defects) {
    Workspace ws;
    return accuracy(net, params, data, ws, defects);
}

double dataset_mean_cost(const Network& net, std::span<const double> params, const Dataset& data,
                         Workspace& ws, const DefectTable* defects) {
    if (data.size() == 0) throw std::invalid_argument("dataset_mean_cost: empty dataset");
    std::vector<double> y(net.output_size());
    double sum = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        net.forward(params, data.input(i), y, ws, defects);
        sum += cost_mse(y, data.target(i));
    }
    return sum / static_cast<double>(data.size());
}

double dataset_mean_cost(const Network& net, std::span<const double> params, const Dataset& data,
                         const DefectTable* defects) {
    Workspace ws;
    return dataset_mean_cost(net, params, data, ws, defects);
}

NetworkSpec with_defect_activations(NetworkSpec spec) {
    for (auto& layer : spec.layers) {
        if (layer.kind == LayerSpec::Kind::Dense && layer.activation == Activation::Sigmoid) {
            layer.activation = Activation::DefectLogistic;
        }
    }
    return spec;
}

namespace {

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint64_t get_u64_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(bytes[offset + k]) << (8 * k);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_params(const ParamVector& params) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 8 * params.size());
    put_u64_le(out, params.size());
    for (double d : params) put_u64_le(out, std::bit_cast<std::uint64_t>(d));
    return out;
}

ParamVector decode_params(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw std::runtime_error("param blob truncated: no header");
    const std::uint64_t n = get_u64_le(bytes, 0);
    if (bytes.size() != 8 + 8 * n) {
        throw std::runtime_error("param blob has " + std::to_string(bytes.size()) +
                                 " bytes, header says " + std::to_string(8 + 8 * n));
    }
    ParamVector params(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        params[i] = std::bit_cast<double>(get_u64_le(bytes, 8 + 8 * i));
    }
    return params;
}

void save_params(const ParamVector& params, const std::string& path) {
    const auto bytes = encode_params(params);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

ParamVector load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode_params(bytes);
}

std::uint64_t param_checksum(std::span<const double> params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double d : params) {
        const std::uint64_t bits = std::bit_cast<std::uint64_t>(d);
        for (int k = 0; k < 8; ++k) {
            h ^= (bits >> (8 * k)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace mgd
