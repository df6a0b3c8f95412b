#include "mgd/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "mgd/rng.hpp"

namespace mgd {

double batch_cost(const Network& net, std::span<const double> params, const Dataset& data,
                  BatchIndices batch, Workspace& ws, const DefectTable* defects) {
    std::vector<double> y(net.output_size());
    double total = 0.0;
    for (std::size_t idx : batch) {
        net.forward(params, data.input(idx), y, ws, defects);
        total += cost_mse(y, data.target(idx));
    }
    return total;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Cached forward pass: per-layer inputs, pre-activations and maxpool routing.
struct Tape {
    std::vector<std::vector<double>> act;      // act[l] = input of layer l; act[L] = output
    std::vector<std::vector<double>> pre;      // dense/conv pre-activations
    std::vector<std::vector<int>> pool_src;    // maxpool: winning input index per output element
    std::vector<double> dcur, dprev;

    void init(const Network& net) {
        const auto& layers = net.layers();
        act.resize(layers.size() + 1);
        pre.resize(layers.size());
        pool_src.resize(layers.size());
        act[0].resize(net.input_size());
        int max_size = net.input_size();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& meta = layers[l];
            act[l + 1].resize(meta.out_shape.size());
            if (meta.kind == LayerSpec::Kind::Dense || meta.kind == LayerSpec::Kind::Conv3x3) {
                pre[l].resize(meta.out_shape.size());
            }
            if (meta.kind == LayerSpec::Kind::MaxPool2x2) {
                pool_src[l].resize(meta.out_shape.size());
            }
            max_size = std::max(max_size, meta.out_shape.size());
        }
        dcur.resize(max_size);
        dprev.resize(max_size);
    }
};

void forward_tape(const Network& net, std::span<const double> params, std::span<const double> x,
                  Tape& tape, const DefectTable* defects) {
    const auto& layers = net.layers();
    std::copy(x.begin(), x.end(), tape.act[0].begin());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& meta = layers[l];
        const std::vector<double>& in = tape.act[l];
        std::vector<double>& out = tape.act[l + 1];
        switch (meta.kind) {
            case LayerSpec::Kind::Dense: {
                const int ni = meta.in_shape.size();
                const int no = meta.out_shape.size();
                const double* w = params.data() + meta.param_offset;
                const double* b = w + meta.weight_count;
                for (int j = 0; j < no; ++j) {
                    const double* wj = w + static_cast<std::size_t>(j) * ni;
                    double s = b[j];
                    for (int i = 0; i < ni; ++i) s += wj[i] * in[i];
                    tape.pre[l][j] = s;
                }
                switch (meta.activation) {
                    case Activation::Linear:
                        out = tape.pre[l];
                        break;
                    case Activation::Sigmoid:
                        for (int j = 0; j < no; ++j) out[j] = sigmoid(tape.pre[l][j]);
                        break;
                    case Activation::Relu:
                        for (int j = 0; j < no; ++j)
                            out[j] = tape.pre[l][j] > 0.0 ? tape.pre[l][j] : 0.0;
                        break;
                    case Activation::DefectLogistic:
                        if (defects == nullptr) {
                            throw std::invalid_argument(
                                "backprop: defect-logistic activation requires a DefectTable");
                        }
                        for (int j = 0; j < no; ++j) {
                            out[j] =
                                defect_logistic(*defects, meta.defect_offset + j, tape.pre[l][j]);
                        }
                        break;
                }
                break;
            }
            case LayerSpec::Kind::Conv3x3: {
                const int ic = meta.in_shape.c, ih = meta.in_shape.h, iw = meta.in_shape.w;
                const int oc = meta.out_shape.c, oh = meta.out_shape.h, ow = meta.out_shape.w;
                const double* w = params.data() + meta.param_offset;
                const double* b = w + meta.weight_count;
                for (int o = 0; o < oc; ++o) {
                    double* seg = tape.pre[l].data() + static_cast<std::size_t>(o) * oh * ow;
                    std::fill(seg, seg + oh * ow, b[o]);
                    for (int c = 0; c < ic; ++c) {
                        const double* k = w + (static_cast<std::size_t>(o) * ic + c) * 9;
                        const double* src = in.data() + static_cast<std::size_t>(c) * ih * iw;
                        for (int yy = 0; yy < oh; ++yy) {
                            for (int xx = 0; xx < ow; ++xx) {
                                double s = 0.0;
                                for (int ky = 0; ky < 3; ++ky) {
                                    const double* row = src + (yy + ky) * iw + xx;
                                    s += k[3 * ky] * row[0] + k[3 * ky + 1] * row[1] +
                                         k[3 * ky + 2] * row[2];
                                }
                                seg[yy * ow + xx] += s;
                            }
                        }
                    }
                }
                const int n = oc * oh * ow;
                for (int i = 0; i < n; ++i) {
                    out[i] = tape.pre[l][i] > 0.0 ? tape.pre[l][i] : 0.0;
                }
                break;
            }
            case LayerSpec::Kind::MaxPool2x2: {
                const int c = meta.in_shape.c, ih = meta.in_shape.h, iw = meta.in_shape.w;
                const int oh = meta.out_shape.h, ow = meta.out_shape.w;
                for (int ch = 0; ch < c; ++ch) {
                    const double* src = in.data() + static_cast<std::size_t>(ch) * ih * iw;
                    const int base_out = ch * oh * ow;
                    for (int yy = 0; yy < oh; ++yy) {
                        for (int xx = 0; xx < ow; ++xx) {
                            // first maximal element wins ties
                            int best = (2 * yy) * iw + 2 * xx;
                            const int candidates[4] = {best, best + 1, best + iw, best + iw + 1};
                            for (int k = 1; k < 4; ++k) {
                                if (src[candidates[k]] > src[best]) best = candidates[k];
                            }
                            const int o = base_out + yy * ow + xx;
                            out[o] = src[best];
                            tape.pool_src[l][o] = ch * ih * iw + best;
                        }
                    }
                }
                break;
            }
            case LayerSpec::Kind::Flatten:
                out = in;
                break;
        }
    }
}

double activation_derivative(const Network::LayerMeta& meta, const Tape& tape, std::size_t layer,
                             int j, const DefectTable* defects) {
    switch (meta.activation) {
        case Activation::Linear:
            return 1.0;
        case Activation::Sigmoid: {
            const double s = tape.act[layer + 1][j];
            return s * (1.0 - s);
        }
        case Activation::Relu:
            return tape.pre[layer][j] > 0.0 ? 1.0 : 0.0;
        case Activation::DefectLogistic: {
            const std::size_t k = meta.defect_offset + j;
            const double s =
                sigmoid(defects->beta[k] * (tape.pre[layer][j] - defects->a[k]));
            return defects->alpha[k] * defects->beta[k] * s * (1.0 - s);
        }
    }
    return 0.0;
}

void backward_sample(const Network& net, std::span<const double> params,
                     std::span<const double> target, Tape& tape, const DefectTable* defects,
                     std::span<double> grad) {
    const auto& layers = net.layers();
    const int out_len = net.output_size();
    // d cost_mse / dy = 2/len * (y - target)
    const double scale = 2.0 / static_cast<double>(out_len);
    for (int j = 0; j < out_len; ++j) {
        tape.dcur[j] = scale * (tape.act.back()[j] - target[j]);
    }
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& meta = layers[li];
        const std::vector<double>& in = tape.act[li];
        switch (meta.kind) {
            case LayerSpec::Kind::Dense: {
                const int ni = meta.in_shape.size();
                const int no = meta.out_shape.size();
                const double* w = params.data() + meta.param_offset;
                double* gw = grad.data() + meta.param_offset;
                double* gb = gw + meta.weight_count;
                std::fill(tape.dprev.begin(), tape.dprev.begin() + ni, 0.0);
                for (int j = 0; j < no; ++j) {
                    const double delta =
                        tape.dcur[j] * activation_derivative(meta, tape, li, j, defects);
                    if (delta == 0.0) continue;
                    const double* wj = w + static_cast<std::size_t>(j) * ni;
                    double* gwj = gw + static_cast<std::size_t>(j) * ni;
                    for (int i = 0; i < ni; ++i) {
                        gwj[i] += delta * in[i];
                        tape.dprev[i] += delta * wj[i];
                    }
                    gb[j] += delta;
                }
                break;
            }
            case LayerSpec::Kind::Conv3x3: {
                const int ic = meta.in_shape.c, ih = meta.in_shape.h, iw = meta.in_shape.w;
                const int oc = meta.out_shape.c, oh = meta.out_shape.h, ow = meta.out_shape.w;
                const double* w = params.data() + meta.param_offset;
                double* gw = grad.data() + meta.param_offset;
                double* gb = gw + meta.weight_count;
                std::fill(tape.dprev.begin(), tape.dprev.begin() + ic * ih * iw, 0.0);
                for (int o = 0; o < oc; ++o) {
                    for (int yy = 0; yy < oh; ++yy) {
                        for (int xx = 0; xx < ow; ++xx) {
                            const int oi = (o * oh + yy) * ow + xx;
                            if (tape.pre[li][oi] <= 0.0) continue;  // relu subgradient
                            const double delta = tape.dcur[oi];
                            if (delta == 0.0) continue;
                            gb[o] += delta;
                            for (int c = 0; c < ic; ++c) {
                                const double* k = w + (static_cast<std::size_t>(o) * ic + c) * 9;
                                double* gk = gw + (static_cast<std::size_t>(o) * ic + c) * 9;
                                const std::size_t src0 = static_cast<std::size_t>(c) * ih * iw;
                                for (int ky = 0; ky < 3; ++ky) {
                                    const std::size_t row = src0 + (yy + ky) * iw + xx;
                                    for (int kx = 0; kx < 3; ++kx) {
                                        gk[3 * ky + kx] += delta * in[row + kx];
                                        tape.dprev[row + kx] += delta * k[3 * ky + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerSpec::Kind::MaxPool2x2: {
                const int n_in = meta.in_shape.size();
                const int n_out = meta.out_shape.size();
                std::fill(tape.dprev.begin(), tape.dprev.begin() + n_in, 0.0);
                for (int o = 0; o < n_out; ++o) {
                    tape.dprev[tape.pool_src[li][o]] += tape.dcur[o];
                }
                break;
            }
            case LayerSpec::Kind::Flatten: {
                const int n = meta.in_shape.size();
                std::copy(tape.dcur.begin(), tape.dcur.begin() + n, tape.dprev.begin());
                break;
            }
        }
        std::swap(tape.dcur, tape.dprev);
    }
}

}  // namespace

GradientVector backprop_grad(const Network& net, std::span<const double> params,
                             const Dataset& data, BatchIndices batch, const DefectTable* defects) {
    if (params.size() != net.param_count()) {
        throw std::invalid_argument("backprop_grad: parameter vector length mismatch");
    }
    GradientVector grad(net.param_count(), 0.0);
    Tape tape;
    tape.init(net);
    for (std::size_t idx : batch) {
        forward_tape(net, params, data.input(idx), tape, defects);
        backward_sample(net, params, data.target(idx), tape, defects, grad);
    }
    return grad;
}

GradientVector finite_diff_grad(const Network& net, std::span<const double> params,
                                const Dataset& data, BatchIndices batch, double h, FdMode mode,
                                const DefectTable* defects) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be > 0");
    std::vector<double> theta(params.begin(), params.end());
    Workspace ws;
    GradientVector grad(theta.size());
    const double base =
        mode == FdMode::Forward ? batch_cost(net, theta, data, batch, ws, defects) : 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta[i];
        if (mode == FdMode::Forward) {
            theta[i] = saved + h;
            const double up = batch_cost(net, theta, data, batch, ws, defects);
            grad[i] = (up - base) / h;
        } else {
            theta[i] = saved + h;
            const double up = batch_cost(net, theta, data, batch, ws, defects);
            theta[i] = saved - h;
            const double down = batch_cost(net, theta, data, batch, ws, defects);
            grad[i] = (up - down) / (2.0 * h);
        }
        theta[i] = saved;
    }
    return grad;
}

double angle_between(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("angle_between: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw std::invalid_argument("angle_between: undefined for a zero vector");
    }
    const double c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    return std::acos(c) * 180.0 / std::numbers::pi;
}

SgdResult backprop_train(const Network& net, const Dataset& data, double eta, int batch_size,
                         std::int64_t epochs, std::uint64_t seed, double init_scale,
                         double cost_threshold) {
    if (batch_size < 1) throw std::invalid_argument("backprop_train: batch_size must be >= 1");
    if (data.size() == 0) throw std::invalid_argument("backprop_train: empty dataset");
    SgdResult result;
    result.params = init_params(net.spec(), derive_seed(seed, stream_tag::init), init_scale);
    Workspace ws;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::int64_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(batch_size));
            const GradientVector grad = backprop_grad(
                net, result.params, data, BatchIndices(order.data() + start, stop - start));
            for (std::size_t i = 0; i < result.params.size(); ++i) {
                result.params[i] -= eta * grad[i];
            }
        }
        const double cost = dataset_mean_cost(net, result.params, data, ws);
        if (!std::isfinite(cost)) {
            throw std::runtime_error("backprop_train: diverged (non-finite cost) at epoch " +
                                     std::to_string(epoch + 1));
        }
        result.epoch_costs.push_back(cost);
        if (cost_threshold > 0.0 && cost <= cost_threshold) {
            result.epochs_to_threshold = epoch + 1;
            break;
        }
    }
    return result;
}

}  // namespace mgd
