#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mgd/datasets.hpp"
#include "mgd/network.hpp"

namespace mgd {

using GradientVector = std::vector<double>;

/// Indices of dataset samples forming a batch.
using BatchIndices = std::span<const std::size_t>;

/// Cost of a batch: sum over samples of cost_mse(f(x; theta), target).
double batch_cost(const Network& net, std::span<const double> params, const Dataset& data,
                  BatchIndices batch, Workspace& ws, const DefectTable* defects = nullptr);

/// Exact analytic gradient of batch_cost with respect to theta.
/// relu subgradient at 0 is 0; maxpool routes to the first maximal element.
GradientVector backprop_grad(const Network& net, std::span<const double> params,
                             const Dataset& data, BatchIndices batch,
                             const DefectTable* defects = nullptr);

enum class FdMode { Forward, Central };

/// Finite-difference gradient of batch_cost: forward (C(theta + h e_i) - C(theta)) / h
/// or the symmetric central form.
GradientVector finite_diff_grad(const Network& net, std::span<const double> params,
                                const Dataset& data, BatchIndices batch, double h,
                                FdMode mode = FdMode::Forward,
                                const DefectTable* defects = nullptr);

/// Angle in degrees, arccos of the clipped cosine similarity.
/// Throws std::invalid_argument if either vector is zero.
double angle_between(std::span<const double> a, std::span<const double> b);

struct SgdResult {
    ParamVector params;
    std::vector<double> epoch_costs;            // dataset mean cost after each epoch
    std::int64_t epochs_to_threshold = -1;      // first epoch with mean cost below threshold
};

/// Plain SGD with the summed-MSE batch gradient, fixed eta, no momentum.
/// Samples are swept cyclically in batches of batch_size. Stops early once
/// the dataset mean cost drops below cost_threshold (if > 0). Throws
/// on non-finite cost.
SgdResult backprop_train(const Network& net, const Dataset& data, double eta, int batch_size,
                         std::int64_t epochs, std::uint64_t seed, double init_scale = 1.0,
                         double cost_threshold = 0.0);

}  // namespace mgd
