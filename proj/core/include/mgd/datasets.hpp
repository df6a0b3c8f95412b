#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgd/network.hpp"

namespace mgd {

/// Immutable labelled dataset. Inputs are stored row-major, one sample per
/// row, values in [0,1]; targets are one-hot rows (or a scalar per sample for
/// single-output tasks).
struct Dataset {
    std::string name;
    Shape input_shape;
    int target_size = 0;
    std::size_t count = 0;
    std::vector<double> inputs;   // count x input_shape.size()
    std::vector<double> targets;  // count x target_size

    std::size_t size() const { return count; }
    std::span<const double> input(std::size_t i) const {
        const std::size_t n = static_cast<std::size_t>(input_shape.size());
        return {inputs.data() + i * n, n};
    }
    std::span<const double> target(std::size_t i) const {
        const std::size_t n = static_cast<std::size_t>(target_size);
        return {targets.data() + i * n, n};
    }
};

/// All 2^n binary inputs with scalar target = XOR of the bits. Bit j of the
/// sample index is input j, so n=2 enumerates (0,0),(1,0),(0,1),(1,1).
Dataset parity_dataset(int n_bits);

/// 7x7-pixel letter classification (N, I, S, T; 4-class one-hot). Each sample
/// is a base glyph shifted by integers in [-shift_range, +shift_range] (pixels
/// leaving the grid are dropped) with i.i.d. pixel flips. Deterministic per
/// seed. flip_prob = 0 and shift_range = 0 yield the 4 clean glyphs.
Dataset nist7x7_dataset(int samples_per_class, double pixel_flip_prob, int shift_range,
                        std::uint64_t seed);

/// IDX-format loaders (big-endian magic + dims + raw unsigned bytes).
/// Pixels are scaled to [0,1] as byte/255; labels become one-hot rows over
/// max(label)+1 classes. Parse errors name the file and byte offset.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Write a dataset whose values are byte-quantized (k/255) back to a pair of
/// IDX files; load_idx of the result reproduces the dataset bit-exactly.
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

/// CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes
/// (3x32x32, channel-major). Multiple batch files are concatenated.
Dataset load_cifar10(const std::vector<std::string>& batch_paths);

/// Accuracy of a ridge-regression linear classifier fit on the dataset
/// (closed-form least squares on inputs + bias). Gauges task difficulty when
/// tuning generator distortions.
double linear_probe_accuracy(const Dataset& data, double ridge = 1e-6);

}  // namespace mgd
