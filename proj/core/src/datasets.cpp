#include "mgd/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mgd/rng.hpp"

namespace mgd {

Dataset parity_dataset(int n_bits) {
    if (n_bits < 1 || n_bits > 16) {
        throw std::invalid_argument("parity_dataset: n_bits must be in [1, 16]");
    }
    Dataset data;
    data.name = std::to_string(n_bits) + "-bit parity";
    data.input_shape = {1, 1, n_bits};
    data.target_size = 1;
    data.count = std::size_t{1} << n_bits;
    data.inputs.reserve(data.count * n_bits);
    data.targets.reserve(data.count);
    for (std::size_t i = 0; i < data.count; ++i) {
        int ones = 0;
        for (int j = 0; j < n_bits; ++j) {
            const int bit = static_cast<int>((i >> j) & 1U);
            data.inputs.push_back(static_cast<double>(bit));
            ones += bit;
        }
        data.targets.push_back(static_cast<double>(ones % 2));
    }
    return data;
}

namespace {

// 7x7 letter bitmaps; '#' = lit pixel.
constexpr std::array<std::array<const char*, 7>, 4> kGlyphs = {{
    {"#.....#",
     "##....#",
     "#.#...#",
     "#..#..#",
     "#...#.#",
     "#....##",
     "#.....#"},
    {"#######",
     "...#...",
     "...#...",
     "...#...",
     "...#...",
     "...#...",
     "#######"},
    {".######",
     "#......",
     "#......",
     ".#####.",
     "......#",
     "......#",
     "######."},
    {"#######",
     "...#...",
     "...#...",
     "...#...",
     "...#...",
     "...#...",
     "...#..."},
}};

std::array<double, 49> glyph_bitmap(int cls) {
    std::array<double, 49> px{};
    for (int y = 0; y < 7; ++y) {
        for (int x = 0; x < 7; ++x) {
            px[y * 7 + x] = kGlyphs[cls][y][x] == '#' ? 1.0 : 0.0;
        }
    }
    return px;
}

}  // namespace

Dataset nist7x7_dataset(int samples_per_class, double pixel_flip_prob, int shift_range,
                        std::uint64_t seed) {
    if (samples_per_class < 1) {
        throw std::invalid_argument("nist7x7_dataset: samples_per_class must be >= 1");
    }
    if (pixel_flip_prob < 0.0 || pixel_flip_prob > 1.0) {
        throw std::invalid_argument("nist7x7_dataset: pixel_flip_prob must be in [0, 1]");
    }
    if (shift_range < 0 || shift_range > 6) {
        throw std::invalid_argument(
            "nist7x7_dataset: shift_range must be in [0, 6]; larger shifts push a glyph "
            "fully off the 7x7 grid");
    }
    const std::array<std::array<double, 49>, 4> base = {glyph_bitmap(0), glyph_bitmap(1),
                                                        glyph_bitmap(2), glyph_bitmap(3)};
    Dataset data;
    data.name = "nist7x7";
    data.input_shape = {1, 7, 7};
    data.target_size = 4;
    data.count = static_cast<std::size_t>(samples_per_class) * 4;
    data.inputs.resize(data.count * 49, 0.0);
    data.targets.resize(data.count * 4, 0.0);
    Rng rng(seed);
    std::uniform_int_distribution<int> shift(-shift_range, shift_range);
    std::bernoulli_distribution flip(pixel_flip_prob);
    // classes interleave round-robin so cyclic sample sweeps stay balanced
    for (int s = 0; s < samples_per_class; ++s) {
        for (int cls = 0; cls < 4; ++cls) {
            const std::size_t row = static_cast<std::size_t>(s) * 4 + cls;
            double* px = data.inputs.data() + row * 49;
            const int dx = shift_range > 0 ? shift(rng) : 0;
            const int dy = shift_range > 0 ? shift(rng) : 0;
            for (int y = 0; y < 7; ++y) {
                for (int x = 0; x < 7; ++x) {
                    const int sy = y - dy, sx = x - dx;
                    if (sy >= 0 && sy < 7 && sx >= 0 && sx < 7) {
                        px[y * 7 + x] = base[cls][sy * 7 + sx];
                    }
                }
            }
            if (pixel_flip_prob > 0.0) {
                for (int i = 0; i < 49; ++i) {
                    if (flip(rng)) px[i] = 1.0 - px[i];
                }
            }
            data.targets[row * 4 + cls] = 1.0;
        }
    }
    return data;
}

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                          const std::string& path) {
    if (offset + 4 > bytes.size()) {
        throw std::runtime_error(path + ": truncated at offset " + std::to_string(offset));
    }
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_u32_be(std::ofstream& f, std::uint32_t v) {
    const char out[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                         static_cast<char>(v >> 8), static_cast<char>(v)};
    f.write(out, 4);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;  // ubyte, 3 dims
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;  // ubyte, 1 dim

std::string hex_magic(std::uint32_t m) {
    char buf[11];
    std::snprintf(buf, sizeof(buf), "0x%08x", m);
    return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const std::uint32_t img_magic = read_u32_be(img, 0, images_path);
    if (img_magic != kIdxImagesMagic) {
        throw std::runtime_error(images_path + ": bad magic " + hex_magic(img_magic) +
                                 " at offset 0 (expected " + hex_magic(kIdxImagesMagic) + ")");
    }
    const std::uint32_t count = read_u32_be(img, 4, images_path);
    const std::uint32_t rows = read_u32_be(img, 8, images_path);
    const std::uint32_t cols = read_u32_be(img, 12, images_path);
    const std::size_t expected = 16 + static_cast<std::size_t>(count) * rows * cols;
    if (img.size() != expected) {
        throw std::runtime_error(images_path + ": expected " + std::to_string(expected) +
                                 " bytes, found " + std::to_string(img.size()) +
                                 " (pixel data starts at offset 16)");
    }

    const auto lab = read_file(labels_path);
    const std::uint32_t lab_magic = read_u32_be(lab, 0, labels_path);
    if (lab_magic != kIdxLabelsMagic) {
        throw std::runtime_error(labels_path + ": bad magic " + hex_magic(lab_magic) +
                                 " at offset 0 (expected " + hex_magic(kIdxLabelsMagic) + ")");
    }
    const std::uint32_t lab_count = read_u32_be(lab, 4, labels_path);
    if (lab.size() != 8 + static_cast<std::size_t>(lab_count)) {
        throw std::runtime_error(labels_path + ": expected " +
                                 std::to_string(8 + lab_count) + " bytes, found " +
                                 std::to_string(lab.size()) + " (labels start at offset 8)");
    }
    if (lab_count != count) {
        throw std::runtime_error("image count " + std::to_string(count) +
                                 " does not match label count " + std::to_string(lab_count));
    }
    if (count == 0) throw std::runtime_error(images_path + ": empty dataset");

    int classes = 0;
    for (std::size_t i = 0; i < count; ++i) classes = std::max(classes, int(lab[8 + i]) + 1);

    Dataset data;
    data.name = images_path;
    data.input_shape = {1, static_cast<int>(rows), static_cast<int>(cols)};
    data.target_size = classes;
    data.count = count;
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    data.inputs.resize(data.count * pixels);
    data.targets.assign(data.count * classes, 0.0);
    for (std::size_t i = 0; i < data.count; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            data.inputs[i * pixels + p] = img[16 + i * pixels + p] / 255.0;
        }
        data.targets[i * classes + lab[8 + i]] = 1.0;
    }
    return data;
}

void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path) {
    if (data.input_shape.c != 1) {
        throw std::invalid_argument("save_idx: only single-channel datasets fit the IDX layout");
    }
    std::ofstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("cannot open for writing: " + images_path);
    write_u32_be(img, kIdxImagesMagic);
    write_u32_be(img, static_cast<std::uint32_t>(data.count));
    write_u32_be(img, static_cast<std::uint32_t>(data.input_shape.h));
    write_u32_be(img, static_cast<std::uint32_t>(data.input_shape.w));
    for (double v : data.inputs) {
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        img.put(static_cast<char>(q));
    }
    if (!img) throw std::runtime_error("write failed: " + images_path);

    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("cannot open for writing: " + labels_path);
    write_u32_be(lab, kIdxLabelsMagic);
    write_u32_be(lab, static_cast<std::uint32_t>(data.count));
    for (std::size_t i = 0; i < data.count; ++i) {
        const auto t = data.target(i);
        int label = 0;
        if (t.size() == 1) {
            label = t[0] > 0.5 ? 1 : 0;
        } else {
            label = static_cast<int>(std::max_element(t.begin(), t.end()) - t.begin());
        }
        lab.put(static_cast<char>(label));
    }
    if (!lab) throw std::runtime_error("write failed: " + labels_path);
}

Dataset load_cifar10(const std::vector<std::string>& batch_paths) {
    if (batch_paths.empty()) throw std::invalid_argument("load_cifar10: no batch files");
    constexpr std::size_t kRecord = 1 + 3072;
    Dataset data;
    data.name = "cifar10";
    data.input_shape = {3, 32, 32};
    data.target_size = 10;
    for (const auto& path : batch_paths) {
        const auto bytes = read_file(path);
        if (bytes.empty() || bytes.size() % kRecord != 0) {
            throw std::runtime_error(path + ": size " + std::to_string(bytes.size()) +
                                     " is not a multiple of the 3073-byte record");
        }
        const std::size_t records = bytes.size() / kRecord;
        for (std::size_t r = 0; r < records; ++r) {
            const std::uint8_t label = bytes[r * kRecord];
            if (label > 9) {
                throw std::runtime_error(path + ": label " + std::to_string(int(label)) +
                                         " out of range at offset " + std::to_string(r * kRecord));
            }
            for (std::size_t p = 0; p < 3072; ++p) {
                data.inputs.push_back(bytes[r * kRecord + 1 + p] / 255.0);
            }
            std::array<double, 10> onehot{};
            onehot[label] = 1.0;
            data.targets.insert(data.targets.end(), onehot.begin(), onehot.end());
        }
        data.count += records;
    }
    return data;
}

namespace {

// Solve A x = b in place by Gaussian elimination with partial pivoting.
void solve_linear(std::vector<double>& a, std::vector<double>& b, int n, int rhs) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r) {
            if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
        }
        if (pivot != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[pivot * n + c]);
            for (int c = 0; c < rhs; ++c) std::swap(b[col * rhs + c], b[pivot * rhs + c]);
        }
        const double diag = a[col * n + col];
        if (diag == 0.0) throw std::runtime_error("linear probe: singular normal equations");
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / diag;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            for (int c = 0; c < rhs; ++c) b[r * rhs + c] -= f * b[col * rhs + c];
        }
    }
    for (int col = n - 1; col >= 0; --col) {
        const double diag = a[col * n + col];
        for (int c = 0; c < rhs; ++c) {
            double s = b[col * rhs + c];
            for (int k = col + 1; k < n; ++k) s -= a[col * n + k] * b[k * rhs + c];
            b[col * rhs + c] = s / diag;
        }
    }
}

}  // namespace

double linear_probe_accuracy(const Dataset& data, double ridge) {
    if (data.size() == 0) throw std::invalid_argument("linear_probe_accuracy: empty dataset");
    const int d = data.input_shape.size() + 1;  // bias column
    const int k = data.target_size;
    std::vector<double> xtx(static_cast<std::size_t>(d) * d, 0.0);
    std::vector<double> xty(static_cast<std::size_t>(d) * k, 0.0);
    std::vector<double> x(d, 1.0);
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto in = data.input(s);
        std::copy(in.begin(), in.end(), x.begin());
        x[d - 1] = 1.0;
        const auto t = data.target(s);
        for (int i = 0; i < d; ++i) {
            for (int j = i; j < d; ++j) xtx[i * d + j] += x[i] * x[j];
            for (int c = 0; c < k; ++c) xty[i * k + c] += x[i] * t[c];
        }
    }
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) xtx[i * d + j] = xtx[j * d + i];
        xtx[i * d + i] += ridge;
    }
    solve_linear(xtx, xty, d, k);  // xty now holds the weight matrix
    std::size_t hits = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto in = data.input(s);
        std::copy(in.begin(), in.end(), x.begin());
        x[d - 1] = 1.0;
        int best = 0;
        double best_score = 0.0;
        for (int c = 0; c < k; ++c) {
            double score = 0.0;
            for (int i = 0; i < d; ++i) score += x[i] * xty[i * k + c];
            if (c == 0 || score > best_score) {
                best = c;
                best_score = score;
            }
        }
        const auto t = data.target(s);
        int truth = 0;
        if (k == 1) {
            truth = t[0] > 0.5 ? 1 : 0;
            best = best_score > 0.5 ? 1 : 0;
        } else {
            truth = static_cast<int>(std::max_element(t.begin(), t.end()) - t.begin());
        }
        if (best == truth) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace mgd
