#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/image.hpp"
#include "adaptaug/rng.hpp"

namespace adaptaug {

struct Dataset {
    std::vector<Image> images;
    std::vector<int> labels;  // empty when unlabeled
    std::string name;
    std::string split;

    std::size_t size() const { return images.size(); }
    bool labeled() const { return !labels.empty(); }
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: per record 1 label byte + 3072 image bytes
// (channel-planar R, G, B planes of a 32x32 image).
// ---------------------------------------------------------------------------

namespace data_detail {

inline constexpr std::size_t kCifarRecord = 3073;

inline void parse_cifar_file(const std::string& path, Dataset& out) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw std::runtime_error("cifar10: cannot open '" + path + "'");
    const std::streamoff bytes = is.tellg();
    if (bytes % static_cast<std::streamoff>(kCifarRecord) != 0)
        throw std::runtime_error(
            "cifar10: '" + path + "' truncated or malformed: " + std::to_string(bytes) +
            " bytes is not a multiple of the 3073-byte record (offset of partial record: " +
            std::to_string(bytes - bytes % static_cast<std::streamoff>(kCifarRecord)) + ")");
    is.seekg(0);
    std::vector<std::uint8_t> record(kCifarRecord);
    const std::size_t n = static_cast<std::size_t>(bytes) / kCifarRecord;
    for (std::size_t r = 0; r < n; ++r) {
        is.read(reinterpret_cast<char*>(record.data()), kCifarRecord);
        if (!is)
            throw std::runtime_error("cifar10: read failed in '" + path + "' at byte offset " +
                                     std::to_string(r * kCifarRecord));
        const int label = record[0];
        if (label > 9)
            throw std::runtime_error("cifar10: label " + std::to_string(label) +
                                     " out of range at record " + std::to_string(r) + " of '" +
                                     path + "'");
        Image img(32, 32);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x)
                    img.at(x, y, c) = record[1 + static_cast<std::size_t>(c) * 1024 + y * 32 + x];
        out.images.push_back(std::move(img));
        out.labels.push_back(label);
    }
}

}  // namespace data_detail

/// Load the standard CIFAR-10 binary files from `dir`. split == "train"
/// reads data_batch_1..5.bin (whichever exist), split == "test" reads
/// test_batch.bin. `fraction` < 1 keeps a seeded random subset of
/// floor(fraction * n) records.
inline Dataset load_cifar10(const std::string& dir, const std::string& split,
                            double fraction = 1.0, std::uint64_t seed = 0) {
    namespace fs = std::filesystem;
    Dataset ds;
    ds.name = "cifar10";
    ds.split = split;
    std::vector<std::string> files;
    if (split == "train") {
        for (int i = 1; i <= 5; ++i) {
            const std::string p = dir + "/data_batch_" + std::to_string(i) + ".bin";
            if (fs::exists(p)) files.push_back(p);
        }
    } else if (split == "test") {
        const std::string p = dir + "/test_batch.bin";
        if (fs::exists(p)) files.push_back(p);
    } else {
        throw std::invalid_argument("cifar10: unknown split '" + split + "'");
    }
    if (files.empty())
        throw std::runtime_error("cifar10: no batch files for split '" + split + "' under '" +
                                 dir + "'");
    for (const auto& f : files) data_detail::parse_cifar_file(f, ds);

    if (fraction < 1.0) {
        const std::size_t keep = static_cast<std::size_t>(fraction * ds.size());
        std::vector<std::size_t> idx(ds.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(seed);
        rng = rng.fork(rng_tag::data_order);
        for (std::size_t i = idx.size() - 1; i > 0; --i)
            std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        Dataset sub;
        sub.name = ds.name;
        sub.split = ds.split;
        for (std::size_t i : idx) {
            sub.images.push_back(std::move(ds.images[i]));
            sub.labels.push_back(ds.labels[i]);
        }
        return sub;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// synthetic shapes: 32x32 RGB images of a colored shape on a colored
// background; the class is the shape kind. Deterministic given (n, seed).
// ---------------------------------------------------------------------------

namespace data_detail {

inline constexpr int kMaxShapeClasses = 6;

inline void draw_shape(Image& img, int cls, int cx, int cy, int half, std::uint8_t r,
                       std::uint8_t g, std::uint8_t b) {
    auto put = [&](int x, int y) {
        if (x >= 0 && x < img.width && y >= 0 && y < img.height) {
            img.at(x, y, 0) = r;
            img.at(x, y, 1) = g;
            img.at(x, y, 2) = b;
        }
    };
    // Ordered so that low class indices are maximally distinct in gross
    // statistics (ink fraction, edge orientation); small-class datasets
    // stay comfortably linearly separable.
    switch (cls) {
        case 0:  // filled circle
            for (int y = cy - half; y <= cy + half; ++y)
                for (int x = cx - half; x <= cx + half; ++x)
                    if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= half * half) put(x, y);
            break;
        case 1:  // thin diagonal cross
            for (int d = -half; d <= half; ++d)
                for (int t = -1; t <= 1; ++t) {
                    put(cx + d, cy + d + t);
                    put(cx + d, cy - d + t);
                }
            break;
        case 2:  // filled square
            for (int y = cy - half; y <= cy + half; ++y)
                for (int x = cx - half; x <= cx + half; ++x) put(x, y);
            break;
        case 3:  // ring
            for (int y = cy - half; y <= cy + half; ++y)
                for (int x = cx - half; x <= cx + half; ++x) {
                    const int d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                    if (d2 <= half * half && d2 >= (half / 2) * (half / 2)) put(x, y);
                }
            break;
        case 4:  // upward triangle
            for (int dy = 0; dy <= 2 * half; ++dy) {
                const int y = cy - half + dy;
                const int span = dy / 2;
                for (int x = cx - span; x <= cx + span; ++x) put(x, y);
            }
            break;
        case 5:  // plus sign
            for (int d = -half; d <= half; ++d)
                for (int t = -half / 3; t <= half / 3; ++t) {
                    put(cx + d, cy + t);
                    put(cx + t, cy + d);
                }
            break;
        default: throw std::invalid_argument("synth_shapes: unsupported class");
    }
}

}  // namespace data_detail

inline Dataset synth_shapes(int n, int classes, std::uint64_t seed) {
    if (classes < 1 || classes > data_detail::kMaxShapeClasses)
        throw std::invalid_argument("synth_shapes: classes must be in [1," +
                                    std::to_string(data_detail::kMaxShapeClasses) + "]");
    if (n < classes) throw std::invalid_argument("synth_shapes: need n >= classes");
    Dataset ds;
    ds.name = "synth";
    ds.split = "train";
    Rng rng = Rng(seed).fork(rng_tag::synth);
    for (int i = 0; i < n; ++i) {
        const int cls = i % classes;  // balanced within +-1 by construction
        // muted background, bright shape
        const std::uint8_t bg_r = static_cast<std::uint8_t>(40 + rng.uniform_index(60));
        const std::uint8_t bg_g = static_cast<std::uint8_t>(40 + rng.uniform_index(60));
        const std::uint8_t bg_b = static_cast<std::uint8_t>(40 + rng.uniform_index(60));
        Image img(32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                img.at(x, y, 0) = bg_r;
                img.at(x, y, 1) = bg_g;
                img.at(x, y, 2) = bg_b;
            }
        const int half = 5 + static_cast<int>(rng.uniform_index(5));       // 5..9
        const int cx = half + 2 + static_cast<int>(rng.uniform_index(32 - 2 * (half + 2)));
        const int cy = half + 2 + static_cast<int>(rng.uniform_index(32 - 2 * (half + 2)));
        const std::uint8_t r = static_cast<std::uint8_t>(150 + rng.uniform_index(106));
        const std::uint8_t g = static_cast<std::uint8_t>(150 + rng.uniform_index(106));
        const std::uint8_t b = static_cast<std::uint8_t>(150 + rng.uniform_index(106));
        data_detail::draw_shape(img, cls, cx, cy, half, r, g, b);
        ds.images.push_back(std::move(img));
        ds.labels.push_back(cls);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

/// Seeded epoch batching: a permutation (or index order) chopped into
/// full batches; the final short batch is dropped.
inline std::vector<std::vector<std::size_t>> batches(const Dataset& ds, int batch_size,
                                                     std::uint64_t seed, bool shuffle = true) {
    if (batch_size <= 0 || static_cast<std::size_t>(batch_size) > ds.size())
        throw std::invalid_argument("batches: batch size " + std::to_string(batch_size) +
                                    " invalid for dataset of " + std::to_string(ds.size()));
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        Rng rng = Rng(seed).fork(rng_tag::data_order);
        for (std::size_t i = order.size() - 1; i > 0; --i)
            std::swap(order[i], order[rng.uniform_index(i + 1)]);
    }
    std::vector<std::vector<std::size_t>> out;
    const std::size_t nb = ds.size() / static_cast<std::size_t>(batch_size);
    out.reserve(nb);
    for (std::size_t b = 0; b < nb; ++b)
        out.emplace_back(order.begin() + b * batch_size, order.begin() + (b + 1) * batch_size);
    return out;
}

}  // namespace adaptaug
