#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/image.hpp"
#include "adaptaug/rng.hpp"

namespace adaptaug {

// The discrete augmentation search space: 16 operations, each with a
// magnitude range discretized into 11 uniform bins (0..10).

enum class OpKind : int {
    ShearX = 0,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    Cutout,
    Identity,
};

inline constexpr int kNumOps = 16;
inline constexpr int kNumMagnitudeBins = 11;
inline constexpr double kApplyProb = 0.8;

struct OpInfo {
    const char* name;
    double min_mag;
    double max_mag;
    bool has_magnitude;
    bool symmetric_range;  // candidates for sign randomization
};

inline const std::array<OpInfo, kNumOps>& op_table() {
    static const std::array<OpInfo, kNumOps> table = {{
        {"ShearX", -0.3, 0.3, true, true},
        {"ShearY", -0.3, 0.3, true, true},
        {"TranslateX", -0.45, 0.45, true, true},
        {"TranslateY", -0.45, 0.45, true, true},
        {"Rotate", -30.0, 30.0, true, true},
        {"AutoContrast", 0.0, 0.0, false, false},
        {"Invert", 0.0, 0.0, false, false},
        {"Equalize", 0.0, 0.0, false, false},
        {"Solarize", 0.0, 256.0, true, false},
        {"Posterize", 4.0, 8.0, true, false},
        {"Contrast", 0.1, 1.9, true, false},
        {"Color", 0.1, 1.9, true, false},
        {"Brightness", 0.1, 1.9, true, false},
        {"Sharpness", 0.1, 1.9, true, false},
        {"Cutout", 0.0, 0.2, true, false},
        {"Identity", 0.0, 0.0, false, false},
    }};
    return table;
}

inline const OpInfo& op_info(OpKind op) { return op_table()[static_cast<int>(op)]; }
inline const char* op_name(OpKind op) { return op_info(op).name; }

inline OpKind op_from_name(const std::string& name) {
    for (int i = 0; i < kNumOps; ++i)
        if (name == op_table()[i].name) return static_cast<OpKind>(i);
    throw std::invalid_argument("unknown augmentation op '" + name + "'");
}

/// Magnitude for a bin under the direct range mapping
/// min + bin * (max - min) / 10. Magnitude-free ops return 0.
inline double magnitude_value(OpKind op, int bin) {
    if (bin < 0 || bin >= kNumMagnitudeBins)
        throw std::invalid_argument("magnitude bin " + std::to_string(bin) +
                                    " out of range [0,10] for " + op_name(op));
    const OpInfo& info = op_info(op);
    if (!info.has_magnitude) return 0.0;
    return info.min_mag + bin * (info.max_mag - info.min_mag) / 10.0;
}

struct TransformStep {
    OpKind op = OpKind::Identity;
    int magnitude_bin = 0;
    double apply_prob = kApplyProb;
};

/// N_tau steps applied in order, each gated by its own Bernoulli(apply_prob).
using Subpolicy = std::vector<TransformStep>;

struct SubpolicyPair {
    Subpolicy view1;
    Subpolicy view2;
};

struct AugmentConfig {
    /// false (default): bins of symmetric-range ops map to [0, max] and the
    /// sign is drawn uniformly at application time. true: bins map directly
    /// over [min, max] per the table.
    bool signed_bins = false;
};

// ---------------------------------------------------------------------------
// individual operations (always applied; gating lives in apply_transform)
// ---------------------------------------------------------------------------

namespace aug_detail {

inline std::uint8_t clamp_u8(double v) {
    const long r = std::lround(v);
    return static_cast<std::uint8_t>(std::min(255L, std::max(0L, r)));
}

inline int luma(int r, int g, int b) { return (r * 299 + g * 587 + b * 114) / 1000; }

/// Inverse-affine resample: for each destination pixel, src = M * (x, y, 1);
/// nearest neighbor with gray fill outside the source.
inline Image affine(const Image& img, double a, double b, double c, double d, double e,
                    double f) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double sx = a * x + b * y + c;
            const double sy = d * x + e * y + f;
            const int ix = static_cast<int>(std::lround(sx));
            const int iy = static_cast<int>(std::lround(sy));
            for (int ch = 0; ch < 3; ++ch)
                out.at(x, y, ch) = (ix >= 0 && ix < img.width && iy >= 0 && iy < img.height)
                                       ? img.at(ix, iy, ch)
                                       : 128;
        }
    return out;
}

inline Image shear_x(const Image& img, double m) { return affine(img, 1, m, 0, 0, 1, 0); }
inline Image shear_y(const Image& img, double m) { return affine(img, 1, 0, 0, m, 1, 0); }

inline Image translate_x(const Image& img, double frac) {
    const int t = static_cast<int>(std::lround(frac * img.width));
    return affine(img, 1, 0, t, 0, 1, 0);
}
inline Image translate_y(const Image& img, double frac) {
    const int t = static_cast<int>(std::lround(frac * img.height));
    return affine(img, 1, 0, 0, 0, 1, t);
}

inline Image rotate(const Image& img, double degrees) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = 0.5 * (img.width - 1), cy = 0.5 * (img.height - 1);
    return affine(img, cs, sn, cx - cs * cx - sn * cy, -sn, cs, cy + sn * cx - cs * cy);
}

inline Image invert(const Image& img) {
    Image out = img;
    for (auto& p : out.pixels) p = static_cast<std::uint8_t>(255 - p);
    return out;
}

inline Image solarize(const Image& img, double threshold) {
    Image out = img;
    for (auto& p : out.pixels)
        if (p >= threshold) p = static_cast<std::uint8_t>(255 - p);
    return out;
}

inline Image posterize(const Image& img, double magnitude) {
    int bits = static_cast<int>(std::lround(magnitude));
    bits = std::min(8, std::max(4, bits));
    const std::uint8_t mask = static_cast<std::uint8_t>(0xFF << (8 - bits));
    Image out = img;
    for (auto& p : out.pixels) p = static_cast<std::uint8_t>(p & mask);
    return out;
}

inline Image auto_contrast(const Image& img) {
    Image out = img;
    for (int ch = 0; ch < 3; ++ch) {
        int lo = 255, hi = 0;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const int v = img.at(x, y, ch);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        if (hi <= lo) continue;
        const double scale = 255.0 / (hi - lo);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(x, y, ch) = clamp_u8((img.at(x, y, ch) - lo) * scale);
    }
    return out;
}

/// Per-channel histogram equalization, integer LUT construction matching
/// the classic PIL algorithm.
inline Image equalize(const Image& img) {
    Image out = img;
    for (int ch = 0; ch < 3; ++ch) {
        std::array<long long, 256> h{};
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) ++h[img.at(x, y, ch)];
        long long total = 0;
        int last_nonzero = -1;
        for (int v = 0; v < 256; ++v)
            if (h[v]) {
                total += h[v];
                last_nonzero = v;
            }
        if (last_nonzero < 0) continue;
        const long long step = (total - h[last_nonzero]) / 255;
        if (step == 0) continue;
        std::array<std::uint8_t, 256> lut{};
        long long n = step / 2;
        for (int v = 0; v < 256; ++v) {
            lut[v] = static_cast<std::uint8_t>(std::min<long long>(255, n / step));
            n += h[v];
        }
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(x, y, ch) = lut[img.at(x, y, ch)];
    }
    return out;
}

/// factor 0 -> solid gray at the image's mean luminance, 1 -> original.
inline Image contrast(const Image& img, double factor) {
    long long sum = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            sum += luma(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
    const double mean =
        std::floor(static_cast<double>(sum) / (static_cast<double>(img.width) * img.height) + 0.5);
    Image out = img;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = clamp_u8(mean + factor * (img.pixels[i] - mean));
    return out;
}

/// factor 0 -> grayscale, 1 -> original.
inline Image color(const Image& img, double factor) {
    Image out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const int g = luma(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
            for (int ch = 0; ch < 3; ++ch)
                out.at(x, y, ch) = clamp_u8(g + factor * (img.at(x, y, ch) - g));
        }
    return out;
}

/// factor 0 -> black, 1 -> original.
inline Image brightness(const Image& img, double factor) {
    Image out = img;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = clamp_u8(factor * img.pixels[i]);
    return out;
}

/// factor 0 -> smoothed, 1 -> original. Smoothing kernel is the 3x3
/// [1 1 1; 1 5 1; 1 1 1]/13 filter applied to interior pixels only.
inline Image sharpness(const Image& img, double factor) {
    Image out = img;
    if (img.width < 3 || img.height < 3) return out;
    for (int y = 1; y < img.height - 1; ++y)
        for (int x = 1; x < img.width - 1; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                int acc = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        acc += img.at(x + dx, y + dy, ch) * ((dx == 0 && dy == 0) ? 5 : 1);
                const double smooth = static_cast<double>(acc) / 13.0;
                out.at(x, y, ch) = clamp_u8(smooth + factor * (img.at(x, y, ch) - smooth));
            }
    return out;
}

/// Gray square of side round(frac * min(w,h)), placed uniformly so it lies
/// fully inside the image.
inline Image cutout(const Image& img, double frac, Rng& rng) {
    const int side = static_cast<int>(std::lround(frac * std::min(img.width, img.height)));
    if (side <= 0) return img;
    const int x0 = static_cast<int>(rng.uniform_index(img.width - side + 1));
    const int y0 = static_cast<int>(rng.uniform_index(img.height - side + 1));
    Image out = img;
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x)
            for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = 128;
    return out;
}

}  // namespace aug_detail

/// Apply `op` at real magnitude `mag` unconditionally. `rng` is consumed by
/// operations with internal randomness (Cutout placement).
inline Image apply_operation(const Image& img, OpKind op, double mag, Rng& rng) {
    if (!img.valid()) throw std::invalid_argument("apply_operation: invalid image");
    using namespace aug_detail;
    switch (op) {
        case OpKind::ShearX: return shear_x(img, mag);
        case OpKind::ShearY: return shear_y(img, mag);
        case OpKind::TranslateX: return translate_x(img, mag);
        case OpKind::TranslateY: return translate_y(img, mag);
        case OpKind::Rotate: return rotate(img, mag);
        case OpKind::AutoContrast: return auto_contrast(img);
        case OpKind::Invert: return invert(img);
        case OpKind::Equalize: return equalize(img);
        case OpKind::Solarize: return solarize(img, mag);
        case OpKind::Posterize: return posterize(img, mag);
        case OpKind::Contrast: return contrast(img, mag);
        case OpKind::Color: return color(img, mag);
        case OpKind::Brightness: return brightness(img, mag);
        case OpKind::Sharpness: return sharpness(img, mag);
        case OpKind::Cutout: return cutout(img, mag, rng);
        case OpKind::Identity: return img;
    }
    throw std::invalid_argument("apply_operation: unknown op");
}

/// One gated step: with probability step.apply_prob applies the op at its
/// bin's magnitude, otherwise returns the image unchanged. Under the
/// default config, symmetric-range ops map bins to [0, max] and draw the
/// sign uniformly.
inline Image apply_transform(const Image& img, const TransformStep& step, Rng& rng,
                             const AugmentConfig& cfg = {}) {
    if (step.magnitude_bin < 0 || step.magnitude_bin >= kNumMagnitudeBins)
        throw std::invalid_argument("apply_transform: magnitude bin out of range");
    if (!rng.bernoulli(step.apply_prob)) return img;
    const OpInfo& info = op_info(step.op);
    double mag = 0.0;
    if (info.has_magnitude) {
        if (!cfg.signed_bins && info.symmetric_range) {
            mag = info.max_mag * step.magnitude_bin / 10.0;
            if (rng.bernoulli(0.5)) mag = -mag;
        } else {
            mag = magnitude_value(step.op, step.magnitude_bin);
        }
    }
    return apply_operation(img, step.op, mag, rng);
}

inline Image apply_subpolicy(const Image& img, const Subpolicy& sp, Rng& rng,
                             const AugmentConfig& cfg = {}) {
    Image out = img;
    for (const TransformStep& step : sp) out = apply_transform(out, step, rng, cfg);
    return out;
}

inline Subpolicy random_subpolicy(Rng& rng, int n_tau = 2) {
    Subpolicy sp;
    sp.reserve(n_tau);
    for (int i = 0; i < n_tau; ++i) {
        TransformStep step;
        step.op = static_cast<OpKind>(rng.uniform_index(kNumOps));
        step.magnitude_bin = static_cast<int>(rng.uniform_index(kNumMagnitudeBins));
        sp.push_back(step);
    }
    return sp;
}

// ---------------------------------------------------------------------------
// text form: "op:bin:prob;op:bin:prob | op:bin:prob;op:bin:prob"
// ---------------------------------------------------------------------------

inline std::string to_string(const Subpolicy& sp) {
    std::ostringstream os;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        if (i) os << ";";
        os << op_name(sp[i].op) << ":" << sp[i].magnitude_bin << ":" << sp[i].apply_prob;
    }
    return os.str();
}

inline std::string to_string(const SubpolicyPair& pair) {
    return to_string(pair.view1) + " | " + to_string(pair.view2);
}

inline Subpolicy parse_subpolicy(const std::string& text) {
    Subpolicy sp;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
        const auto p1 = item.find(':');
        const auto p2 = item.find(':', p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw std::invalid_argument("bad subpolicy step '" + item + "'");
        TransformStep step;
        step.op = op_from_name(item.substr(0, p1));
        step.magnitude_bin = std::stoi(item.substr(p1 + 1, p2 - p1 - 1));
        step.apply_prob = std::stod(item.substr(p2 + 1));
        if (step.magnitude_bin < 0 || step.magnitude_bin >= kNumMagnitudeBins)
            throw std::invalid_argument("bad magnitude bin in '" + item + "'");
        sp.push_back(step);
    }
    return sp;
}

inline SubpolicyPair parse_subpolicy_pair(const std::string& text) {
    const auto sep = text.find(" | ");
    if (sep == std::string::npos)
        throw std::invalid_argument("subpolicy pair missing ' | ' separator");
    return {parse_subpolicy(text.substr(0, sep)), parse_subpolicy(text.substr(sep + 3))};
}

}  // namespace adaptaug
