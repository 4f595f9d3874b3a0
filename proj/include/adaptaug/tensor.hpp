#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/rng.hpp"

namespace adaptaug {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

/// Dense row-major float64 tensor. `grad` is empty until something asks
/// for it; once allocated it always matches `data` in length.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    std::string name;  // nonempty only for named parameters

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const {
        if (shape.size() < 2) return shape.empty() ? 1 : shape[0];
        int c = 1;
        for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
        return c;
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }
    /// Gradient entry, treating an unallocated grad as all zeros.
    double grad_or_zero(std::size_t i) const { return grad.empty() ? 0.0 : grad[i]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (double& x : data) x = rng.uniform(lo, hi);
    }
    void fill_normal(Rng& rng, double stddev) {
        for (double& x : data) x = stddev * rng.normal();
    }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr make_tensor(Shape s) { return std::make_shared<Tensor>(std::move(s)); }
inline TensorPtr make_tensor(Shape s, std::vector<double> v) {
    return std::make_shared<Tensor>(std::move(s), std::move(v));
}
inline TensorPtr make_scalar(double v) { return make_tensor({1}, {v}); }

inline TensorPtr make_param(std::string name, Shape s) {
    auto t = make_tensor(std::move(s));
    t->name = std::move(name);
    return t;
}

}  // namespace adaptaug
