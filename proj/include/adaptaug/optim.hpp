#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "adaptaug/tensor.hpp"

namespace adaptaug {

/// Adam state over a fixed parameter list. Moment accumulators mirror the
/// parameter shapes; the step counter advances by one per update.
class AdamState {
public:
    AdamState(std::vector<TensorPtr> params, double lr, double beta1 = 0.9,
              double beta2 = 0.999, double epsilon = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        for (const auto& p : params_) {
            m_.emplace_back(p->numel(), 0.0);
            v_.emplace_back(p->numel(), 0.0);
        }
    }

    /// One Adam update over all parameters; requires grads to be populated
    /// (allocated), and zeroes them afterwards.
    void step() {
        for (const auto& p : params_)
            if (p->grad.empty())
                throw std::runtime_error("adam_step: parameter '" + p->name +
                                         "' has no gradient");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor& p = *params_[k];
            for (std::size_t i = 0; i < p.numel(); ++i) {
                const double g = p.grad[i];
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
                const double mhat = m_[k][i] / bc1;
                const double vhat = v_[k][i] / bc2;
                p.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
            p.zero_grad();
        }
    }

    long long step_count() const { return t_; }
    double lr() const { return lr_; }

private:
    std::vector<TensorPtr> params_;
    double lr_, beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// SGD with momentum and decoupled-from-nothing weight decay (classic
/// L2-into-gradient form). Learning rate is supplied per step so a
/// schedule can drive it.
class SgdMomentum {
public:
    SgdMomentum(std::vector<TensorPtr> params, double momentum, double weight_decay)
        : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
        for (const auto& p : params_) vel_.emplace_back(p->numel(), 0.0);
    }

    void step(double lr) {
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor& p = *params_[k];
            if (p.grad.empty()) p.ensure_grad();
            for (std::size_t i = 0; i < p.numel(); ++i) {
                const double g = p.grad[i] + weight_decay_ * p.data[i];
                vel_[k][i] = momentum_ * vel_[k][i] + g;
                p.data[i] -= lr * vel_[k][i];
            }
            p.zero_grad();
        }
    }

private:
    std::vector<TensorPtr> params_;
    double momentum_, weight_decay_;
    std::vector<std::vector<double>> vel_;
};

/// Cosine annealing with a linear warmup, evaluated per epoch. Epochs are
/// 1-based; lr ramps linearly over the first `warmup` epochs and then
/// follows a half cosine down to (nearly) zero at `total`.
inline double cosine_lr(double base, int epoch, int warmup, int total) {
    if (warmup > 0 && epoch <= warmup) return base * static_cast<double>(epoch) / warmup;
    if (total <= warmup) return base;
    const double progress =
        static_cast<double>(epoch - warmup) / static_cast<double>(total - warmup);
    return 0.5 * base * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace adaptaug
