#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <vector>

#include "adaptaug/policy.hpp"
#include "adaptaug/rng.hpp"

namespace adaptaug {

struct QueueConfig {
    int capacity = 5;       // Q
    double base_prob = 0.5;  // p

    void validate() const {
        if (capacity < 1) throw std::invalid_argument("queue: capacity must be >= 1");
        if (!(base_prob > 0.0 && base_prob < 1.0))
            throw std::invalid_argument("queue: base_prob must be in (0,1)");
    }
};

/// The Q most recent policy snapshots, most recent first, sampled with
/// truncated-geometric probabilities p_i = p(1-p)^(i-1) / (1 - (1-p)^n).
class PolicyQueue {
public:
    explicit PolicyQueue(QueueConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    void push(PolicySnapshot snap) {
        snaps_.push_front(std::move(snap));
        if (static_cast<int>(snaps_.size()) > cfg_.capacity) snaps_.pop_back();
    }

    std::size_t size() const { return snaps_.size(); }
    bool empty() const { return snaps_.empty(); }
    const QueueConfig& config() const { return cfg_; }

    /// Snapshot at recency rank i (0 = most recent).
    const PolicySnapshot& at(std::size_t i) const { return snaps_.at(i); }
    const PolicySnapshot& newest() const { return snaps_.at(0); }

    /// Probabilities over the current snapshots, most recent first.
    std::vector<double> sampling_distribution() const {
        if (snaps_.empty()) throw std::logic_error("queue: distribution over empty queue");
        const std::size_t n = snaps_.size();
        const double p = cfg_.base_prob;
        const double norm = 1.0 - std::pow(1.0 - p, static_cast<double>(n));
        std::vector<double> probs(n);
        for (std::size_t i = 0; i < n; ++i)
            probs[i] = p * std::pow(1.0 - p, static_cast<double>(i)) / norm;
        return probs;
    }

    const PolicySnapshot& sample(Rng& rng) const {
        if (snaps_.empty()) throw std::logic_error("queue: sample from empty queue");
        const std::vector<double> probs = sampling_distribution();
        const double u = rng.uniform();
        double cum = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            cum += probs[i];
            if (u < cum) return snaps_[i];
        }
        return snaps_.back();
    }

private:
    QueueConfig cfg_;
    std::deque<PolicySnapshot> snaps_;
};

}  // namespace adaptaug
