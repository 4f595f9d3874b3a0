#pragma once

#include <stdexcept>
#include <string>

namespace adaptaug {

/// Threshold/tolerance of the bounded contrastive reward.
struct RewardConfig {
    double th = 1.3;
    double b = 0.2;

    void validate() const {
        if (!(th > 1.0)) throw std::invalid_argument("reward: th must be > 1");
        if (!(b > 0.0)) throw std::invalid_argument("reward: b must be > 0");
    }
};

/// Bounded contrastive reward. The batch loss is normalized by the
/// previous epoch's average; below the threshold the normalized loss is
/// the reward, above it the reward falls linearly with slope -th/b,
/// crossing zero at th + b. Continuous at the threshold.
inline double bounded_reward(double loss, double avg, const RewardConfig& cfg) {
    cfg.validate();
    if (!(avg > 0.0))
        throw std::invalid_argument("bounded_reward: normalizer " + std::to_string(avg) +
                                    " not positive (tracker not yet primed?)");
    const double normalized = loss / avg;
    if (normalized < cfg.th) return normalized;
    return -(cfg.th / cfg.b) * (normalized - (cfg.th + cfg.b));
}

/// Accumulates per-batch losses for the current epoch and freezes their
/// mean as the normalizer at rollover.
class EpochLossTracker {
public:
    void record(double batch_loss) {
        sum_ += batch_loss;
        ++count_;
    }

    void rollover() {
        if (count_ == 0)
            throw std::logic_error("tracker rollover with no recorded batches");
        frozen_avg_ = sum_ / static_cast<double>(count_);
        sum_ = 0.0;
        count_ = 0;
    }

    bool primed() const { return frozen_avg_ > 0.0; }

    double frozen_average() const {
        if (!primed()) throw std::logic_error("tracker not primed: no epoch completed yet");
        return frozen_avg_;
    }

    std::size_t batches_recorded() const { return count_; }

private:
    double sum_ = 0.0;
    std::size_t count_ = 0;
    double frozen_avg_ = 0.0;
};

}  // namespace adaptaug
