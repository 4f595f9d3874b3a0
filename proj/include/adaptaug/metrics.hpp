#pragma once

#include <cstdint>
#include <string>

namespace adaptaug {

/// One line of the run's metrics stream. phase is "warmup", "train" or
/// "search"; the PPO fields are meaningful only for phase == "search".
struct MetricsRecord {
    int epoch = 0;
    std::string phase;
    double mean_infonce = 0.0;
    double lr = 0.0;
    std::int64_t policy_id = -1;  // newest policy (train) or policy being trained (search)
    int queue_len = 0;
    // phase == "search"
    int ppo_epoch = 0;
    double mean_reward = 0.0;
    double mean_entropy = 0.0;
    double surrogate_loss = 0.0;
};

}  // namespace adaptaug
