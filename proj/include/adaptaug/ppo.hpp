#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "adaptaug/augment.hpp"
#include "adaptaug/data.hpp"
#include "adaptaug/encoder.hpp"
#include "adaptaug/infonce.hpp"
#include "adaptaug/optim.hpp"
#include "adaptaug/policy.hpp"
#include "adaptaug/reward.hpp"
#include "adaptaug/rng.hpp"

namespace adaptaug {

struct PpoConfig {
    int ppo_epochs = 100;
    int samples_per_epoch = 128;
    int updates_per_epoch = 4;
    int update_batch = 16;
    double entropy_coef = 0.05;
    double clip = 0.2;
    double lr = 5e-5;
    int collection_batch = 32;  // images (and pairs) per reward evaluation
    bool warm_start = false;    // reuse the previous policy instead of re-initializing

    void validate() const {
        if (ppo_epochs < 1 || samples_per_epoch < 1 || updates_per_epoch < 1 ||
            update_batch < 1 || collection_batch < 1)
            throw std::invalid_argument("ppo: counts must be positive");
        if (samples_per_epoch % collection_batch != 0)
            throw std::invalid_argument("ppo: collection batch " +
                                        std::to_string(collection_batch) +
                                        " does not divide samples_per_epoch " +
                                        std::to_string(samples_per_epoch));
        if (updates_per_epoch * update_batch > samples_per_epoch)
            throw std::invalid_argument("ppo: updates_per_epoch * update_batch exceeds "
                                        "samples_per_epoch");
        if (!(clip > 0.0 && clip < 1.0))
            throw std::invalid_argument("ppo: clip must be in (0,1)");
        if (!(lr > 0.0)) throw std::invalid_argument("ppo: lr must be positive");
        if (entropy_coef < 0.0) throw std::invalid_argument("ppo: entropy_coef must be >= 0");
    }
};

/// One one-step episode: a sampled pair, its log probability under the
/// sampling policy, the (batch-shared) reward, and the normalized
/// advantage filled in before updates.
struct Trajectory {
    SubpolicyPair pair;
    double old_log_prob = 0.0;
    double reward = 0.0;
    double advantage = 0.0;
};

/// Scores one collection batch of sampled pairs with a single scalar
/// reward shared by every pair in the batch.
using BatchRewardFn = std::function<double(const std::vector<SubpolicyPair>&, Rng&)>;

inline std::vector<Trajectory> collect(const PolicyNet& policy, const BatchRewardFn& reward_fn,
                                       const PpoConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<Trajectory> trajs;
    trajs.reserve(cfg.samples_per_epoch);
    const int batches = cfg.samples_per_epoch / cfg.collection_batch;
    for (int b = 0; b < batches; ++b) {
        PolicyNet::SampleBatch sampled = policy.sample_pairs(cfg.collection_batch, rng);
        const double reward = reward_fn(sampled.pairs, rng);
        for (int i = 0; i < cfg.collection_batch; ++i) {
            Trajectory t;
            t.pair = std::move(sampled.pairs[i]);
            t.old_log_prob = sampled.log_probs[i];
            t.reward = reward;
            trajs.push_back(std::move(t));
        }
    }
    return trajs;
}

/// Contrastive reward for a batch of pairs: sample as many images as
/// pairs, build the two views, encode with the frozen encoder, and turn
/// the batch loss into one bounded reward. Never modifies the encoder.
inline BatchRewardFn make_infonce_reward(const Encoder& encoder, const Dataset& dataset,
                                         const EpochLossTracker& tracker,
                                         const RewardConfig& reward_cfg, double tau,
                                         const AugmentConfig& aug_cfg = {}) {
    if (dataset.size() == 0) throw std::invalid_argument("ppo: empty dataset");
    return [&encoder, &dataset, &tracker, reward_cfg, tau, aug_cfg](
               const std::vector<SubpolicyPair>& pairs, Rng& rng) -> double {
        const std::size_t bs = pairs.size();
        if (bs > dataset.size())
            throw std::invalid_argument("ppo: collection batch larger than dataset");
        // distinct images per batch (partial Fisher-Yates)
        std::vector<std::size_t> idx(dataset.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < bs; ++i)
            std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
        std::vector<Image> v1, v2;
        v1.reserve(bs);
        v2.reserve(bs);
        for (std::size_t i = 0; i < bs; ++i) {
            const Image& img = dataset.images[idx[i]];
            v1.push_back(apply_subpolicy(img, pairs[i].view1, rng, aug_cfg));
            v2.push_back(apply_subpolicy(img, pairs[i].view2, rng, aug_cfg));
        }
        Graph g;
        TensorPtr loss = info_nce(g, encoder.embed(g, v1), encoder.embed(g, v2), tau);
        return bounded_reward(loss->data[0], tracker.frozen_average(), reward_cfg);
    };
}

/// Spec-shaped collect: trajectories scored by the bounded contrastive
/// reward against a frozen encoder.
inline std::vector<Trajectory> collect(const PolicyNet& policy, const Encoder& encoder,
                                       const Dataset& dataset, const EpochLossTracker& tracker,
                                       const RewardConfig& reward_cfg, double tau,
                                       const PpoConfig& cfg, Rng& rng,
                                       const AugmentConfig& aug_cfg = {}) {
    if (!tracker.primed()) throw std::logic_error("ppo: tracker not primed before collect");
    return collect(policy, make_infonce_reward(encoder, dataset, tracker, reward_cfg, tau, aug_cfg),
                   cfg, rng);
}

/// advantage = (r - mean r) / (population std r + 1e-8)
inline void normalize_advantages(std::vector<Trajectory>& trajs) {
    if (trajs.size() < 2)
        throw std::invalid_argument("normalize_advantages: need at least 2 trajectories");
    double mean = 0.0;
    for (const auto& t : trajs) mean += t.reward;
    mean /= static_cast<double>(trajs.size());
    double var = 0.0;
    for (const auto& t : trajs) var += (t.reward - mean) * (t.reward - mean);
    var /= static_cast<double>(trajs.size());
    const double denom = std::sqrt(var) + 1e-8;
    for (auto& t : trajs) t.advantage = (t.reward - mean) / denom;
}

/// Clipped per-sample objective min(r*A, clip(r, 1-eps, 1+eps)*A); the
/// update maximizes its mean. Kept as a plain function so tests can pin
/// the arithmetic the graph path must reproduce.
inline double clipped_objective(double ratio, double advantage, double clip) {
    const double clipped = std::min(1.0 + clip, std::max(1.0 - clip, ratio));
    return std::min(ratio * advantage, clipped * advantage);
}

struct UpdateStats {
    double surrogate_loss = 0.0;  // -mean clipped objective, averaged over minibatches
    double mean_entropy = 0.0;
    double total_loss = 0.0;
};

/// One PPO epoch of policy updates: shuffle the trajectory pool once, take
/// updates_per_epoch minibatches of update_batch, and do one Adam step per
/// minibatch on -mean(surrogate) - entropy_coef * mean(entropy).
inline UpdateStats update(PolicyNet& policy, std::vector<Trajectory>& trajs,
                          const PpoConfig& cfg, AdamState& adam, Rng& rng) {
    cfg.validate();
    if (trajs.size() < static_cast<std::size_t>(cfg.updates_per_epoch * cfg.update_batch))
        throw std::invalid_argument("ppo update: not enough trajectories");

    std::vector<std::size_t> order(trajs.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i)
        std::swap(order[i], order[rng.uniform_index(i + 1)]);

    UpdateStats stats;
    for (int u = 0; u < cfg.updates_per_epoch; ++u) {
        std::vector<SubpolicyPair> pairs;
        std::vector<double> old_lp, adv;
        pairs.reserve(cfg.update_batch);
        for (int i = 0; i < cfg.update_batch; ++i) {
            const Trajectory& t = trajs[order[u * cfg.update_batch + i]];
            pairs.push_back(t.pair);
            old_lp.push_back(t.old_log_prob);
            adv.push_back(t.advantage);
        }
        Graph g;
        PolicyNet::Eval eval = policy.evaluate(g, pairs);
        TensorPtr old_c = make_tensor({cfg.update_batch, 1}, old_lp);
        TensorPtr adv_c = make_tensor({cfg.update_batch, 1}, adv);
        TensorPtr ratio = g.exp(g.sub(eval.log_prob, old_c));
        TensorPtr surr = g.minimum(g.mul(ratio, adv_c),
                                   g.mul(g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv_c));
        TensorPtr mean_surr = g.mean(surr);
        TensorPtr mean_ent = g.mean(eval.entropy);
        TensorPtr loss =
            g.sub(g.scale(mean_surr, -1.0), g.scale(mean_ent, cfg.entropy_coef));
        if (!std::isfinite(loss->data[0]))
            throw std::runtime_error("ppo update: non-finite loss (surrogate " +
                                     std::to_string(-mean_surr->data[0]) + ", entropy " +
                                     std::to_string(mean_ent->data[0]) + ")");
        g.backward(loss);
        adam.step();
        stats.surrogate_loss += -mean_surr->data[0];
        stats.mean_entropy += mean_ent->data[0];
        stats.total_loss += loss->data[0];
    }
    stats.surrogate_loss /= cfg.updates_per_epoch;
    stats.mean_entropy /= cfg.updates_per_epoch;
    stats.total_loss /= cfg.updates_per_epoch;
    return stats;
}

struct PpoEpochStats {
    int ppo_epoch = 0;
    double mean_reward = 0.0;
    double mean_entropy = 0.0;
    double surrogate_loss = 0.0;
};

/// Full policy search: a fresh policy network (or a warm-started copy)
/// trained for ppo_epochs rounds of collect / normalize / update against
/// the given reward, returned as a frozen snapshot.
inline PolicySnapshot search_policy_with_reward(const BatchRewardFn& reward_fn, PolicyMode mode,
                                                const PpoConfig& cfg,
                                                const PolicyNetConfig& net_cfg_in, Rng& rng,
                                                int created_epoch, std::uint64_t id,
                                                const std::function<void(const PpoEpochStats&)>&
                                                    on_epoch = nullptr,
                                                const PolicyNet* warm_from = nullptr) {
    cfg.validate();
    PolicyNetConfig net_cfg = net_cfg_in;
    net_cfg.mode = mode;
    Rng init_rng = rng.fork(rng_tag::policy_init);
    PolicyNet policy = (cfg.warm_start && warm_from && warm_from->mode() == mode)
                           ? warm_from->clone()
                           : PolicyNet(net_cfg, init_rng);
    AdamState adam(policy.params(), cfg.lr);
    Rng collect_rng = rng.fork(rng_tag::ppo, 1);
    Rng update_rng = rng.fork(rng_tag::ppo, 2);
    for (int e = 1; e <= cfg.ppo_epochs; ++e) {
        std::vector<Trajectory> trajs = collect(policy, reward_fn, cfg, collect_rng);
        double mean_reward = 0.0;
        for (const auto& t : trajs) mean_reward += t.reward;
        mean_reward /= static_cast<double>(trajs.size());
        normalize_advantages(trajs);
        UpdateStats us = update(policy, trajs, cfg, adam, update_rng);
        if (on_epoch) on_epoch({e, mean_reward, us.mean_entropy, us.surrogate_loss});
    }
    return policy.snapshot(created_epoch, id);
}

inline PolicySnapshot search_policy(const Encoder& encoder, const Dataset& dataset,
                                    const EpochLossTracker& tracker, PolicyMode mode,
                                    const PpoConfig& cfg, const PolicyNetConfig& net_cfg,
                                    const RewardConfig& reward_cfg, double tau, Rng& rng,
                                    int created_epoch, std::uint64_t id,
                                    const std::function<void(const PpoEpochStats&)>& on_epoch =
                                        nullptr,
                                    const AugmentConfig& aug_cfg = {},
                                    const PolicyNet* warm_from = nullptr) {
    if (!tracker.primed())
        throw std::logic_error("ppo: tracker not primed (encoder not past warmup?)");
    return search_policy_with_reward(
        make_infonce_reward(encoder, dataset, tracker, reward_cfg, tau, aug_cfg), mode, cfg,
        net_cfg, rng, created_epoch, id, on_epoch, warm_from);
}

}  // namespace adaptaug
