#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "adaptaug/augment.hpp"
#include "adaptaug/data.hpp"
#include "adaptaug/encoder.hpp"
#include "adaptaug/infonce.hpp"
#include "adaptaug/metrics.hpp"
#include "adaptaug/optim.hpp"
#include "adaptaug/policy_queue.hpp"
#include "adaptaug/ppo.hpp"
#include "adaptaug/reward.hpp"

namespace adaptaug {

struct ContrastiveConfig {
    double temperature = 0.5;
    int batch = 64;
    int epochs = 60;
    int warmup_epochs = 20;  // epochs trained with random subpolicies
    int k = 5;               // policy search every k-th epoch past warmup
    double lr = -1.0;        // <= 0 means the 0.03 * batch / 256 rule
    int lr_warmup_epochs = 10;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    EncoderConfig encoder;

    double base_lr() const { return lr > 0.0 ? lr : 0.03 * batch / 256.0; }

    void validate() const {
        if (!(temperature > 0.0))
            throw std::invalid_argument("contrastive: temperature must be positive");
        if (warmup_epochs < 1) throw std::invalid_argument("contrastive: warmup_epochs >= 1");
        if (k < 1) throw std::invalid_argument("contrastive: k >= 1");
        if (batch < 2) throw std::invalid_argument("contrastive: batch >= 2");
        if (epochs < 1) throw std::invalid_argument("contrastive: epochs >= 1");
        encoder.validate();
    }
};

enum class RunMode { CoViews, IndepViews, Random };

inline const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::CoViews: return "coviews";
        case RunMode::IndepViews: return "indepviews";
        case RunMode::Random: return "random";
    }
    return "?";
}
inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "coviews") return RunMode::CoViews;
    if (s == "indepviews") return RunMode::IndepViews;
    if (s == "random") return RunMode::Random;
    throw std::invalid_argument("unknown mode '" + s + "' (coviews|indepviews|random)");
}

enum class PolicySource { Random, Queue };

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr = 0.0;
    int batches = 0;
};

/// One contrastive epoch: per image, obtain a subpolicy pair (two
/// independent random subpolicies, or a queue-sampled policy's pair),
/// build both views, and take one SGD step on the batch InfoNCE. Every
/// batch loss goes into the tracker, which rolls over at epoch end.
inline EpochStats train_epoch(Encoder& encoder, const Dataset& dataset, PolicySource source,
                              const PolicyQueue* queue, EpochLossTracker& tracker,
                              const ContrastiveConfig& cfg, SgdMomentum& sgd, int epoch,
                              Rng& epoch_rng, const AugmentConfig& aug_cfg = {}) {
    cfg.validate();
    if (dataset.size() == 0) throw std::invalid_argument("train_epoch: empty dataset");
    if (source == PolicySource::Queue && (queue == nullptr || queue->empty()))
        throw std::logic_error("train_epoch: queue source with no policies");

    const double lr = cosine_lr(cfg.base_lr(), epoch, cfg.lr_warmup_epochs, cfg.epochs);
    Rng order_rng = epoch_rng.fork(rng_tag::data_order);
    Rng aug_rng = epoch_rng.fork(rng_tag::augment);
    Rng queue_rng = epoch_rng.fork(rng_tag::queue);

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    double total = 0.0;
    for (const auto& batch_idx : batches(dataset, cfg.batch, order_rng.next_u64())) {
        std::vector<Image> v1, v2;
        v1.reserve(batch_idx.size());
        v2.reserve(batch_idx.size());
        for (std::size_t i : batch_idx) {
            SubpolicyPair pair;
            if (source == PolicySource::Random) {
                pair.view1 = random_subpolicy(aug_rng);
                pair.view2 = random_subpolicy(aug_rng);
            } else {
                const PolicySnapshot& snap = queue->sample(queue_rng);
                auto [p, lp, ent] = snap.net->sample_pair(queue_rng);
                pair = std::move(p);
            }
            v1.push_back(apply_subpolicy(dataset.images[i], pair.view1, aug_rng, aug_cfg));
            v2.push_back(apply_subpolicy(dataset.images[i], pair.view2, aug_rng, aug_cfg));
        }
        Graph g;
        TensorPtr loss =
            info_nce(g, encoder.embed(g, v1), encoder.embed(g, v2), cfg.temperature);
        tracker.record(loss->data[0]);
        total += loss->data[0];
        g.backward(loss);
        sgd.step(lr);
        ++stats.batches;
    }
    tracker.rollover();
    stats.mean_loss = total / stats.batches;
    return stats;
}

struct PretrainHooks {
    std::function<void(const MetricsRecord&)> on_metrics;
    std::function<void(const PolicySnapshot&)> on_snapshot;
};

struct PretrainResult {
    Encoder encoder;
    PolicyQueue queue;
    EpochLossTracker tracker;
    int searches = 0;
};

/// The three-phase outer loop: warmup epochs on random subpolicies, then,
/// at every k-th epoch past warmup, a PPO policy search whose snapshot is
/// pushed onto the queue, with contrastive training drawing pairs from
/// the queue. Until the first search lands, post-warmup epochs fall back
/// to random subpolicies.
inline PretrainResult pretrain(const Dataset& dataset, RunMode mode,
                               const ContrastiveConfig& ccfg, const RewardConfig& rcfg,
                               const PpoConfig& pcfg, const PolicyNetConfig& ncfg,
                               const QueueConfig& qcfg, std::uint64_t seed,
                               const PretrainHooks& hooks = {},
                               const AugmentConfig& aug_cfg = {}) {
    ccfg.validate();
    rcfg.validate();
    pcfg.validate();
    qcfg.validate();

    Rng master(seed);
    Rng enc_rng = master.fork(rng_tag::encoder_init);
    PretrainResult result{Encoder(ccfg.encoder, enc_rng), PolicyQueue(qcfg),
                          EpochLossTracker{}, 0};
    SgdMomentum sgd(result.encoder.params(), ccfg.momentum, ccfg.weight_decay);
    std::uint64_t next_policy_id = 1;

    for (int epoch = 1; epoch <= ccfg.epochs; ++epoch) {
        if (mode != RunMode::Random && epoch > ccfg.warmup_epochs && epoch % ccfg.k == 0) {
            const PolicyMode pmode =
                mode == RunMode::CoViews ? PolicyMode::CoViews : PolicyMode::IndepViews;
            const std::uint64_t id = next_policy_id++;
            Rng search_rng = master.fork(rng_tag::ppo, static_cast<std::uint64_t>(epoch));
            auto on_ppo = [&](const PpoEpochStats& ps) {
                if (!hooks.on_metrics) return;
                MetricsRecord rec;
                rec.epoch = epoch;
                rec.phase = "search";
                rec.policy_id = static_cast<std::int64_t>(id);
                rec.queue_len = static_cast<int>(result.queue.size());
                rec.ppo_epoch = ps.ppo_epoch;
                rec.mean_reward = ps.mean_reward;
                rec.mean_entropy = ps.mean_entropy;
                rec.surrogate_loss = ps.surrogate_loss;
                hooks.on_metrics(rec);
            };
            const PolicyNet* warm_from =
                (pcfg.warm_start && !result.queue.empty()) ? result.queue.newest().net.get()
                                                           : nullptr;
            PolicySnapshot snap = search_policy(
                result.encoder, dataset, result.tracker, pmode, pcfg, ncfg, rcfg,
                ccfg.temperature, search_rng, epoch, id, on_ppo, aug_cfg, warm_from);
            result.queue.push(snap);
            ++result.searches;
            if (hooks.on_snapshot) hooks.on_snapshot(result.queue.newest());
        }

        const bool in_warmup = epoch <= ccfg.warmup_epochs;
        const PolicySource source =
            (in_warmup || mode == RunMode::Random || result.queue.empty())
                ? PolicySource::Random
                : PolicySource::Queue;
        Rng epoch_rng = master.fork(rng_tag::augment, static_cast<std::uint64_t>(epoch));
        EpochStats es = train_epoch(result.encoder, dataset, source, &result.queue,
                                    result.tracker, ccfg, sgd, epoch, epoch_rng, aug_cfg);
        if (hooks.on_metrics) {
            MetricsRecord rec;
            rec.epoch = epoch;
            rec.phase = in_warmup ? "warmup" : "train";
            rec.mean_infonce = es.mean_loss;
            rec.lr = es.lr;
            rec.policy_id = result.queue.empty()
                                ? -1
                                : static_cast<std::int64_t>(result.queue.newest().id);
            rec.queue_len = static_cast<int>(result.queue.size());
            hooks.on_metrics(rec);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// linear probe
// ---------------------------------------------------------------------------

struct ProbeConfig {
    int epochs = 30;
    int batch = 64;
    double lr = 0.1;
    double momentum = 0.9;
    double holdout = 0.2;  // fraction held out for accuracy
    int crop_pad = 4;      // random-crop padding
};

namespace contrastive_detail {

inline Image random_crop(const Image& img, int pad, Rng& rng) {
    if (pad <= 0) return img;
    const int ox = static_cast<int>(rng.uniform_index(2 * pad + 1)) - pad;
    const int oy = static_cast<int>(rng.uniform_index(2 * pad + 1)) - pad;
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const int sx = x + ox, sy = y + oy;
            for (int c = 0; c < 3; ++c)
                out.at(x, y, c) = (sx >= 0 && sx < img.width && sy >= 0 && sy < img.height)
                                      ? img.at(sx, sy, c)
                                      : 128;
        }
    return out;
}

}  // namespace contrastive_detail

/// Top-1 accuracy of a linear classifier trained with cross-entropy on the
/// frozen encoder's pre-projection features, random-crop augmentation
/// only. Accuracy is measured on a held-out split of the labeled dataset.
inline double linear_probe(const Encoder& encoder, const Dataset& dataset,
                           const ProbeConfig& cfg, std::uint64_t seed) {
    if (!dataset.labeled()) throw std::invalid_argument("probe: dataset has no labels");
    std::set<int> distinct(dataset.labels.begin(), dataset.labels.end());
    if (distinct.size() < 2)
        throw std::invalid_argument("probe: dataset has a single class");
    const int classes = *distinct.rbegin() + 1;

    Rng rng = Rng(seed).fork(rng_tag::probe);
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size() - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
    std::size_t n_test = static_cast<std::size_t>(cfg.holdout * dataset.size());
    n_test = std::max<std::size_t>(1, std::min(n_test, dataset.size() - 1));
    const std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_test);
    std::vector<std::size_t> train_idx(idx.begin() + n_test, idx.end());

    const int feat = encoder.config().feature_dim();
    TensorPtr w = make_param("probe.w", {feat, classes});
    TensorPtr b = make_param("probe.b", {classes});
    SgdMomentum sgd({w, b}, cfg.momentum, 0.0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = train_idx.size() - 1; i > 0; --i)
            std::swap(train_idx[i], train_idx[rng.uniform_index(i + 1)]);
        const std::size_t nb = train_idx.size() / cfg.batch;
        for (std::size_t bi = 0; bi < std::max<std::size_t>(nb, 1); ++bi) {
            const std::size_t lo = bi * cfg.batch;
            const std::size_t hi = std::min(lo + cfg.batch, train_idx.size());
            if (lo >= hi) break;
            std::vector<Image> imgs;
            std::vector<int> labels;
            for (std::size_t j = lo; j < hi; ++j) {
                imgs.push_back(
                    contrastive_detail::random_crop(dataset.images[train_idx[j]], cfg.crop_pad, rng));
                labels.push_back(dataset.labels[train_idx[j]]);
            }
            // frozen features: forward in a throwaway graph, then train the
            // linear head on the detached values
            Graph gf;
            TensorPtr fvals = encoder.features(gf, imgs);
            TensorPtr fconst = make_tensor(fvals->shape, fvals->data);
            Graph gp;
            TensorPtr logits = gp.add(gp.matmul(fconst, w), b);
            TensorPtr logp = gp.log(gp.softmax(logits));
            TensorPtr loss = gp.scale(gp.mean(gp.select_cols(logp, labels)), -1.0);
            gp.backward(loss);
            sgd.step(cosine_lr(cfg.lr, epoch, 0, cfg.epochs));
        }
    }

    // evaluation on the held-out split, no augmentation
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < test_idx.size(); lo += cfg.batch) {
        const std::size_t hi = std::min(lo + cfg.batch, test_idx.size());
        std::vector<Image> imgs;
        for (std::size_t j = lo; j < hi; ++j) imgs.push_back(dataset.images[test_idx[j]]);
        Graph gf;
        TensorPtr f = encoder.features(gf, imgs);
        for (std::size_t r = 0; r < imgs.size(); ++r) {
            int best = 0;
            double best_v = -1e300;
            for (int cls = 0; cls < classes; ++cls) {
                double v = b->data[cls];
                for (int d = 0; d < feat; ++d)
                    v += f->at(static_cast<int>(r), d) * w->at(d, cls);
                if (v > best_v) {
                    best_v = v;
                    best = cls;
                }
            }
            if (best == dataset.labels[test_idx[lo + r]]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

}  // namespace adaptaug
