#include <gtest/gtest.h>

#include <cmath>

#include "adaptaug/contrastive.hpp"
#include "adaptaug/gradcheck.hpp"
#include "support/infonce_oracle.hpp"

using namespace adaptaug;
using adaptaug_test::oracle_info_nce;

namespace {

double graph_info_nce(const std::vector<std::vector<double>>& z1,
                      const std::vector<std::vector<double>>& z2, double tau) {
    const int n = static_cast<int>(z1.size());
    const int d = static_cast<int>(z1[0].size());
    auto flat = [&](const std::vector<std::vector<double>>& z) {
        std::vector<double> out;
        for (const auto& row : z) out.insert(out.end(), row.begin(), row.end());
        return out;
    };
    Graph g;
    return info_nce(g, make_tensor({n, d}, flat(z1)), make_tensor({n, d}, flat(z2)), tau)
        ->data[0];
}

EncoderConfig tiny_encoder_cfg() {
    EncoderConfig cfg;
    cfg.input_hw = 32;
    cfg.channels = {8, 16};
    cfg.proj_hidden = 32;
    cfg.proj_dim = 16;
    return cfg;
}

ContrastiveConfig fast_contrastive(int epochs, int warmup, int k) {
    ContrastiveConfig cfg;
    cfg.epochs = epochs;
    cfg.warmup_epochs = warmup;
    cfg.k = k;
    cfg.batch = 16;
    cfg.lr = 0.02;
    cfg.lr_warmup_epochs = 0;
    cfg.encoder = tiny_encoder_cfg();
    return cfg;
}

PpoConfig micro_ppo() {
    PpoConfig cfg;
    cfg.ppo_epochs = 2;
    cfg.samples_per_epoch = 8;
    cfg.collection_batch = 4;
    cfg.updates_per_epoch = 1;
    cfg.update_batch = 4;
    return cfg;
}

PolicyNetConfig micro_policy() {
    PolicyNetConfig cfg;
    cfg.hidden = 8;
    cfg.embed = 4;
    return cfg;
}

}  // namespace

TEST(InfoNce, SinglePositiveHasZeroLoss) {
    EXPECT_NEAR(graph_info_nce({{1, 0}}, {{1, 0}}, 0.5), 0.0, 1e-12);
    EXPECT_NEAR(graph_info_nce({{0.3, -2}}, {{5, 0.1}}, 0.5), 0.0, 1e-12);
}

TEST(InfoNce, TwoPointOrthogonalInstance) {
    const std::vector<std::vector<double>> z{{1, 0}, {0, 1}};
    const double oracle = oracle_info_nce(z, z, 0.5);
    EXPECT_NEAR(oracle, 0.2395, 1e-3);  // ln(1 + 2 e^-2)
    EXPECT_NEAR(graph_info_nce(z, z, 0.5), oracle, 1e-9);
}

TEST(InfoNce, MatchesOracleOnRandomInstances) {
    Rng rng(55);
    double max_diff = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(4));
        const int d = 2 + static_cast<int>(rng.uniform_index(7));
        auto draw = [&]() {
            std::vector<std::vector<double>> z(n, std::vector<double>(d));
            for (auto& row : z) {
                double norm = 0.0;
                do {
                    norm = 0.0;
                    for (auto& v : row) {
                        v = rng.uniform(-1, 1);
                        norm += v * v;
                    }
                } while (norm < 1e-6);
            }
            return z;
        };
        const auto z1 = draw(), z2 = draw();
        const double tau = 0.2 + rng.uniform() * 0.8;
        max_diff = std::max(max_diff,
                            std::abs(graph_info_nce(z1, z2, tau) - oracle_info_nce(z1, z2, tau)));
    }
    EXPECT_LT(max_diff, 1e-6);
}

TEST(InfoNce, InvariantUnderPositiveRescaling) {
    const std::vector<std::vector<double>> z1{{1, 0.5, -2}, {0, 1, 3}};
    const std::vector<std::vector<double>> z2{{-1, 2, 0.5}, {4, 1, -1}};
    const double base = graph_info_nce(z1, z2, 0.5);
    auto scaled = z1;
    for (auto& v : scaled[1]) v *= 37.5;
    EXPECT_NEAR(graph_info_nce(scaled, z2, 0.5), base, 1e-9);
}

TEST(InfoNce, InvariantUnderConsistentPermutation) {
    const std::vector<std::vector<double>> z1{{1, 0.5}, {0, 1}, {2, -1}};
    const std::vector<std::vector<double>> z2{{-1, 2}, {4, 1}, {0.5, 0.5}};
    const double base = graph_info_nce(z1, z2, 0.5);
    const std::vector<int> perm{2, 0, 1};
    std::vector<std::vector<double>> p1, p2;
    for (int i : perm) {
        p1.push_back(z1[i]);
        p2.push_back(z2[i]);
    }
    EXPECT_NEAR(graph_info_nce(p1, p2, 0.5), base, 1e-12);
}

TEST(InfoNce, ZeroNormEmbeddingRejected) {
    EXPECT_THROW(graph_info_nce({{0, 0}, {1, 0}}, {{1, 0}, {0, 1}}, 0.5),
                 std::invalid_argument);
}

TEST(Encode, DeterministicWithExpectedDimension) {
    Rng rng(1);
    Encoder enc(tiny_encoder_cfg(), rng);
    Dataset ds = synth_shapes(4, 2, 3);
    const auto e1 = enc.encode({ds.images[0], ds.images[0], ds.images[1]});
    EXPECT_EQ(e1.size(), 3u * 16);
    for (int d = 0; d < 16; ++d) EXPECT_DOUBLE_EQ(e1[d], e1[16 + d]);  // identical image rows
    const auto e2 = enc.encode({ds.images[0], ds.images[0], ds.images[1]});
    EXPECT_EQ(e1, e2);
}

TEST(Encode, PixelsScaledToUnitRange) {
    Rng rng(1);
    EncoderConfig cfg;
    cfg.input_hw = 8;
    cfg.channels = {4};
    cfg.proj_hidden = 8;
    cfg.proj_dim = 4;
    Encoder enc(cfg, rng);
    Image white(8, 8, 255);
    const auto x = enc.images_to_tensor({white});
    for (double v : x->data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Encode, InfoNceGradientPassesFiniteDifferences) {
    Rng rng(31);
    EncoderConfig cfg;
    cfg.input_hw = 8;
    cfg.channels = {4};
    cfg.proj_hidden = 8;
    cfg.proj_dim = 4;
    Encoder enc(cfg, rng);
    Image a(8, 8), b(8, 8);
    Rng prng(5);
    for (auto& p : a.pixels) p = static_cast<std::uint8_t>(prng.uniform_index(256));
    for (auto& p : b.pixels) p = static_cast<std::uint8_t>(prng.uniform_index(256));
    auto loss = [&]() {
        Graph g;
        auto z1 = enc.embed(g, {a, b});
        auto z2 = enc.embed(g, {b, a});
        auto y = info_nce(g, z1, z2, 0.5);
        g.backward(y);
        return y->data[0];
    };
    auto report = finite_diff_check(loss, enc.params(), 1e-5, 1e-4, 12, 777);
    EXPECT_TRUE(report.pass) << report.max_rel_err;
}

TEST(TrainEpoch, RecordsEveryBatchAndRollsOver) {
    Dataset ds = synth_shapes(48, 2, 9);
    ContrastiveConfig cfg = fast_contrastive(3, 1, 2);
    Rng enc_rng(2);
    Encoder enc(cfg.encoder, enc_rng);
    SgdMomentum sgd(enc.params(), cfg.momentum, cfg.weight_decay);
    EpochLossTracker tracker;
    Rng epoch_rng(77);
    EpochStats stats = train_epoch(enc, ds, PolicySource::Random, nullptr, tracker, cfg, sgd,
                                   1, epoch_rng);
    EXPECT_EQ(stats.batches, 3);  // 48 / 16
    EXPECT_TRUE(tracker.primed());
    EXPECT_NEAR(tracker.frozen_average(), stats.mean_loss, 1e-12);
    EXPECT_EQ(tracker.batches_recorded(), 0u);  // rolled over
}

TEST(TrainEpoch, QueueSourceWithNoPoliciesRejected) {
    Dataset ds = synth_shapes(32, 2, 9);
    ContrastiveConfig cfg = fast_contrastive(3, 1, 2);
    Rng enc_rng(2);
    Encoder enc(cfg.encoder, enc_rng);
    SgdMomentum sgd(enc.params(), cfg.momentum, cfg.weight_decay);
    EpochLossTracker tracker;
    PolicyQueue empty({3, 0.5});
    Rng epoch_rng(7);
    EXPECT_THROW(train_epoch(enc, ds, PolicySource::Queue, &empty, tracker, cfg, sgd, 1,
                             epoch_rng),
                 std::logic_error);
}

TEST(TrainEpoch, WarmupLossDecreases) {
    Dataset ds = synth_shapes(128, 2, 4);
    ContrastiveConfig cfg = fast_contrastive(12, 12, 2);  // lr stays healthy over 5 epochs
    Rng enc_rng(3);
    Encoder enc(cfg.encoder, enc_rng);
    SgdMomentum sgd(enc.params(), cfg.momentum, cfg.weight_decay);
    EpochLossTracker tracker;
    double first = 0.0, last = 0.0;
    for (int epoch = 1; epoch <= 5; ++epoch) {
        Rng epoch_rng = Rng(11).fork(rng_tag::augment, epoch);
        EpochStats s =
            train_epoch(enc, ds, PolicySource::Random, nullptr, tracker, cfg, sgd, epoch,
                        epoch_rng);
        if (epoch == 1) first = s.mean_loss;
        if (epoch == 5) last = s.mean_loss;
    }
    EXPECT_LT(last, first);
}

TEST(Pretrain, SearchScheduleFollowsModuloRule) {
    Dataset ds = synth_shapes(32, 2, 5);
    ContrastiveConfig cfg = fast_contrastive(9, 3, 2);
    std::vector<int> search_epochs;
    std::vector<std::string> phases;
    PretrainHooks hooks;
    hooks.on_snapshot = [&](const PolicySnapshot& s) { search_epochs.push_back(s.epoch); };
    hooks.on_metrics = [&](const MetricsRecord& r) {
        if (r.phase != "search") phases.push_back(r.phase);
    };
    PretrainResult result = pretrain(ds, RunMode::CoViews, cfg, RewardConfig{}, micro_ppo(),
                                     micro_policy(), QueueConfig{}, 42, hooks);
    EXPECT_EQ(search_epochs, (std::vector<int>{4, 6, 8}));
    EXPECT_EQ(result.searches, 3);
    EXPECT_EQ(result.queue.size(), 3u);
    ASSERT_EQ(phases.size(), 9u);
    for (int e = 0; e < 3; ++e) EXPECT_EQ(phases[e], "warmup");
    for (int e = 3; e < 9; ++e) EXPECT_EQ(phases[e], "train");
}

TEST(Pretrain, WarmupOnlyRunDoesNoSearches) {
    Dataset ds = synth_shapes(32, 2, 5);
    ContrastiveConfig cfg = fast_contrastive(3, 3, 2);
    PretrainResult result = pretrain(ds, RunMode::CoViews, cfg, RewardConfig{}, micro_ppo(),
                                     micro_policy(), QueueConfig{}, 42);
    EXPECT_EQ(result.searches, 0);
    EXPECT_TRUE(result.queue.empty());
}

TEST(Pretrain, RandomModeNeverSearches) {
    Dataset ds = synth_shapes(32, 2, 5);
    ContrastiveConfig cfg = fast_contrastive(6, 2, 2);
    int search_records = 0;
    PretrainHooks hooks;
    hooks.on_metrics = [&](const MetricsRecord& r) {
        if (r.phase == "search") ++search_records;
    };
    PretrainResult result = pretrain(ds, RunMode::Random, cfg, RewardConfig{}, micro_ppo(),
                                     micro_policy(), QueueConfig{}, 42, hooks);
    EXPECT_EQ(result.searches, 0);
    EXPECT_EQ(search_records, 0);
}

TEST(Pretrain, EmptyQueueEpochsFallBackToRandom) {
    Dataset ds = synth_shapes(32, 2, 5);
    // warmup 2, k 5: epochs 3 and 4 are past warmup with an empty queue
    ContrastiveConfig cfg = fast_contrastive(6, 2, 5);
    PretrainResult result = pretrain(ds, RunMode::IndepViews, cfg, RewardConfig{}, micro_ppo(),
                                     micro_policy(), QueueConfig{}, 43);
    EXPECT_EQ(result.searches, 1);  // only epoch 5
    EXPECT_EQ(result.queue.size(), 1u);
    EXPECT_EQ(result.queue.newest().epoch, 5);
}

TEST(Pretrain, DeterministicMetricsStream) {
    Dataset ds = synth_shapes(32, 2, 5);
    ContrastiveConfig cfg = fast_contrastive(6, 2, 2);
    auto run = [&]() {
        std::vector<MetricsRecord> records;
        PretrainHooks hooks;
        hooks.on_metrics = [&](const MetricsRecord& r) { records.push_back(r); };
        pretrain(ds, RunMode::CoViews, cfg, RewardConfig{}, micro_ppo(), micro_policy(),
                 QueueConfig{}, 1234, hooks);
        return records;
    };
    const auto a = run();
    const auto b = run();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].epoch, b[i].epoch);
        EXPECT_EQ(a[i].phase, b[i].phase);
        EXPECT_EQ(a[i].mean_infonce, b[i].mean_infonce);  // bitwise
        EXPECT_EQ(a[i].mean_reward, b[i].mean_reward);
        EXPECT_EQ(a[i].policy_id, b[i].policy_id);
    }
}

TEST(Probe, SeparableClassesScoreHigh) {
    Dataset ds = synth_shapes(160, 2, 21);
    ContrastiveConfig cfg = fast_contrastive(15, 15, 2);
    cfg.lr_warmup_epochs = 2;
    PretrainResult result = pretrain(ds, RunMode::Random, cfg, RewardConfig{}, micro_ppo(),
                                     micro_policy(), QueueConfig{}, 7);
    ProbeConfig pcfg;
    pcfg.epochs = 25;
    pcfg.batch = 32;
    const double acc = linear_probe(result.encoder, ds, pcfg, 5);
    EXPECT_GT(acc, 0.95);
    EXPECT_LE(acc, 1.0);
}

TEST(Probe, EncoderFrozenAndAccuracyInRange) {
    Dataset ds = synth_shapes(60, 2, 22);
    Rng enc_rng(9);
    Encoder enc(tiny_encoder_cfg(), enc_rng);
    const double checksum = enc.param_checksum();
    ProbeConfig pcfg;
    pcfg.epochs = 3;
    const double acc = linear_probe(enc, ds, pcfg, 1);
    EXPECT_DOUBLE_EQ(enc.param_checksum(), checksum);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
}

TEST(Probe, SingleClassRejected) {
    Dataset ds = synth_shapes(20, 1, 3);
    Rng enc_rng(9);
    Encoder enc(tiny_encoder_cfg(), enc_rng);
    EXPECT_THROW(linear_probe(enc, ds, ProbeConfig{}, 1), std::invalid_argument);
    Dataset unlabeled = ds;
    unlabeled.labels.clear();
    EXPECT_THROW(linear_probe(enc, unlabeled, ProbeConfig{}, 1), std::invalid_argument);
}
