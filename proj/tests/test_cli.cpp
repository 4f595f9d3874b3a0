#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

#include "adaptaug/runner.hpp"

using namespace adaptaug;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("adaptaug_cli_" + tag + "_" +
                                            std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

/// Micro-budget config that finishes a full adaptive run in a second or two.
RunConfig micro_config(const std::string& out) {
    RunConfig cfg;
    cfg.out = out;
    cfg.synth_n = 32;
    cfg.synth_classes = 2;
    cfg.contrastive.batch = 8;
    cfg.contrastive.epochs = 6;
    cfg.contrastive.warmup_epochs = 2;
    cfg.contrastive.k = 2;
    cfg.contrastive.lr = 0.02;
    cfg.contrastive.lr_warmup_epochs = 1;
    cfg.contrastive.encoder = {32, {4, 8}, 16, 8};
    cfg.ppo.ppo_epochs = 2;
    cfg.ppo.samples_per_epoch = 8;
    cfg.ppo.collection_batch = 4;
    cfg.ppo.updates_per_epoch = 1;
    cfg.ppo.update_batch = 4;
    cfg.policy.hidden = 8;
    cfg.policy.embed = 4;
    cfg.probe.epochs = 4;
    cfg.probe.batch = 8;
    cfg.probe_seeds = 2;
    cfg.inspect_samples = 400;
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST(Config, PrecedenceDefaultsFileFlags) {
    TempDir tmp("prec");
    const fs::path file = tmp.path / "run.cfg";
    {
        std::ofstream os(file);
        os << "# comment line\n";
        os << "contrastive.epochs = 7\n";
        os << "reward.th = 1.5\n";
    }
    RunConfig cfg;
    EXPECT_EQ(cfg.contrastive.epochs, 60);  // default
    config_apply_file(cfg, file.string());
    EXPECT_EQ(cfg.contrastive.epochs, 7);       // file over default
    EXPECT_DOUBLE_EQ(cfg.reward.th, 1.5);       // file over default
    EXPECT_DOUBLE_EQ(cfg.reward.b, 0.2);        // untouched default
    config_set(cfg, "contrastive.epochs", "9");  // flag over file
    EXPECT_EQ(cfg.contrastive.epochs, 9);
    EXPECT_DOUBLE_EQ(cfg.reward.th, 1.5);
}

TEST(Config, UnknownKeyRejectedBeforeAnyWork) {
    TempDir tmp("badkey");
    const fs::path file = tmp.path / "bad.cfg";
    {
        std::ofstream os(file);
        os << "bogus.key = 1\n";
    }
    RunConfig cfg;
    EXPECT_THROW(config_apply_file(cfg, file.string()), std::invalid_argument);
    EXPECT_THROW(config_set(cfg, "no.such.key", "1"), std::invalid_argument);
    EXPECT_THROW(config_set(cfg, "mode", "bogus"), std::invalid_argument);
    EXPECT_THROW(config_set(cfg, "contrastive.epochs", "seven"), std::invalid_argument);
}

TEST(Config, ResolvedRoundTripsExactly) {
    TempDir tmp("roundtrip");
    RunConfig cfg = micro_config((tmp.path / "x").string());
    cfg.reward.b = 0.017;
    cfg.contrastive.lr = 0.0123456789012345;
    const std::string dumped = config_resolved(cfg);
    const fs::path file = tmp.path / "resolved.cfg";
    {
        std::ofstream os(file);
        os << dumped;
    }
    RunConfig back;
    config_apply_file(back, file.string());
    EXPECT_EQ(config_resolved(back), dumped);
    EXPECT_EQ(back.contrastive.lr, cfg.contrastive.lr);  // bitwise
}

TEST(Pretrain, WritesRunArtifactsAndValidMetrics) {
    TempDir tmp("run");
    RunConfig cfg = micro_config((tmp.path / "run1").string());
    PretrainResult result = cmd_pretrain(cfg, true);
    EXPECT_EQ(result.searches, 2);  // epochs 4 and 6
    EXPECT_TRUE(fs::exists(fs::path(cfg.out) / "metrics.jsonl"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.out) / "resolved_config"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.out) / "encoder.ckpt"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.out) / "snapshots" / "policy_e0004.ckpt"));
    EXPECT_TRUE(fs::exists(fs::path(cfg.out) / "snapshots" / "policy_e0006.ckpt"));

    // one valid JSON record per line, epochs nondecreasing, stable schema
    std::ifstream is(fs::path(cfg.out) / "metrics.jsonl");
    std::string line;
    int last_epoch = 0;
    int epoch_records = 0;
    while (std::getline(is, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_GE(j["epoch"].get<int>(), last_epoch);
        last_epoch = j["epoch"].get<int>();
        ASSERT_TRUE(j.contains("phase"));
        ASSERT_TRUE(j.contains("policy_id"));
        ASSERT_TRUE(j.contains("queue_len"));
        const std::string phase = j["phase"].get<std::string>();
        if (phase == "search") {
            ASSERT_TRUE(j.contains("mean_reward"));
            ASSERT_TRUE(j.contains("mean_entropy"));
            ASSERT_TRUE(j.contains("surrogate_loss"));
            ASSERT_TRUE(j.contains("ppo_epoch"));
        } else {
            ASSERT_TRUE(phase == "warmup" || phase == "train");
            ASSERT_TRUE(j.contains("mean_infonce"));
            ASSERT_TRUE(j.contains("lr"));
            ++epoch_records;
        }
    }
    EXPECT_EQ(epoch_records, 6);
}

TEST(Pretrain, MetricsStreamByteIdenticalAcrossReruns) {
    TempDir tmp("det");
    RunConfig a = micro_config((tmp.path / "a").string());
    RunConfig b = micro_config((tmp.path / "b").string());
    cmd_pretrain(a, true);
    cmd_pretrain(b, true);
    const std::string ma = slurp(fs::path(a.out) / "metrics.jsonl");
    const std::string mb = slurp(fs::path(b.out) / "metrics.jsonl");
    ASSERT_FALSE(ma.empty());
    EXPECT_EQ(ma, mb);
    // resolved_config differs only in the out path
    RunConfig c = micro_config((tmp.path / "a").string());
    EXPECT_EQ(slurp(fs::path(a.out) / "resolved_config"), config_resolved(c));
}

TEST(Probe, WritesAccuracyReport) {
    TempDir tmp("probe");
    RunConfig cfg = micro_config((tmp.path / "run").string());
    cmd_pretrain(cfg, true);
    ProbeReport report = cmd_probe(cfg, cfg.out, true);
    EXPECT_EQ(report.accuracies.size(), 2u);
    for (double acc : report.accuracies) {
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
    }
    const auto j = nlohmann::json::parse(slurp(fs::path(cfg.out) / "accuracy.json"));
    EXPECT_EQ(j["accuracies"].size(), 2u);
    EXPECT_NEAR(j["mean"].get<double>(), report.mean, 1e-12);
    ASSERT_TRUE(j.contains("std"));
    ASSERT_TRUE(j.contains("seeds"));
}

TEST(Probe, MissingCheckpointRejected) {
    TempDir tmp("noenc");
    RunConfig cfg = micro_config((tmp.path / "none").string());
    EXPECT_THROW(cmd_probe(cfg, cfg.out, true), std::runtime_error);
}

TEST(Search, ProducesLoadableSnapshot) {
    TempDir tmp("search");
    RunConfig cfg = micro_config((tmp.path / "s").string());
    cfg.mode = "indepviews";
    const std::string path = cmd_search(cfg, true);
    PolicySnapshot snap = PolicySnapshot::load(path);
    EXPECT_EQ(snap.cfg.mode, PolicyMode::IndepViews);
    Rng rng(1);
    auto batch = snap.net->sample_pairs(8, rng);
    EXPECT_EQ(batch.pairs.size(), 8u);
}

TEST(Inspect, ExportsMarginalsAndCooccurrence) {
    TempDir tmp("inspect");
    RunConfig cfg = micro_config((tmp.path / "run").string());
    cmd_pretrain(cfg, true);
    cmd_inspect(cfg, cfg.out, true);

    // op_probs: pooled frequencies sum to ~1 per snapshot
    std::ifstream probs(fs::path(cfg.out) / "op_probs.csv");
    std::string line;
    std::getline(probs, line);
    EXPECT_EQ(line, "snapshot_epoch,op,pooled_freq,view1_freq,view2_freq");
    std::map<int, double> pooled_sum;
    std::map<int, std::set<std::string>> ops_seen;
    while (std::getline(probs, line)) {
        std::stringstream ss(line);
        std::string epoch, op, pooled, v1, v2;
        std::getline(ss, epoch, ',');
        std::getline(ss, op, ',');
        std::getline(ss, pooled, ',');
        pooled_sum[std::stoi(epoch)] += std::stod(pooled);
        ops_seen[std::stoi(epoch)].insert(op);
    }
    ASSERT_EQ(pooled_sum.size(), 2u);  // snapshots at epochs 4 and 6
    for (const auto& [epoch, sum] : pooled_sum) {
        EXPECT_NEAR(sum, 1.0, 1e-9) << "epoch " << epoch;
        EXPECT_EQ(ops_seen[epoch].size(), 16u);
    }

    // co-occurrence: first-step counts sum to M, any-step to M * n_tau^2
    std::ifstream cooc(fs::path(cfg.out) / "cooccurrence.csv");
    std::getline(cooc, line);
    EXPECT_EQ(line, "snapshot_epoch,view1_op,view2_op,count_first_step,count_any_step");
    std::map<int, long long> first_total, any_total;
    while (std::getline(cooc, line)) {
        std::stringstream ss(line);
        std::string epoch, a, b, first, any;
        std::getline(ss, epoch, ',');
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        std::getline(ss, first, ',');
        std::getline(ss, any, ',');
        first_total[std::stoi(epoch)] += std::stoll(first);
        any_total[std::stoi(epoch)] += std::stoll(any);
    }
    for (const auto& [epoch, total] : first_total) EXPECT_EQ(total, 400) << epoch;
    for (const auto& [epoch, total] : any_total) EXPECT_EQ(total, 400 * 4) << epoch;
}

TEST(Inspect, NoSnapshotsRejected) {
    TempDir tmp("noinspect");
    RunConfig cfg = micro_config((tmp.path / "empty").string());
    fs::create_directories(cfg.out);
    EXPECT_THROW(cmd_inspect(cfg, cfg.out, true), std::runtime_error);
}

TEST(Sweep, GridRunsIsolatedCells) {
    TempDir tmp("sweep");
    RunConfig cfg = micro_config((tmp.path / "sweep").string());
    cfg.contrastive.epochs = 4;
    cfg.contrastive.warmup_epochs = 2;
    cfg.probe_seeds = 1;
    const auto rows = cmd_sweep(cfg, {1.2, 1.5}, {0.2, 2.0}, true);
    ASSERT_EQ(rows.size(), 4u);
    std::set<std::string> dirs;
    for (const auto& row : rows) {
        EXPECT_TRUE(row.ok) << row.error;
        EXPECT_GE(row.accuracy_mean, 0.0);
        EXPECT_GT(row.runtime_sec, 0.0);
    }
    for (double th : {1.2, 1.5})
        for (double b : {0.2, 2.0}) {
            char name[64];
            std::snprintf(name, sizeof(name), "th%g_b%g", th, b);
            const fs::path cell = fs::path(cfg.out) / name;
            EXPECT_TRUE(fs::exists(cell / "metrics.jsonl")) << cell;
            dirs.insert(cell.string());
        }
    EXPECT_EQ(dirs.size(), 4u);
    const std::string csv = slurp(fs::path(cfg.out) / "sweep_summary.csv");
    EXPECT_NE(csv.find("th,b,accuracy_mean,accuracy_std,runtime_sec,status"),
              std::string::npos);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 4 rows
}

TEST(Sweep, FailedCellRecordedAndSweepContinues) {
    TempDir tmp("sweepfail");
    RunConfig cfg = micro_config((tmp.path / "sweep").string());
    cfg.contrastive.epochs = 3;
    cfg.contrastive.warmup_epochs = 1;
    cfg.probe_seeds = 1;
    // th = 0.5 violates th > 1 and must fail its cell only
    const auto rows = cmd_sweep(cfg, {0.5, 1.3}, {0.2}, true);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_FALSE(rows[0].ok);
    EXPECT_FALSE(rows[0].error.empty());
    EXPECT_TRUE(rows[1].ok) << rows[1].error;
}
