#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "adaptaug/config.hpp"
#include "adaptaug/contrastive.hpp"
#include "adaptaug/data.hpp"

namespace adaptaug {

namespace fs = std::filesystem;

inline Dataset load_run_dataset(const RunConfig& cfg, const std::string& split = "train") {
    if (cfg.dataset_source == "synth") return synth_shapes(cfg.synth_n, cfg.synth_classes, cfg.seed);
    return load_cifar10(cfg.data_dir, split, cfg.data_fraction, cfg.seed);
}

inline nlohmann::json metrics_to_json(const MetricsRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["phase"] = r.phase;
    j["policy_id"] = r.policy_id;
    j["queue_len"] = r.queue_len;
    if (r.phase == "search") {
        j["ppo_epoch"] = r.ppo_epoch;
        j["mean_reward"] = r.mean_reward;
        j["mean_entropy"] = r.mean_entropy;
        j["surrogate_loss"] = r.surrogate_loss;
    } else {
        j["mean_infonce"] = r.mean_infonce;
        j["lr"] = r.lr;
    }
    return j;
}

namespace runner_detail {

inline std::string snapshot_filename(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "policy_e%04d.ckpt", epoch);
    return buf;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    os << text;
}

}  // namespace runner_detail

/// Full adaptive pretraining run. Writes resolved_config, metrics.jsonl,
/// policy snapshots, and the final encoder checkpoint into cfg.out.
inline PretrainResult cmd_pretrain(const RunConfig& cfg, bool quiet = false) {
    cfg.validate();
    const fs::path out(cfg.out);
    fs::create_directories(out / "snapshots");
    runner_detail::write_text(out / "resolved_config", config_resolved(cfg));

    std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write metrics.jsonl under '" + cfg.out + "'");

    Dataset ds = load_run_dataset(cfg);
    PretrainHooks hooks;
    hooks.on_metrics = [&](const MetricsRecord& r) {
        metrics << metrics_to_json(r).dump() << "\n";
        if (!quiet && r.phase != "search")
            std::printf("[%s] epoch %d mean_infonce %.4f lr %.5f queue %d\n", r.phase.c_str(),
                        r.epoch, r.mean_infonce, r.lr, r.queue_len);
    };
    hooks.on_snapshot = [&](const PolicySnapshot& snap) {
        snap.save((out / "snapshots" / runner_detail::snapshot_filename(snap.epoch)).string());
    };
    PretrainResult result = pretrain(ds, cfg.run_mode(), cfg.contrastive, cfg.reward, cfg.ppo,
                                     cfg.policy, cfg.queue, cfg.seed, hooks, cfg.augment);
    result.encoder.save((out / "encoder.ckpt").string());
    metrics.close();
    if (!quiet)
        std::printf("pretrain done: %d searches, %zu policies in queue, artifacts in %s\n",
                    result.searches, result.queue.size(), cfg.out.c_str());
    return result;
}

struct ProbeReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0;
};

/// Linear evaluation of a finished run: probe_seeds independent probes of
/// the frozen encoder, reported as mean +- std (over linear-head seeds).
inline ProbeReport cmd_probe(const RunConfig& cfg, const std::string& run_dir,
                             bool quiet = false) {
    const fs::path ckpt = fs::path(run_dir) / "encoder.ckpt";
    if (!fs::exists(ckpt))
        throw std::runtime_error("probe: no encoder checkpoint at '" + ckpt.string() + "'");
    Encoder enc = Encoder::load(ckpt.string());
    Dataset ds = load_run_dataset(cfg);
    if (!ds.labeled()) throw std::invalid_argument("probe: dataset has no labels");

    ProbeReport report;
    for (int i = 0; i < cfg.probe_seeds; ++i) {
        const std::uint64_t seed = cfg.seed + 1000 * (i + 1);
        report.seeds.push_back(seed);
        report.accuracies.push_back(linear_probe(enc, ds, cfg.probe, seed));
    }
    for (double a : report.accuracies) report.mean += a;
    report.mean /= report.accuracies.size();
    for (double a : report.accuracies)
        report.stddev += (a - report.mean) * (a - report.mean);
    report.stddev = std::sqrt(report.stddev / report.accuracies.size());

    nlohmann::json j;
    j["seeds"] = report.seeds;
    j["accuracies"] = report.accuracies;
    j["mean"] = report.mean;
    j["std"] = report.stddev;
    j["probe_epochs"] = cfg.probe.epochs;
    runner_detail::write_text(fs::path(run_dir) / "accuracy.json", j.dump(2) + "\n");
    if (!quiet)
        std::printf("probe: top-1 %.4f +- %.4f over %d seeds\n", report.mean, report.stddev,
                    cfg.probe_seeds);
    return report;
}

/// Warmup the encoder, then run exactly one policy search and write the
/// resulting snapshot (plus metrics) into cfg.out.
inline std::string cmd_search(const RunConfig& cfg, bool quiet = false) {
    cfg.validate();
    const fs::path out(cfg.out);
    fs::create_directories(out);
    runner_detail::write_text(out / "resolved_config", config_resolved(cfg));
    std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);

    Dataset ds = load_run_dataset(cfg);
    Rng master(cfg.seed);
    Rng enc_rng = master.fork(rng_tag::encoder_init);
    Encoder enc(cfg.contrastive.encoder, enc_rng);
    SgdMomentum sgd(enc.params(), cfg.contrastive.momentum, cfg.contrastive.weight_decay);
    EpochLossTracker tracker;
    for (int epoch = 1; epoch <= cfg.contrastive.warmup_epochs; ++epoch) {
        Rng epoch_rng = master.fork(rng_tag::augment, static_cast<std::uint64_t>(epoch));
        EpochStats es = train_epoch(enc, ds, PolicySource::Random, nullptr, tracker,
                                    cfg.contrastive, sgd, epoch, epoch_rng, cfg.augment);
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.phase = "warmup";
        rec.mean_infonce = es.mean_loss;
        rec.lr = es.lr;
        metrics << metrics_to_json(rec).dump() << "\n";
    }
    const int search_epoch = cfg.contrastive.warmup_epochs + 1;
    const PolicyMode pmode = cfg.run_mode() == RunMode::IndepViews ? PolicyMode::IndepViews
                                                                   : PolicyMode::CoViews;
    Rng search_rng = master.fork(rng_tag::ppo, static_cast<std::uint64_t>(search_epoch));
    PolicySnapshot snap = search_policy(
        enc, ds, tracker, pmode, cfg.ppo, cfg.policy, cfg.reward, cfg.contrastive.temperature,
        search_rng, search_epoch, 1, [&](const PpoEpochStats& ps) {
            MetricsRecord rec;
            rec.epoch = search_epoch;
            rec.phase = "search";
            rec.policy_id = 1;
            rec.ppo_epoch = ps.ppo_epoch;
            rec.mean_reward = ps.mean_reward;
            rec.mean_entropy = ps.mean_entropy;
            rec.surrogate_loss = ps.surrogate_loss;
            metrics << metrics_to_json(rec).dump() << "\n";
        },
        cfg.augment);
    const std::string path = (out / "policy_search.ckpt").string();
    snap.save(path);
    if (!quiet) std::printf("search done, snapshot at %s\n", path.c_str());
    return path;
}

/// Sample M pairs from every stored snapshot of a run and export the
/// transformation statistics: per-op marginal frequencies (pooled and per
/// view) and the 16x16 co-occurrence counts of view-1 vs view-2 ops
/// (first-step counts plus an any-step variant).
inline void cmd_inspect(const RunConfig& cfg, const std::string& run_dir, bool quiet = false) {
    const fs::path snap_dir = fs::path(run_dir) / "snapshots";
    std::vector<fs::path> files;
    if (fs::exists(snap_dir))
        for (const auto& entry : fs::directory_iterator(snap_dir))
            if (entry.path().extension() == ".ckpt") files.push_back(entry.path());
    if (fs::exists(fs::path(run_dir) / "policy_search.ckpt"))
        files.push_back(fs::path(run_dir) / "policy_search.ckpt");
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw std::runtime_error("inspect: no policy snapshots under '" + run_dir + "'");

    const int samples = cfg.inspect_samples;
    std::ofstream probs_csv(fs::path(run_dir) / "op_probs.csv", std::ios::trunc);
    std::ofstream cooc_csv(fs::path(run_dir) / "cooccurrence.csv", std::ios::trunc);
    probs_csv << "snapshot_epoch,op,pooled_freq,view1_freq,view2_freq\n";
    cooc_csv << "snapshot_epoch,view1_op,view2_op,count_first_step,count_any_step\n";

    for (const auto& file : files) {
        PolicySnapshot snap = PolicySnapshot::load(file.string());
        Rng rng = Rng(cfg.seed).fork(rng_tag::policy_sample, static_cast<std::uint64_t>(snap.epoch));
        auto batch = snap.net->sample_pairs(samples, rng);
        const int n_tau = snap.cfg.n_tau;
        std::vector<long long> pooled(kNumOps, 0), v1(kNumOps, 0), v2(kNumOps, 0);
        std::vector<long long> first(kNumOps * kNumOps, 0), any(kNumOps * kNumOps, 0);
        for (const auto& pair : batch.pairs) {
            for (const auto& s : pair.view1) {
                ++pooled[static_cast<int>(s.op)];
                ++v1[static_cast<int>(s.op)];
            }
            for (const auto& s : pair.view2) {
                ++pooled[static_cast<int>(s.op)];
                ++v2[static_cast<int>(s.op)];
            }
            ++first[static_cast<int>(pair.view1[0].op) * kNumOps +
                    static_cast<int>(pair.view2[0].op)];
            for (const auto& s1 : pair.view1)
                for (const auto& s2 : pair.view2)
                    ++any[static_cast<int>(s1.op) * kNumOps + static_cast<int>(s2.op)];
        }
        for (int op = 0; op < kNumOps; ++op) {
            probs_csv << snap.epoch << "," << op_name(static_cast<OpKind>(op)) << ","
                      << static_cast<double>(pooled[op]) / (2.0 * n_tau * samples) << ","
                      << static_cast<double>(v1[op]) / (static_cast<double>(n_tau) * samples)
                      << ","
                      << static_cast<double>(v2[op]) / (static_cast<double>(n_tau) * samples)
                      << "\n";
        }
        for (int a = 0; a < kNumOps; ++a)
            for (int b = 0; b < kNumOps; ++b)
                cooc_csv << snap.epoch << "," << op_name(static_cast<OpKind>(a)) << ","
                         << op_name(static_cast<OpKind>(b)) << "," << first[a * kNumOps + b]
                         << "," << any[a * kNumOps + b] << "\n";
    }
    if (!quiet)
        std::printf("inspect: wrote op_probs.csv and cooccurrence.csv for %zu snapshots\n",
                    files.size());
}

struct SweepRow {
    double th = 0.0;
    double b = 0.0;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double runtime_sec = 0.0;
    bool ok = false;
    std::string error;
};

/// Grid over reward threshold/tolerance: one pretrain+probe per cell in
/// its own run directory; failures are recorded and the sweep continues.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& base, const std::vector<double>& th_list,
                                       const std::vector<double>& b_list, bool quiet = false) {
    if (th_list.empty() || b_list.empty())
        throw std::invalid_argument("sweep: th and b lists must be nonempty");
    fs::create_directories(base.out);
    std::vector<SweepRow> rows;
    for (double th : th_list)
        for (double b : b_list) {
            SweepRow row;
            row.th = th;
            row.b = b;
            RunConfig cell = base;
            cell.reward.th = th;
            cell.reward.b = b;
            char name[64];
            std::snprintf(name, sizeof(name), "th%g_b%g", th, b);
            cell.out = (fs::path(base.out) / name).string();
            const auto t0 = std::chrono::steady_clock::now();
            try {
                cmd_pretrain(cell, true);
                ProbeReport probe = cmd_probe(cell, cell.out, true);
                row.accuracy_mean = probe.mean;
                row.accuracy_std = probe.stddev;
                row.ok = true;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            row.runtime_sec =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            rows.push_back(row);
            if (!quiet)
                std::printf("sweep cell th=%g b=%g -> %s (%.1fs)\n", th, b,
                            row.ok ? std::to_string(row.accuracy_mean).c_str()
                                   : row.error.c_str(),
                            row.runtime_sec);
        }

    std::ofstream csv(fs::path(base.out) / "sweep_summary.csv", std::ios::trunc);
    csv << "th,b,accuracy_mean,accuracy_std,runtime_sec,status\n";
    for (const auto& row : rows)
        csv << row.th << "," << row.b << "," << row.accuracy_mean << "," << row.accuracy_std
            << "," << row.runtime_sec << "," << (row.ok ? "ok" : row.error) << "\n";
    return rows;
}

}  // namespace adaptaug
