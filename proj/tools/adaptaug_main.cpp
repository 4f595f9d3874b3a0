// adaptaug: adaptive augmentation policy search for contrastive learning.
//
// Subcommands:
//   pretrain  train an encoder with adaptive (or random) augmentation policies
//   probe     linear evaluation of a finished run's encoder
//   search    warmup, then a single policy search (snapshot to disk)
//   inspect   export per-op marginals and co-occurrence counts of stored policies
//   sweep     grid over reward threshold/tolerance, one pretrain+probe per cell

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adaptaug/runner.hpp"

namespace {

struct FlagBuffer {
    std::string config_file;
    std::vector<std::string> sets;
    std::string mode, dataset, data_dir, out;
    std::string seed;
    std::string epochs, warmup, k;
    std::string reward_th, reward_b, queue_cap, queue_p;
    std::string probe_seeds, samples;
};

void add_common_flags(CLI::App* cmd, FlagBuffer& f) {
    cmd->add_option("--config", f.config_file, "config file (flat key = value)");
    cmd->add_option("--set", f.sets, "extra overrides as key=value")->take_all();
    cmd->add_option("--mode", f.mode, "coviews | indepviews | random");
    cmd->add_option("--dataset", f.dataset, "synth | cifar10");
    cmd->add_option("--data-dir", f.data_dir, "directory with CIFAR-10 binary batches");
    cmd->add_option("--out", f.out, "run output directory");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--epochs", f.epochs, "total contrastive epochs");
    cmd->add_option("--warmup", f.warmup, "warmup epochs (random subpolicies)");
    cmd->add_option("--k", f.k, "policy search period in epochs");
    cmd->add_option("--reward-th", f.reward_th, "bounded reward threshold");
    cmd->add_option("--reward-b", f.reward_b, "bounded reward tolerance");
    cmd->add_option("--queue-cap", f.queue_cap, "policy queue capacity");
    cmd->add_option("--queue-p", f.queue_p, "policy queue base probability");
}

adaptaug::RunConfig resolve(const FlagBuffer& f) {
    adaptaug::RunConfig cfg;
    if (!f.config_file.empty()) adaptaug::config_apply_file(cfg, f.config_file);
    auto apply = [&](const std::string& key, const std::string& value) {
        if (!value.empty()) adaptaug::config_set(cfg, key, value);
    };
    apply("mode", f.mode);
    apply("dataset.source", f.dataset);
    apply("dataset.dir", f.data_dir);
    apply("out", f.out);
    apply("seed", f.seed);
    apply("contrastive.epochs", f.epochs);
    apply("contrastive.warmup_epochs", f.warmup);
    apply("contrastive.k", f.k);
    apply("reward.th", f.reward_th);
    apply("reward.b", f.reward_b);
    apply("queue.capacity", f.queue_cap);
    apply("queue.base_prob", f.queue_p);
    apply("probe.seeds", f.probe_seeds);
    apply("inspect.samples", f.samples);
    for (const std::string& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        adaptaug::config_set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw std::invalid_argument(what + " list is empty");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive augmentation policy search for contrastive learning"};
    app.require_subcommand(1);

    FlagBuffer f;
    std::string run_dir;
    std::string th_list = "1.1,1.3,1.5,1.7,1.9";
    std::string b_list = "1e-5,0.2,1e5";

    CLI::App* pretrain = app.add_subcommand("pretrain", "adaptive contrastive pretraining");
    add_common_flags(pretrain, f);

    CLI::App* probe = app.add_subcommand("probe", "linear evaluation of a run");
    add_common_flags(probe, f);
    probe->add_option("--run", run_dir, "run directory with encoder.ckpt")->required();
    probe->add_option("--probe-seeds", f.probe_seeds, "number of linear-head seeds");

    CLI::App* search = app.add_subcommand("search", "warmup then one policy search");
    add_common_flags(search, f);

    CLI::App* inspect = app.add_subcommand("inspect", "export policy statistics as CSV");
    add_common_flags(inspect, f);
    inspect->add_option("--run", run_dir, "run directory with snapshots/")->required();
    inspect->add_option("--samples", f.samples, "pairs sampled per snapshot");

    CLI::App* sweep = app.add_subcommand("sweep", "reward threshold/tolerance grid");
    add_common_flags(sweep, f);
    sweep->add_option("--th-list", th_list, "comma-separated thresholds");
    sweep->add_option("--b-list", b_list, "comma-separated tolerances");

    CLI11_PARSE(app, argc, argv);

    try {
        const adaptaug::RunConfig cfg = resolve(f);
        if (pretrain->parsed()) {
            adaptaug::cmd_pretrain(cfg);
        } else if (probe->parsed()) {
            adaptaug::cmd_probe(cfg, run_dir);
        } else if (search->parsed()) {
            adaptaug::cmd_search(cfg);
        } else if (inspect->parsed()) {
            adaptaug::cmd_inspect(cfg, run_dir);
        } else if (sweep->parsed()) {
            const auto rows = adaptaug::cmd_sweep(cfg, parse_double_list(th_list, "th"),
                                                  parse_double_list(b_list, "b"));
            std::printf("%8s %10s %14s %12s %12s\n", "th", "b", "accuracy", "std", "runtime_s");
            for (const auto& row : rows) {
                if (row.ok)
                    std::printf("%8g %10g %14.4f %12.4f %12.1f\n", row.th, row.b,
                                row.accuracy_mean, row.accuracy_std, row.runtime_sec);
                else
                    std::printf("%8g %10g %14s %12s %12.1f  (%s)\n", row.th, row.b, "-", "-",
                                row.runtime_sec, row.error.c_str());
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
