#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/augment.hpp"
#include "adaptaug/contrastive.hpp"
#include "adaptaug/policy.hpp"
#include "adaptaug/policy_queue.hpp"
#include "adaptaug/ppo.hpp"
#include "adaptaug/reward.hpp"

namespace adaptaug {

/// Everything a run needs. Defaults live in the member initializers; a
/// config file overrides defaults; CLI flags override the file.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string out = "runs/run";
    std::string mode = "coviews";  // coviews | indepviews | random

    std::string dataset_source = "synth";  // synth | cifar10
    std::string data_dir = ".";
    double data_fraction = 1.0;
    int synth_n = 500;
    int synth_classes = 2;

    ContrastiveConfig contrastive;
    RewardConfig reward;
    PpoConfig ppo;
    QueueConfig queue;
    PolicyNetConfig policy;
    AugmentConfig augment;
    ProbeConfig probe;
    int probe_seeds = 5;
    int inspect_samples = 10000;

    RunMode run_mode() const { return run_mode_from_string(mode); }

    void validate() const {
        run_mode_from_string(mode);
        if (dataset_source != "synth" && dataset_source != "cifar10")
            throw std::invalid_argument("config: dataset.source must be synth or cifar10");
        contrastive.validate();
        reward.validate();
        ppo.validate();
        queue.validate();
    }
};

namespace config_detail {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad number '" + v + "' for key " + key);
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw std::invalid_argument("config: bad integer '" + v + "' for key " + key);
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad bool '" + v + "' for key " + key);
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(static_cast<int>(parse_int(key, item)));
    if (out.empty()) throw std::invalid_argument("config: empty list for key " + key);
    return out;
}

inline std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

struct Entry {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

inline const std::map<std::string, Entry>& registry() {
    static const std::map<std::string, Entry> reg = [] {
        std::map<std::string, Entry> r;
        using IntAcc = int& (*)(RunConfig&);
        using DoubleAcc = double& (*)(RunConfig&);
        using BoolAcc = bool& (*)(RunConfig&);
        using StrAcc = std::string& (*)(RunConfig&);
        auto add_int = [&r](const std::string& key, IntAcc acc) {
            r[key] = {[key, acc](RunConfig& c, const std::string& v) {
                          acc(c) = static_cast<int>(parse_int(key, v));
                      },
                      [acc](const RunConfig& c) {
                          return std::to_string(acc(const_cast<RunConfig&>(c)));
                      }};
        };
        auto add_double = [&r](const std::string& key, DoubleAcc acc) {
            r[key] = {[key, acc](RunConfig& c, const std::string& v) {
                          acc(c) = parse_double(key, v);
                      },
                      [acc](const RunConfig& c) {
                          return fmt_double(acc(const_cast<RunConfig&>(c)));
                      }};
        };
        auto add_bool = [&r](const std::string& key, BoolAcc acc) {
            r[key] = {[key, acc](RunConfig& c, const std::string& v) {
                          acc(c) = parse_bool(key, v);
                      },
                      [acc](const RunConfig& c) {
                          return acc(const_cast<RunConfig&>(c)) ? "true" : "false";
                      }};
        };
        auto add_str = [&r](const std::string& key, StrAcc acc) {
            r[key] = {[acc](RunConfig& c, const std::string& v) { acc(c) = v; },
                      [acc](const RunConfig& c) { return acc(const_cast<RunConfig&>(c)); }};
        };

        r["seed"] = {[](RunConfig& c, const std::string& v) {
                         c.seed = static_cast<std::uint64_t>(parse_int("seed", v));
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }};
        add_str("out", [](RunConfig& c) -> std::string& { return c.out; });
        r["mode"] = {[](RunConfig& c, const std::string& v) {
                         run_mode_from_string(v);  // reject unknown values early
                         c.mode = v;
                     },
                     [](const RunConfig& c) { return c.mode; }};

        add_str("dataset.source", [](RunConfig& c) -> std::string& { return c.dataset_source; });
        add_str("dataset.dir", [](RunConfig& c) -> std::string& { return c.data_dir; });
        add_double("dataset.fraction", [](RunConfig& c) -> double& { return c.data_fraction; });
        add_int("dataset.synth_n", [](RunConfig& c) -> int& { return c.synth_n; });
        add_int("dataset.synth_classes", [](RunConfig& c) -> int& { return c.synth_classes; });

        add_double("contrastive.temperature",
                   [](RunConfig& c) -> double& { return c.contrastive.temperature; });
        add_int("contrastive.batch", [](RunConfig& c) -> int& { return c.contrastive.batch; });
        add_int("contrastive.epochs", [](RunConfig& c) -> int& { return c.contrastive.epochs; });
        add_int("contrastive.warmup_epochs",
                [](RunConfig& c) -> int& { return c.contrastive.warmup_epochs; });
        add_int("contrastive.k", [](RunConfig& c) -> int& { return c.contrastive.k; });
        add_double("contrastive.lr", [](RunConfig& c) -> double& { return c.contrastive.lr; });
        add_int("contrastive.lr_warmup_epochs",
                [](RunConfig& c) -> int& { return c.contrastive.lr_warmup_epochs; });
        add_double("contrastive.momentum",
                   [](RunConfig& c) -> double& { return c.contrastive.momentum; });
        add_double("contrastive.weight_decay",
                   [](RunConfig& c) -> double& { return c.contrastive.weight_decay; });

        add_int("encoder.input_hw",
                [](RunConfig& c) -> int& { return c.contrastive.encoder.input_hw; });
        r["encoder.channels"] = {
            [](RunConfig& c, const std::string& v) {
                c.contrastive.encoder.channels = parse_int_list("encoder.channels", v);
            },
            [](const RunConfig& c) { return fmt_int_list(c.contrastive.encoder.channels); }};
        add_int("encoder.proj_hidden",
                [](RunConfig& c) -> int& { return c.contrastive.encoder.proj_hidden; });
        add_int("encoder.proj_dim",
                [](RunConfig& c) -> int& { return c.contrastive.encoder.proj_dim; });

        add_double("reward.th", [](RunConfig& c) -> double& { return c.reward.th; });
        add_double("reward.b", [](RunConfig& c) -> double& { return c.reward.b; });

        add_int("ppo.epochs", [](RunConfig& c) -> int& { return c.ppo.ppo_epochs; });
        add_int("ppo.samples_per_epoch",
                [](RunConfig& c) -> int& { return c.ppo.samples_per_epoch; });
        add_int("ppo.updates_per_epoch",
                [](RunConfig& c) -> int& { return c.ppo.updates_per_epoch; });
        add_int("ppo.update_batch", [](RunConfig& c) -> int& { return c.ppo.update_batch; });
        add_double("ppo.entropy_coef",
                   [](RunConfig& c) -> double& { return c.ppo.entropy_coef; });
        add_double("ppo.clip", [](RunConfig& c) -> double& { return c.ppo.clip; });
        add_double("ppo.lr", [](RunConfig& c) -> double& { return c.ppo.lr; });
        add_int("ppo.collection_batch",
                [](RunConfig& c) -> int& { return c.ppo.collection_batch; });
        add_bool("ppo.warm_start", [](RunConfig& c) -> bool& { return c.ppo.warm_start; });

        add_int("queue.capacity", [](RunConfig& c) -> int& { return c.queue.capacity; });
        add_double("queue.base_prob",
                   [](RunConfig& c) -> double& { return c.queue.base_prob; });

        add_int("policy.hidden", [](RunConfig& c) -> int& { return c.policy.hidden; });
        add_int("policy.embed", [](RunConfig& c) -> int& { return c.policy.embed; });
        add_int("policy.n_tau", [](RunConfig& c) -> int& { return c.policy.n_tau; });

        add_bool("augment.signed_bins",
                 [](RunConfig& c) -> bool& { return c.augment.signed_bins; });

        add_int("probe.epochs", [](RunConfig& c) -> int& { return c.probe.epochs; });
        add_int("probe.batch", [](RunConfig& c) -> int& { return c.probe.batch; });
        add_double("probe.lr", [](RunConfig& c) -> double& { return c.probe.lr; });
        add_double("probe.momentum", [](RunConfig& c) -> double& { return c.probe.momentum; });
        add_double("probe.holdout", [](RunConfig& c) -> double& { return c.probe.holdout; });
        add_int("probe.crop_pad", [](RunConfig& c) -> int& { return c.probe.crop_pad; });
        add_int("probe.seeds", [](RunConfig& c) -> int& { return c.probe_seeds; });
        add_int("inspect.samples", [](RunConfig& c) -> int& { return c.inspect_samples; });
        return r;
    }();
    return reg;
}

}  // namespace config_detail

inline void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& reg = config_detail::registry();
    auto it = reg.find(key);
    if (it == reg.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

/// Flat `key = value` text, '#' comments, applied over the current values.
inline void config_apply_file(RunConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " of '" +
                                        path + "' is not 'key = value'");
        config_set(cfg, strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
    }
}

/// All keys with their current values, sorted, in the same format
/// config_apply_file parses. Doubles round-trip exactly.
inline std::string config_resolved(const RunConfig& cfg) {
    std::string out;
    for (const auto& [key, entry] : config_detail::registry())
        out += key + " = " + entry.get(cfg) + "\n";
    return out;
}

}  // namespace adaptaug
