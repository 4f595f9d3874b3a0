#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "adaptaug/augment.hpp"
#include "adaptaug/checkpoint.hpp"
#include "adaptaug/graph.hpp"
#include "adaptaug/rng.hpp"
#include "adaptaug/tensor.hpp"

namespace adaptaug {

enum class PolicyMode { CoViews, IndepViews };

inline const char* to_string(PolicyMode m) {
    return m == PolicyMode::CoViews ? "coviews" : "indepviews";
}
inline PolicyMode policy_mode_from_string(const std::string& s) {
    if (s == "coviews") return PolicyMode::CoViews;
    if (s == "indepviews") return PolicyMode::IndepViews;
    throw std::invalid_argument("unknown policy mode '" + s + "'");
}

struct PolicyNetConfig {
    int hidden = 64;
    int embed = 16;
    int n_tau = 2;
    PolicyMode mode = PolicyMode::CoViews;
};

struct ActionStep {
    int op = 0;
    int bin = 0;
};
using ActionHistory = std::vector<ActionStep>;

class PolicyNet;

/// Frozen copy of a trained policy: immutable parameters plus the mode and
/// creation epoch. Sampling from a snapshot is pure.
struct PolicySnapshot {
    PolicyNetConfig cfg;
    int epoch = 0;
    std::uint64_t id = 0;
    std::shared_ptr<const PolicyNet> net;

    void save(const std::string& path) const;
    static PolicySnapshot load(const std::string& path);
};

/// One-layer LSTM with an operation head (16 logits) and a magnitude head
/// (11 logits). A subpolicy pair is sampled over 2*n_tau steps; each step
/// samples an operation and a bin from the two softmax heads and feeds
/// their embeddings to the next step. Under CoViews the recurrent state
/// and action history carry from view 1 into view 2; under IndepViews they
/// are reset so the two views are generated independently.
class PolicyNet {
public:
    PolicyNet(const PolicyNetConfig& cfg, Rng& init_rng) : cfg_(cfg) {
        const int e2 = 2 * cfg.embed;
        const int in = e2 + cfg.hidden;
        op_embed_ = make_param("op_embed", {kNumOps, cfg.embed});
        mag_embed_ = make_param("mag_embed", {kNumMagnitudeBins, cfg.embed});
        start_token_ = make_param("start_token", {1, e2});
        lstm_w_ = make_param("lstm.w", {in, 4 * cfg.hidden});
        lstm_b_ = make_param("lstm.b", {4 * cfg.hidden});
        op_w_ = make_param("op_head.w", {cfg.hidden, kNumOps});
        op_b_ = make_param("op_head.b", {kNumOps});
        mag_w_ = make_param("mag_head.w", {cfg.hidden, kNumMagnitudeBins});
        mag_b_ = make_param("mag_head.b", {kNumMagnitudeBins});

        op_embed_->fill_uniform(init_rng, -0.5, 0.5);
        mag_embed_->fill_uniform(init_rng, -0.5, 0.5);
        start_token_->fill_uniform(init_rng, -0.5, 0.5);
        // input rows: small uniform; recurrent rows: orthogonal per gate
        const double s = 1.0 / std::sqrt(static_cast<double>(in));
        for (int r = 0; r < e2; ++r)
            for (int j = 0; j < 4 * cfg.hidden; ++j)
                lstm_w_->at(r, j) = init_rng.uniform(-s, s);
        for (int gate = 0; gate < 4; ++gate) {
            auto q = orthogonal(cfg.hidden, init_rng);
            for (int r = 0; r < cfg.hidden; ++r)
                for (int j = 0; j < cfg.hidden; ++j)
                    lstm_w_->at(e2 + r, gate * cfg.hidden + j) = q[r][j];
        }
        // near-uniform initial policy
        op_w_->fill_uniform(init_rng, -0.01, 0.01);
        mag_w_->fill_uniform(init_rng, -0.01, 0.01);
    }

    const PolicyNetConfig& config() const { return cfg_; }
    PolicyMode mode() const { return cfg_.mode; }
    int n_tau() const { return cfg_.n_tau; }

    std::vector<TensorPtr> params() const {
        return {op_embed_, mag_embed_, start_token_, lstm_w_, lstm_b_,
                op_w_,     op_b_,      mag_w_,       mag_b_};
    }

    TensorPtr param(const std::string& name) const {
        for (const auto& p : params())
            if (p->name == name) return p;
        throw std::invalid_argument("policy: no parameter named '" + name + "'");
    }

    struct SampleBatch {
        std::vector<SubpolicyPair> pairs;
        std::vector<double> log_probs;
        std::vector<double> entropies;
    };

    SampleBatch sample_pairs(int count, Rng& rng) const {
        Graph g;
        RunOut out = run(g, count, nullptr, &rng);
        SampleBatch batch;
        batch.pairs = std::move(out.pairs);
        batch.log_probs.assign(out.log_prob->data.begin(), out.log_prob->data.end());
        batch.entropies.assign(out.entropy->data.begin(), out.entropy->data.end());
        return batch;
    }

    std::tuple<SubpolicyPair, double, double> sample_pair(Rng& rng) const {
        SampleBatch b = sample_pairs(1, rng);
        return {std::move(b.pairs[0]), b.log_probs[0], b.entropies[0]};
    }

    /// Teacher-forced recomputation of the sampling distribution's log
    /// probability and entropy for a given pair under current parameters.
    std::pair<double, double> log_prob_of(const SubpolicyPair& pair) const {
        Graph g;
        std::vector<SubpolicyPair> one{pair};
        RunOut out = run(g, 1, &one, nullptr);
        return {out.log_prob->data[0], out.entropy->data[0]};
    }

    struct Eval {
        TensorPtr log_prob;  // [batch, 1]
        TensorPtr entropy;   // [batch, 1]
    };

    /// Differentiable teacher-forced evaluation of a batch of pairs;
    /// the returned tensors live on `g` for backprop into the parameters.
    Eval evaluate(Graph& g, const std::vector<SubpolicyPair>& pairs) const {
        RunOut out = run(g, static_cast<int>(pairs.size()), &pairs, nullptr);
        return {out.log_prob, out.entropy};
    }

    /// Operation logits of the first view-2 step after teacher-forcing the
    /// given view-1 history. Under IndepViews the result is bitwise
    /// independent of the history because state and history are reset.
    std::vector<double> view2_logits(const ActionHistory& history) const {
        if (static_cast<int>(history.size()) != cfg_.n_tau)
            throw std::invalid_argument("view2_logits: history length " +
                                        std::to_string(history.size()) + " != n_tau " +
                                        std::to_string(cfg_.n_tau));
        for (const auto& a : history) check_action(a.op, a.bin);
        Graph g;
        TensorPtr h = make_tensor({1, cfg_.hidden});
        TensorPtr c = make_tensor({1, cfg_.hidden});
        for (int t = 0; t < cfg_.n_tau; ++t) {
            TensorPtr x = (t == 0) ? g.repeat_rows(start_token_, 1)
                                   : action_input(g, {history[t - 1].op}, {history[t - 1].bin});
            auto [h2, c2, opl, magl] = lstm_step(g, x, h, c);
            h = h2;
            c = c2;
        }
        TensorPtr x;
        if (cfg_.mode == PolicyMode::IndepViews) {
            h = make_tensor({1, cfg_.hidden});
            c = make_tensor({1, cfg_.hidden});
            x = g.repeat_rows(start_token_, 1);
        } else {
            x = action_input(g, {history.back().op}, {history.back().bin});
        }
        auto [h2, c2, opl, magl] = lstm_step(g, x, h, c);
        return opl->data;
    }

    PolicyNet clone() const {
        PolicyNet copy(*this);
        copy.op_embed_ = clone_tensor(op_embed_);
        copy.mag_embed_ = clone_tensor(mag_embed_);
        copy.start_token_ = clone_tensor(start_token_);
        copy.lstm_w_ = clone_tensor(lstm_w_);
        copy.lstm_b_ = clone_tensor(lstm_b_);
        copy.op_w_ = clone_tensor(op_w_);
        copy.op_b_ = clone_tensor(op_b_);
        copy.mag_w_ = clone_tensor(mag_w_);
        copy.mag_b_ = clone_tensor(mag_b_);
        return copy;
    }

    PolicySnapshot snapshot(int epoch, std::uint64_t id = 0) const {
        return PolicySnapshot{cfg_, epoch, id, std::make_shared<const PolicyNet>(clone())};
    }

    static PolicyNet restore(const PolicySnapshot& snap) {
        if (!snap.net) throw std::invalid_argument("restore: empty snapshot");
        return snap.net->clone();
    }

    static PolicyNet restore(const PolicySnapshot& snap, PolicyMode expected_mode) {
        if (snap.cfg.mode != expected_mode)
            throw std::invalid_argument(std::string("restore: snapshot mode ") +
                                        to_string(snap.cfg.mode) + " does not match expected " +
                                        to_string(expected_mode));
        return restore(snap);
    }

private:
    friend struct PolicySnapshot;

    static std::vector<std::vector<double>> orthogonal(int n, Rng& rng) {
        // Gram-Schmidt on a random Gaussian matrix
        std::vector<std::vector<double>> q(n, std::vector<double>(n));
        for (auto& row : q)
            for (double& v : row) v = rng.normal();
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < i; ++j) {
                double dot = 0.0;
                for (int k = 0; k < n; ++k) dot += q[i][k] * q[j][k];
                for (int k = 0; k < n; ++k) q[i][k] -= dot * q[j][k];
            }
            double norm = 0.0;
            for (int k = 0; k < n; ++k) norm += q[i][k] * q[i][k];
            norm = std::sqrt(norm);
            if (norm < 1e-12) {  // degenerate draw; fall back to a unit vector
                for (int k = 0; k < n; ++k) q[i][k] = (k == i) ? 1.0 : 0.0;
            } else {
                for (int k = 0; k < n; ++k) q[i][k] /= norm;
            }
        }
        return q;
    }

    static TensorPtr clone_tensor(const TensorPtr& t) {
        auto c = make_tensor(t->shape, t->data);
        c->name = t->name;
        return c;
    }

    void check_action(int op, int bin) const {
        if (op < 0 || op >= kNumOps)
            throw std::invalid_argument("policy: op index " + std::to_string(op) +
                                        " out of range");
        if (bin < 0 || bin >= kNumMagnitudeBins)
            throw std::invalid_argument("policy: magnitude bin " + std::to_string(bin) +
                                        " out of range");
    }

    TensorPtr action_input(Graph& g, const std::vector<int>& ops,
                           const std::vector<int>& bins) const {
        return g.concat_cols(g.embed(op_embed_, ops), g.embed(mag_embed_, bins));
    }

    std::tuple<TensorPtr, TensorPtr, TensorPtr, TensorPtr> lstm_step(Graph& g, TensorPtr x,
                                                                     TensorPtr h,
                                                                     TensorPtr c) const {
        const int hs = cfg_.hidden;
        auto z = g.add(g.matmul(g.concat_cols(x, h), lstm_w_), lstm_b_);
        auto gi = g.sigmoid(g.slice_cols(z, 0, hs));
        auto gf = g.sigmoid(g.slice_cols(z, hs, 2 * hs));
        auto gc = g.tanh(g.slice_cols(z, 2 * hs, 3 * hs));
        auto go = g.sigmoid(g.slice_cols(z, 3 * hs, 4 * hs));
        auto c2 = g.add(g.mul(gf, c), g.mul(gi, gc));
        auto h2 = g.mul(go, g.tanh(c2));
        auto op_logits = g.add(g.matmul(h2, op_w_), op_b_);
        auto mag_logits = g.add(g.matmul(h2, mag_w_), mag_b_);
        return {h2, c2, op_logits, mag_logits};
    }

    struct RunOut {
        std::vector<SubpolicyPair> pairs;
        TensorPtr log_prob;
        TensorPtr entropy;
    };

    /// Shared core of sampling and teacher-forced evaluation. The graph op
    /// sequence is identical in both modes, so recomputing the log
    /// probability of a freshly sampled pair reproduces it bitwise.
    RunOut run(Graph& g, int batch, const std::vector<SubpolicyPair>* forced, Rng* rng) const {
        if (batch <= 0) throw std::invalid_argument("policy: batch must be positive");
        if (forced) {
            if (static_cast<int>(forced->size()) != batch)
                throw std::invalid_argument("policy: forced pair count mismatch");
            for (const auto& p : *forced) {
                if (static_cast<int>(p.view1.size()) != cfg_.n_tau ||
                    static_cast<int>(p.view2.size()) != cfg_.n_tau)
                    throw std::invalid_argument("policy: pair has wrong subpolicy length");
                for (const auto& s : p.view1) check_action(static_cast<int>(s.op), s.magnitude_bin);
                for (const auto& s : p.view2) check_action(static_cast<int>(s.op), s.magnitude_bin);
            }
        }

        const int steps = 2 * cfg_.n_tau;
        TensorPtr h = make_tensor({batch, cfg_.hidden});
        TensorPtr c = make_tensor({batch, cfg_.hidden});
        TensorPtr lp, ent;
        std::vector<std::vector<ActionStep>> taken(batch);
        std::vector<int> prev_ops, prev_bins;

        for (int t = 0; t < steps; ++t) {
            TensorPtr x;
            const bool reset = (t == 0) || (t == cfg_.n_tau && cfg_.mode == PolicyMode::IndepViews);
            if (reset) {
                x = g.repeat_rows(start_token_, batch);
                if (t != 0) {
                    h = make_tensor({batch, cfg_.hidden});
                    c = make_tensor({batch, cfg_.hidden});
                }
            } else {
                x = action_input(g, prev_ops, prev_bins);
            }
            auto [h2, c2, op_logits, mag_logits] = lstm_step(g, x, h, c);
            h = h2;
            c = c2;

            auto op_probs = g.softmax(op_logits);
            auto op_logp = g.log(op_probs);
            std::vector<int> ops(batch);
            for (int i = 0; i < batch; ++i)
                ops[i] = forced ? forced_action(*forced, i, t).op
                                : categorical(*op_probs, i, *rng);
            auto lp_op = g.select_cols(op_logp, ops);
            auto ent_op = g.scale(g.row_sum(g.mul(op_probs, op_logp)), -1.0);

            auto mag_probs = g.softmax(mag_logits);
            auto mag_logp = g.log(mag_probs);
            std::vector<int> bins(batch);
            for (int i = 0; i < batch; ++i)
                bins[i] = forced ? forced_action(*forced, i, t).bin
                                 : categorical(*mag_probs, i, *rng);
            auto lp_mag = g.select_cols(mag_logp, bins);
            auto ent_mag = g.scale(g.row_sum(g.mul(mag_probs, mag_logp)), -1.0);

            auto step_lp = g.add(lp_op, lp_mag);
            auto step_ent = g.add(ent_op, ent_mag);
            lp = lp ? g.add(lp, step_lp) : step_lp;
            ent = ent ? g.add(ent, step_ent) : step_ent;

            for (int i = 0; i < batch; ++i) taken[i].push_back({ops[i], bins[i]});
            prev_ops = std::move(ops);
            prev_bins = std::move(bins);
        }

        RunOut out;
        out.log_prob = lp;
        out.entropy = ent;
        out.pairs.reserve(batch);
        for (int i = 0; i < batch; ++i) {
            SubpolicyPair pair;
            for (int t = 0; t < cfg_.n_tau; ++t)
                pair.view1.push_back(
                    {static_cast<OpKind>(taken[i][t].op), taken[i][t].bin, kApplyProb});
            for (int t = cfg_.n_tau; t < steps; ++t)
                pair.view2.push_back(
                    {static_cast<OpKind>(taken[i][t].op), taken[i][t].bin, kApplyProb});
            out.pairs.push_back(std::move(pair));
        }
        return out;
    }

    static ActionStep forced_action(const std::vector<SubpolicyPair>& pairs, int row, int t) {
        const auto& pair = pairs[row];
        const int n = static_cast<int>(pair.view1.size());
        const TransformStep& s = (t < n) ? pair.view1[t] : pair.view2[t - n];
        return {static_cast<int>(s.op), s.magnitude_bin};
    }

    static int categorical(const Tensor& probs, int row, Rng& rng) {
        const int n = probs.shape[1];
        const double* p = probs.data.data() + static_cast<std::size_t>(row) * n;
        const double u = rng.uniform();
        double cum = 0.0;
        for (int j = 0; j < n; ++j) {
            cum += p[j];
            if (u < cum) return j;
        }
        return n - 1;
    }

    PolicyNetConfig cfg_;
    TensorPtr op_embed_, mag_embed_, start_token_;
    TensorPtr lstm_w_, lstm_b_;
    TensorPtr op_w_, op_b_, mag_w_, mag_b_;
};

inline void PolicySnapshot::save(const std::string& path) const {
    if (!net) throw std::logic_error("snapshot: nothing to save");
    Checkpoint ck;
    ck.meta["kind"] = "policy_snapshot";
    ck.meta["mode"] = to_string(cfg.mode);
    ck.meta["n_tau"] = std::to_string(cfg.n_tau);
    ck.meta["hidden"] = std::to_string(cfg.hidden);
    ck.meta["embed"] = std::to_string(cfg.embed);
    ck.meta["epoch"] = std::to_string(epoch);
    ck.meta["id"] = std::to_string(id);
    for (const auto& p : net->params()) ck.put(*p);
    ck.save(path);
}

inline PolicySnapshot PolicySnapshot::load(const std::string& path) {
    Checkpoint ck = Checkpoint::load(path);
    if (ck.meta_at("kind") != "policy_snapshot")
        throw std::runtime_error("'" + path + "' is not a policy snapshot");
    PolicySnapshot snap;
    snap.cfg.mode = policy_mode_from_string(ck.meta_at("mode"));
    snap.cfg.n_tau = std::stoi(ck.meta_at("n_tau"));
    snap.cfg.hidden = std::stoi(ck.meta_at("hidden"));
    snap.cfg.embed = std::stoi(ck.meta_at("embed"));
    snap.epoch = std::stoi(ck.meta_at("epoch"));
    snap.id = std::stoull(ck.meta_at("id"));
    Rng dummy(0);
    auto net = std::make_shared<PolicyNet>(snap.cfg, dummy);
    for (const auto& p : net->params()) {
        const Tensor& stored = ck.get(p->name);
        if (stored.shape != p->shape)
            throw std::runtime_error("snapshot tensor '" + p->name + "' has shape " +
                                     shape_str(stored.shape) + ", expected " +
                                     shape_str(p->shape));
        p->data = stored.data;
    }
    snap.net = net;
    return snap;
}

}  // namespace adaptaug
