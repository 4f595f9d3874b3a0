#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaug/checkpoint.hpp"
#include "adaptaug/graph.hpp"
#include "adaptaug/image.hpp"
#include "adaptaug/rng.hpp"
#include "adaptaug/tensor.hpp"

namespace adaptaug {

struct EncoderConfig {
    int input_hw = 32;
    std::vector<int> channels = {16, 32, 64, 64};  // one conv-relu-pool block each
    int proj_hidden = 128;
    int proj_dim = 64;  // D

    int feature_dim() const {
        int hw = input_hw;
        for (std::size_t i = 0; i < channels.size(); ++i) hw /= 2;
        return channels.back() * hw * hw;
    }

    void validate() const {
        if (channels.empty()) throw std::invalid_argument("encoder: need at least one block");
        int hw = input_hw;
        for (std::size_t i = 0; i < channels.size(); ++i) {
            if (hw % 2 != 0)
                throw std::invalid_argument("encoder: input size " +
                                            std::to_string(input_hw) + " not divisible by 2^" +
                                            std::to_string(channels.size()));
            hw /= 2;
        }
        if (hw < 1) throw std::invalid_argument("encoder: too many blocks for input size");
    }
};

/// Small convolutional backbone (conv3x3-relu-maxpool blocks) with a
/// two-layer projection head. Probing uses the flattened pre-projection
/// features; the contrastive loss uses the projection output.
class Encoder {
public:
    Encoder(const EncoderConfig& cfg, Rng& init_rng) : cfg_(cfg) {
        cfg_.validate();
        int cin = 3;
        for (std::size_t i = 0; i < cfg_.channels.size(); ++i) {
            const int cout = cfg_.channels[i];
            const int fan_in = cin * 9;
            auto w = make_param("conv" + std::to_string(i + 1) + ".w", {fan_in, cout});
            auto b = make_param("conv" + std::to_string(i + 1) + ".b", {cout});
            w->fill_uniform(init_rng, -std::sqrt(2.0 / fan_in), std::sqrt(2.0 / fan_in));
            // nonzero bias init keeps degenerate (e.g. all-black) inputs away
            // from exactly-zero embeddings
            b->fill_uniform(init_rng, -1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
            conv_w_.push_back(w);
            conv_b_.push_back(b);
            cin = cout;
        }
        const int feat = cfg_.feature_dim();
        proj1_w_ = make_param("proj1.w", {feat, cfg_.proj_hidden});
        proj1_b_ = make_param("proj1.b", {cfg_.proj_hidden});
        proj2_w_ = make_param("proj2.w", {cfg_.proj_hidden, cfg_.proj_dim});
        proj2_b_ = make_param("proj2.b", {cfg_.proj_dim});
        proj1_w_->fill_uniform(init_rng, -std::sqrt(2.0 / feat), std::sqrt(2.0 / feat));
        proj2_w_->fill_uniform(init_rng, -std::sqrt(2.0 / cfg_.proj_hidden),
                               std::sqrt(2.0 / cfg_.proj_hidden));
        proj1_b_->fill_uniform(init_rng, -1.0 / std::sqrt(feat), 1.0 / std::sqrt(feat));
        proj2_b_->fill_uniform(init_rng, -1.0 / std::sqrt(cfg_.proj_hidden),
                               1.0 / std::sqrt(cfg_.proj_hidden));
    }

    const EncoderConfig& config() const { return cfg_; }

    std::vector<TensorPtr> params() const {
        std::vector<TensorPtr> ps;
        for (std::size_t i = 0; i < conv_w_.size(); ++i) {
            ps.push_back(conv_w_[i]);
            ps.push_back(conv_b_[i]);
        }
        ps.push_back(proj1_w_);
        ps.push_back(proj1_b_);
        ps.push_back(proj2_w_);
        ps.push_back(proj2_b_);
        return ps;
    }

    TensorPtr param(const std::string& name) const {
        for (const auto& p : params())
            if (p->name == name) return p;
        throw std::invalid_argument("encoder: no parameter named '" + name + "'");
    }

    /// Pixels scaled into [0,1], shaped [b, 3, hw, hw].
    TensorPtr images_to_tensor(const std::vector<Image>& images) const {
        const int hw = cfg_.input_hw;
        const int b = static_cast<int>(images.size());
        auto x = make_tensor({b, 3, hw, hw});
        for (int i = 0; i < b; ++i) {
            const Image& img = images[i];
            if (img.width != hw || img.height != hw)
                throw std::invalid_argument("encoder: image is " + std::to_string(img.width) +
                                            "x" + std::to_string(img.height) + ", expected " +
                                            std::to_string(hw) + "x" + std::to_string(hw));
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < hw; ++y)
                    for (int xx = 0; xx < hw; ++xx)
                        x->data[((static_cast<std::size_t>(i) * 3 + c) * hw + y) * hw + xx] =
                            img.at(xx, y, c) / 255.0;
        }
        return x;
    }

    /// Flattened backbone features [b, feature_dim].
    TensorPtr features(Graph& g, const std::vector<Image>& images) const {
        TensorPtr x = images_to_tensor(images);
        for (std::size_t i = 0; i < conv_w_.size(); ++i)
            x = g.maxpool2x2(g.relu(g.conv2d(x, conv_w_[i], conv_b_[i], 3, 3, 1)));
        return g.reshape(x, {x->shape[0], cfg_.feature_dim()});
    }

    /// Projection-head embeddings [b, proj_dim].
    TensorPtr embed(Graph& g, const std::vector<Image>& images) const {
        TensorPtr f = features(g, images);
        TensorPtr hdn = g.relu(g.add(g.matmul(f, proj1_w_), proj1_b_));
        return g.add(g.matmul(hdn, proj2_w_), proj2_b_);
    }

    /// Deterministic value-only forward; returns row-major [b x proj_dim].
    std::vector<double> encode(const std::vector<Image>& images) const {
        Graph g;
        return embed(g, images)->data;
    }

    /// Order-sensitive digest of all parameter values, for cheap
    /// "was anything mutated" assertions.
    double param_checksum() const {
        double acc = 0.0;
        double k = 1.0;
        for (const auto& p : params())
            for (double v : p->data) {
                acc += v * k;
                k = (k >= 1024.0) ? 1.0 : k * 1.0000001;
            }
        return acc;
    }

    void save(const std::string& path) const {
        Checkpoint ck;
        ck.meta["kind"] = "encoder";
        ck.meta["input_hw"] = std::to_string(cfg_.input_hw);
        std::string chans;
        for (std::size_t i = 0; i < cfg_.channels.size(); ++i)
            chans += (i ? "," : "") + std::to_string(cfg_.channels[i]);
        ck.meta["channels"] = chans;
        ck.meta["proj_hidden"] = std::to_string(cfg_.proj_hidden);
        ck.meta["proj_dim"] = std::to_string(cfg_.proj_dim);
        for (const auto& p : params()) ck.put(*p);
        ck.save(path);
    }

    static Encoder load(const std::string& path) {
        Checkpoint ck = Checkpoint::load(path);
        if (ck.meta_at("kind") != "encoder")
            throw std::runtime_error("'" + path + "' is not an encoder checkpoint");
        EncoderConfig cfg;
        cfg.input_hw = std::stoi(ck.meta_at("input_hw"));
        cfg.proj_hidden = std::stoi(ck.meta_at("proj_hidden"));
        cfg.proj_dim = std::stoi(ck.meta_at("proj_dim"));
        cfg.channels.clear();
        std::string chans = ck.meta_at("channels");
        std::size_t pos = 0;
        while (pos < chans.size()) {
            std::size_t comma = chans.find(',', pos);
            if (comma == std::string::npos) comma = chans.size();
            cfg.channels.push_back(std::stoi(chans.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        Rng dummy(0);
        Encoder enc(cfg, dummy);
        for (const auto& p : enc.params()) {
            const Tensor& stored = ck.get(p->name);
            if (stored.shape != p->shape)
                throw std::runtime_error("encoder tensor '" + p->name + "' has shape " +
                                         shape_str(stored.shape) + ", expected " +
                                         shape_str(p->shape));
            p->data = stored.data;
        }
        return enc;
    }

private:
    EncoderConfig cfg_;
    std::vector<TensorPtr> conv_w_, conv_b_;
    TensorPtr proj1_w_, proj1_b_, proj2_w_, proj2_b_;
};

}  // namespace adaptaug
