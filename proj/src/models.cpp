#include "voxqa/models.hpp"

#include "voxqa/rng.hpp"

namespace voxqa {

const char* head_name(HeadId id) {
    switch (id) {
        case HeadId::Side2: return "Side2";
        case HeadId::Side3: return "Side3";
        case HeadId::Side4: return "Side4";
        case HeadId::Side5: return "Side5";
        case HeadId::Final: return "Final";
        case HeadId::GTruth: return "GT";
    }
    return "?";
}

int head_code(HeadId id) {
    switch (id) {
        case HeadId::GTruth: return 0;
        case HeadId::Final: return -1;
        case HeadId::Side2: return -2;
        case HeadId::Side3: return -3;
        case HeadId::Side4: return -4;
        case HeadId::Side5: return -5;
    }
    return 0;
}

namespace {

void validate_config(const NetConfig& cfg) {
    if (cfg.num_stages != 4)
        throw ValueError("model config: num_stages must be 4 (heads Side2..Side5), got " +
                         std::to_string(cfg.num_stages));
    if (cfg.base_channels == 0) throw ValueError("model config: base_channels must be > 0");
    if (cfg.blocks_per_stage == 0)
        throw ValueError("model config: blocks_per_stage must be > 0");
    if (cfg.in_channels == 0) throw ValueError("model config: in_channels must be > 0");
    if (cfg.out_classes < 2) throw ValueError("model config: out_classes must be >= 2");
    if (cfg.rank != 2 && cfg.rank != 3)
        throw ValueError("model config: rank must be 2 or 3");
}

nn::Shape spatial_shape(int rank, std::size_t k) {
    return rank == 3 ? nn::Shape{k, k, k} : nn::Shape{k, k};
}

} // namespace

nn::Tensor<float> SegNet::register_param(const std::string& name, nn::Tensor<float> t,
                                         bool trainable) {
    t.set_requires_grad(trainable);
    params_.push_back({name, t, trainable});
    return t;
}

SegNet::BatchNorm SegNet::make_bn(const std::string& name, std::size_t channels) {
    BatchNorm bn;
    bn.gamma = register_param(name + ".gamma", nn::Tensor<float>::filled({channels}, 1.0f), true);
    bn.beta = register_param(name + ".beta", nn::Tensor<float>::zeros({channels}), true);
    bn.run_mean = register_param(name + ".run_mean", nn::Tensor<float>::zeros({channels}), false);
    bn.run_var = register_param(name + ".run_var", nn::Tensor<float>::filled({channels}, 1.0f),
                                false);
    return bn;
}

SegNet::ConvLayer SegNet::make_conv(const std::string& name, std::size_t cin, std::size_t cout,
                                    std::size_t k, std::int64_t stride, std::int64_t pad,
                                    bool bias, Rng& rng) {
    ConvLayer layer;
    nn::Shape ws = {cout, cin};
    for (const auto s : spatial_shape(cfg_.rank, k)) ws.push_back(s);
    layer.w = register_param(name + ".w", nn::he_normal<float>(ws, rng), true);
    if (bias) layer.b = register_param(name + ".b", nn::Tensor<float>::zeros({cout}), true);
    layer.stride = stride;
    layer.pad = pad;
    return layer;
}

nn::Tensor<float> SegNet::BatchNorm::operator()(const nn::Tensor<float>& x, bool training) {
    if (training) {
        std::vector<float> bm, bv;
        auto y = nn::batch_norm_train(x, gamma, beta, eps, &bm, &bv);
        auto& rm = run_mean.values();
        auto& rv = run_var.values();
        for (std::size_t i = 0; i < rm.size(); ++i) {
            rm[i] = momentum * rm[i] + (1.0f - momentum) * bm[i];
            rv[i] = momentum * rv[i] + (1.0f - momentum) * bv[i];
        }
        return y;
    }
    return nn::batch_norm_eval(x, gamma, beta, run_mean.values(), run_var.values(), eps);
}

SegNet::SegNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    validate_config(cfg_);
    Rng rng(seed);

    const std::size_t k_classes = cfg_.out_classes;
    std::vector<std::size_t> ch(cfg_.num_stages);
    for (std::size_t s = 0; s < cfg_.num_stages; ++s) ch[s] = cfg_.base_channels << s;

    stem_ = make_conv("stem", cfg_.in_channels, ch[0], 3, 1, 1, false, rng);

    stages_.resize(cfg_.num_stages);
    for (std::size_t s = 0; s < cfg_.num_stages; ++s) {
        if (s > 0) {
            downs_.push_back(make_conv("down" + std::to_string(s), ch[s - 1], ch[s], 3, 2, 1,
                                       false, rng));
        }
        for (std::size_t b = 0; b < cfg_.blocks_per_stage; ++b) {
            const std::string base =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            ResBlock blk;
            blk.bn1 = make_bn(base + ".bn1", ch[s]);
            blk.conv1 = make_conv(base + ".conv1", ch[s], ch[s], 3, 1, 1, false, rng);
            blk.bn2 = make_bn(base + ".bn2", ch[s]);
            blk.conv2 = make_conv(base + ".conv2", ch[s], ch[s], 3, 1, 1, false, rng);
            stages_[s].push_back(std::move(blk));
        }
    }

    for (std::size_t s = 0; s < cfg_.num_stages; ++s) {
        const std::string base = "head" + std::to_string(s + 2); // Side2..Side5
        SideHead head;
        head.bn = make_bn(base + ".bn", ch[s]);
        head.factor = std::int64_t(1) << s;
        nn::Shape ws = {ch[s], k_classes};
        for (const auto f : spatial_shape(cfg_.rank, static_cast<std::size_t>(head.factor)))
            ws.push_back(f);
        head.tconv_w = register_param(base + ".up.w", nn::he_normal<float>(ws, rng), true);
        heads_.push_back(std::move(head));
    }

    fuse_ = make_conv("fuse", cfg_.num_stages * k_classes, k_classes, 1, 1, 0, true, rng);
}

std::size_t SegNet::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) n += p.value.size();
    return n;
}

nn::Tensor<float> SegNet::run_block(ResBlock& blk, const nn::Tensor<float>& x, bool training) {
    // pre-activation residual unit: x + conv(relu(bn(conv(relu(bn(x))))))
    auto h = blk.conv1(nn::relu(blk.bn1(x, training)));
    h = blk.conv2(nn::relu(blk.bn2(h, training)));
    return nn::add(x, h);
}

std::vector<std::pair<HeadId, nn::Tensor<float>>> SegNet::forward_all_heads(
    const nn::Tensor<float>& x, bool training) {
    if (static_cast<int>(x.ndim()) != cfg_.rank + 2)
        throw ShapeError("model forward: input rank " + std::to_string(x.ndim() - 2) +
                         " does not match model rank " + std::to_string(cfg_.rank));
    if (x.shape()[1] != cfg_.in_channels)
        throw ShapeError("model forward: input channels " + std::to_string(x.shape()[1]) +
                         ", expected " + std::to_string(cfg_.in_channels));
    const std::vector<std::size_t> in_sp(x.shape().begin() + 2, x.shape().end());

    std::vector<nn::Tensor<float>> features;
    auto h = stem_(x);
    for (std::size_t s = 0; s < cfg_.num_stages; ++s) {
        if (s > 0) h = downs_[s - 1](h);
        for (auto& blk : stages_[s]) h = run_block(blk, h, training);
        features.push_back(h);
    }

    static const HeadId side_ids[4] = {HeadId::Side2, HeadId::Side3, HeadId::Side4,
                                       HeadId::Side5};
    std::vector<nn::Tensor<float>> logits;
    for (std::size_t s = 0; s < cfg_.num_stages; ++s) {
        auto f = nn::relu(heads_[s].bn(features[s], training));
        auto up = nn::conv_transpose(f, heads_[s].tconv_w, heads_[s].factor);
        // stride-2 ceil-mode downsampling can overshoot on the way back up
        bool needs_crop = false;
        for (std::size_t a = 0; a < in_sp.size(); ++a)
            needs_crop |= up.shape()[2 + a] != in_sp[a];
        if (needs_crop)
            up = nn::crop_spatial(up, std::vector<std::size_t>(in_sp.size(), 0), in_sp);
        logits.push_back(up);
    }
    auto fused = fuse_(nn::concat_channels(logits));

    std::vector<std::pair<HeadId, nn::Tensor<float>>> out;
    for (std::size_t s = 0; s < cfg_.num_stages; ++s)
        out.emplace_back(side_ids[s], nn::softmax_channels(logits[s]));
    out.emplace_back(HeadId::Final, nn::softmax_channels(fused));
    return out;
}

nn::Tensor<float> SegNet::forward_final(const nn::Tensor<float>& x, bool training) {
    return forward_all_heads(x, training).back().second;
}

SegNet build_segmentor(const NetConfig& cfg, std::uint64_t seed) {
    if (cfg.in_channels != 1)
        throw ValueError("segmentor: in_channels must be 1 (image only)");
    return SegNet(cfg, seed);
}

SegNet build_predictor(const NetConfig& cfg, std::uint64_t seed) {
    if (cfg.out_classes != 2)
        throw ValueError("predictor: out_classes must be 2 (correct/error)");
    if (cfg.in_channels < 3)
        throw ValueError("predictor: in_channels must be 1 + (C+1) >= 3");
    return SegNet(cfg, seed);
}

} // namespace voxqa
