#pragma once

// Network builders: 3D segmentor, 2D segmentor and the error-map predictor.
// All three share one residual encoder topology with four stages; every
// stage feeds a deep-supervision side head (transposed conv back to input
// resolution) and the final head fuses the four upsampled side logits.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "voxqa/nn.hpp"

namespace voxqa {

struct NetConfig {
    std::size_t base_channels = 8;   // stage s runs at base << s channels
    std::size_t blocks_per_stage = 1;
    std::size_t num_stages = 4;      // fixed: head count must match Side2..Side5
    std::size_t in_channels = 1;
    std::size_t out_classes = 2;
    int rank = 3; // 2 or 3
};

// Mask provenance / network output identity. GTruth tags ground-truth masks
// in records; it is never a network head.
enum class HeadId { Side2, Side3, Side4, Side5, Final, GTruth };

const char* head_name(HeadId id);
// scatter-plot codes: GT 0, final -1, side outputs -2..-5
int head_code(HeadId id);

class SegNet {
public:
    SegNet(const NetConfig& cfg, std::uint64_t seed);

    const NetConfig& config() const { return cfg_; }

    // All named state: trainable weights plus batch-norm running statistics
    // (trainable == false). Order is fixed by construction.
    std::vector<nn::Parameter<float>>& params() { return params_; }
    const std::vector<nn::Parameter<float>>& params() const { return params_; }

    std::size_t trainable_count() const;

    // Five (HeadId, class-probability tensor) pairs ordered
    // [Side2, Side3, Side4, Side5, Final]; every head is softmaxed and has
    // the input's spatial dims. training=true uses batch statistics and
    // updates the running ones.
    std::vector<std::pair<HeadId, nn::Tensor<float>>> forward_all_heads(
        const nn::Tensor<float>& x, bool training);

    // Final-head probabilities only (same pass, cheaper to read).
    nn::Tensor<float> forward_final(const nn::Tensor<float>& x, bool training);

private:
    struct BatchNorm {
        nn::Tensor<float> gamma, beta, run_mean, run_var;
        float momentum = 0.9f;
        float eps = 1e-5f;

        nn::Tensor<float> operator()(const nn::Tensor<float>& x, bool training);
    };
    struct ConvLayer {
        nn::Tensor<float> w, b; // b may be invalid
        std::int64_t stride = 1, pad = 0;

        nn::Tensor<float> operator()(const nn::Tensor<float>& x) const {
            return nn::conv(x, w, b, stride, pad);
        }
    };
    struct ResBlock {
        BatchNorm bn1, bn2;
        ConvLayer conv1, conv2;
    };
    struct SideHead {
        BatchNorm bn;
        nn::Tensor<float> tconv_w; // (C_stage, K, f...)
        std::int64_t factor = 1;
    };

    nn::Tensor<float> register_param(const std::string& name, nn::Tensor<float> t,
                                     bool trainable);
    BatchNorm make_bn(const std::string& name, std::size_t channels);
    ConvLayer make_conv(const std::string& name, std::size_t cin, std::size_t cout,
                        std::size_t k, std::int64_t stride, std::int64_t pad, bool bias,
                        Rng& rng);
    nn::Tensor<float> run_block(ResBlock& blk, const nn::Tensor<float>& x, bool training);

    NetConfig cfg_;
    std::vector<nn::Parameter<float>> params_;
    ConvLayer stem_;
    std::vector<std::vector<ResBlock>> stages_;
    std::vector<ConvLayer> downs_;
    std::vector<SideHead> heads_;
    ConvLayer fuse_;
};

// Segmentor: image in (in_channels must be 1), out_classes = C+1.
SegNet build_segmentor(const NetConfig& cfg, std::uint64_t seed);

// Predictor: concat(image, one-hot mask) in, 2 classes out (correct/error).
// Same topology as the segmentor, only the channel counts differ.
SegNet build_predictor(const NetConfig& cfg, std::uint64_t seed);

} // namespace voxqa
