#pragma once

#include "msfnet/attention.hpp"
#include "msfnet/fusion.hpp"
#include "msfnet/layers.hpp"

#include <torch/torch.h>

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace msfnet {

// Input images must be divisible by this so the deepest stage lands at H/32 x W/32.
inline constexpr int64_t kEncoderStride = 32;

enum class EncoderKind { toy, senet154_hook };

struct EncoderSpec {
    EncoderKind kind = EncoderKind::toy;
    std::array<int64_t, fusion::kStageCount> stage_channels{16, 32, 64, 128, 256};
    // Free-form description of the stem, stored in checkpoints.
    std::string stem = "conv3x3-s2";

    void validate() const;
};

// Five-stage backbone. Stage s maps the previous feature to half its resolution.
class StagedEncoderImpl : public torch::nn::Module {
public:
    virtual ~StagedEncoderImpl() = default;

    virtual torch::Tensor stage(int index, const torch::Tensor& x) = 0;
};

// Stride-2 3x3 conv + Leaky ReLU per stage.
class ToyEncoderImpl : public StagedEncoderImpl {
public:
    explicit ToyEncoderImpl(const EncoderSpec& spec);

    torch::Tensor stage(int index, const torch::Tensor& x) override;

private:
    std::vector<torch::nn::Conv2d> blocks_;
};

using EncoderFactory = std::function<std::shared_ptr<StagedEncoderImpl>(const EncoderSpec&)>;

// Installs the factory used for EncoderKind::senet154_hook (an externally trained backbone).
void set_encoder_hook(EncoderFactory factory);

std::shared_ptr<StagedEncoderImpl> make_encoder(const EncoderSpec& spec);

// Throws InvalidInputError unless both spatial sizes are positive multiples of 32.
void check_input_size(const torch::Tensor& image);

// Runs all five stages without attention.
std::vector<torch::Tensor> encoder_forward(const torch::Tensor& image, StagedEncoderImpl& encoder);

struct NetworkVariant {
    bool use_usf = false;
    attention::AttentionKind attention = attention::AttentionKind::none;
    bool use_batch_loss = false;

    void validate() const;
    std::string name() const;

    bool operator==(const NetworkVariant&) const = default;

    static NetworkVariant baseline() { return {}; }
    static NetworkVariant full() { return {true, attention::AttentionKind::eda, true}; }
    static NetworkVariant from_name(const std::string& name);
    // baseline, +USF, +USF+CBAM-S, +USF+EDA, +USF+EDA+batch-loss
    static std::vector<NetworkVariant> ablation_ladder();
};

struct NetworkOutput {
    torch::Tensor y;
    torch::Tensor y2; // attention head
    torch::Tensor y3; // fusion head
    bool y2_live = false;
    bool y3_live = false;
};

struct NetworkOptions {
    EncoderSpec encoder;
    int64_t up_channels = 16;
    int64_t fused_channels = 32;
    std::array<int64_t, 4> decoder_channels{128, 64, 32, 16};

    void validate() const;
};

class MSFNetImpl : public torch::nn::Module {
public:
    MSFNetImpl(const NetworkOptions& options, const NetworkVariant& variant);

    NetworkOutput forward(const torch::Tensor& image);

    const NetworkOptions& options() const { return options_; }
    const NetworkVariant& variant() const { return variant_; }

    std::shared_ptr<StagedEncoderImpl> encoder;
    attention::SpatialAttention attention{nullptr};
    fusion::USF usf{nullptr};

    torch::nn::ModuleList decoder;
    torch::nn::Conv2d final_conv{nullptr};
    torch::nn::Conv2d head{nullptr};
    torch::nn::Conv2d attention_head{nullptr};
    torch::nn::Conv2d fusion_head{nullptr};

private:
    NetworkOptions options_;
    NetworkVariant variant_;
};
TORCH_MODULE(MSFNet);

// Validates `variant` against the network's own and runs it in the requested mode.
NetworkOutput msfnet_forward(const torch::Tensor& image, const NetworkVariant& variant, MSFNet& net,
                             bool training);

} // namespace msfnet
