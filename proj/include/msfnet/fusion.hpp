#pragma once

#include <torch/torch.h>

#include <array>
#include <vector>

namespace msfnet::fusion {

inline constexpr int kStageCount = 5;

// Pixel shuffle: [B, C*r*r, H, W] -> [B, C, r*H, r*W] with
// out[b, c, r*h + i, r*w + j] = in[b, c*r*r + i*r + j, h, w].
torch::Tensor subpixel_upsample(const torch::Tensor& x, int64_t r);

// Exact inverse of subpixel_upsample.
torch::Tensor subpixel_downsample(const torch::Tensor& x, int64_t r);

// Average pooling over adaptive bins; bin s spans floor(s*H/out) .. ceil((s+1)*H/out)-1.
// Only shrinks: requesting a larger output is an error.
torch::Tensor adaptive_pool(const torch::Tensor& x, int64_t out_h, int64_t out_w);

// 3x3 convolution (padding 1) followed by subpixel_upsample; no activation.
torch::Tensor up_block(const torch::Tensor& x, const torch::Tensor& weight,
                       const torch::Tensor& bias, int64_t r);

// Sub-pixel Up-block: conv3x3 to out*r*r channels, pixel shuffle, Leaky ReLU.
class UpBlockImpl : public torch::nn::Module {
public:
    UpBlockImpl(int64_t in_channels, int64_t out_channels, int64_t ratio = 2);

    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv{nullptr};
    int64_t ratio;
};
TORCH_MODULE(UpBlock);

struct RDROptions {
    int64_t in_channels = 80;
    int64_t squeeze_channels = 40; // must be even
    int64_t out_channels = 32;
};

// Reduced dimension refinement: 1x1 squeeze, split into an instance-norm half and a
// batch-norm half, each refined by separable 3x1 / 1x3 convolutions, 3x3 merge with a
// residual onto the squeezed tensor, and a final 1x1 projection.
class RDRImpl : public torch::nn::Module {
public:
    explicit RDRImpl(const RDROptions& options);

    torch::Tensor forward(const torch::Tensor& x);

    const RDROptions& options() const { return options_; }

    torch::nn::Conv2d squeeze{nullptr};
    torch::nn::InstanceNorm2d in_norm{nullptr};
    torch::nn::Conv2d in_branch_3x1{nullptr};
    torch::nn::Conv2d in_branch_1x3{nullptr};
    torch::nn::BatchNorm2d bn_norm{nullptr};
    torch::nn::Conv2d bn_branch_3x1{nullptr};
    torch::nn::Conv2d bn_branch_1x3{nullptr};
    torch::nn::Conv2d merge{nullptr};
    torch::nn::Conv2d project{nullptr};

private:
    RDROptions options_;
};
TORCH_MODULE(RDR);

// Runs the RDR block in training (batch statistics, running-stat update) or evaluation mode.
torch::Tensor rdr_forward(const torch::Tensor& x, RDR& params, bool training);

// Even squeeze width: half of `channels`, rounded to even, at least 2.
int64_t default_squeeze_channels(int64_t channels);

struct USFOptions {
    std::array<int64_t, kStageCount> stage_channels{16, 32, 64, 128, 256};
    int64_t up_channels = 16;
    int64_t fused_channels = 32;
};

// Number of r=2 Up-blocks applied to stage s so that it reaches at least the stage-0
// resolution before pooling.
int up_block_count(int stage);

// Checks the five-entry stage set: consistent batch size and monotone halving.
void validate_stage_set(const std::vector<torch::Tensor>& stages);

// Upsample-stage fusion: per-stage Up-blocks, adaptive pooling to the stage-0 resolution
// (half the input image), channel concat, conv block + adaptive pool, RDR refinement.
class USFImpl : public torch::nn::Module {
public:
    explicit USFImpl(const USFOptions& options);

    torch::Tensor forward(const std::vector<torch::Tensor>& stages);

    const USFOptions& options() const { return options_; }

    std::vector<torch::nn::Sequential> paths;
    torch::nn::Conv2d merge{nullptr};
    RDR rdr{nullptr};

private:
    USFOptions options_;
};
TORCH_MODULE(USF);

torch::Tensor usf_forward(const std::vector<torch::Tensor>& stages, USF& params, bool training);

} // namespace msfnet::fusion
