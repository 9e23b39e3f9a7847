#include "msfnet/fusion.hpp"

#include "msfnet/errors.hpp"
#include "msfnet/layers.hpp"

#include <algorithm>
#include <string>

namespace msfnet::fusion {

namespace F = torch::nn::functional;

namespace {

void check_4d(const torch::Tensor& x, const char* what) {
    if (!x.defined() || x.dim() != 4) {
        throw InvalidShapeError(std::string(what) + ": expected a [B,C,H,W] tensor");
    }
}

} // namespace

torch::Tensor subpixel_upsample(const torch::Tensor& x, int64_t r) {
    check_4d(x, "subpixel_upsample");
    if (r < 1) {
        throw InvalidShapeError("subpixel_upsample: ratio must be positive");
    }
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    if (c % (r * r) != 0) {
        throw InvalidShapeError("subpixel_upsample: channel count " + std::to_string(c) +
                                " is not divisible by r^2 = " + std::to_string(r * r));
    }
    const auto out_c = c / (r * r);
    return x.reshape({b, out_c, r, r, h, w})
        .permute({0, 1, 4, 2, 5, 3})
        .reshape({b, out_c, h * r, w * r});
}

torch::Tensor subpixel_downsample(const torch::Tensor& x, int64_t r) {
    check_4d(x, "subpixel_downsample");
    if (r < 1) {
        throw InvalidShapeError("subpixel_downsample: ratio must be positive");
    }
    const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
    if (h % r != 0 || w % r != 0) {
        throw InvalidShapeError("subpixel_downsample: spatial size not divisible by ratio");
    }
    return x.reshape({b, c, h / r, r, w / r, r})
        .permute({0, 1, 3, 5, 2, 4})
        .reshape({b, c * r * r, h / r, w / r});
}

torch::Tensor adaptive_pool(const torch::Tensor& x, int64_t out_h, int64_t out_w) {
    check_4d(x, "adaptive_pool");
    if (out_h < 1 || out_w < 1) {
        throw InvalidShapeError("adaptive_pool: output size must be positive");
    }
    if (out_h > x.size(2) || out_w > x.size(3)) {
        throw InvalidShapeError("adaptive_pool: requested " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " exceeds input " +
                                std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)));
    }
    if (out_h == x.size(2) && out_w == x.size(3)) {
        return x;
    }
    return F::adaptive_avg_pool2d(x, F::AdaptiveAvgPool2dFuncOptions({out_h, out_w}));
}

torch::Tensor up_block(const torch::Tensor& x, const torch::Tensor& weight,
                       const torch::Tensor& bias, int64_t r) {
    check_4d(x, "up_block");
    if (weight.size(0) % (r * r) != 0) {
        throw InvalidShapeError("up_block: convolution must emit a multiple of r^2 channels");
    }
    return subpixel_upsample(F::conv2d(x, weight, F::Conv2dFuncOptions().bias(bias).padding(1)), r);
}

UpBlockImpl::UpBlockImpl(int64_t in_channels, int64_t out_channels, int64_t ratio)
    : ratio(ratio) {
    if (ratio < 1) {
        throw ConfigError("UpBlock: ratio must be positive");
    }
    conv = register_module("conv", make_conv(in_channels, out_channels * ratio * ratio, 3, 1, 1));
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x) {
    return msfnet::leaky_relu(up_block(x, conv->weight, conv->bias, ratio));
}

int64_t default_squeeze_channels(int64_t channels) {
    return std::max<int64_t>(2, (channels / 2) & ~int64_t{1});
}

RDRImpl::RDRImpl(const RDROptions& options) : options_(options) {
    if (options.squeeze_channels < 2 || options.squeeze_channels % 2 != 0) {
        throw ConfigError("RDR: squeeze channel count must be even, got " +
                          std::to_string(options.squeeze_channels));
    }
    const auto s = options.squeeze_channels;
    const auto half = s / 2;
    squeeze = register_module("squeeze", make_conv(options.in_channels, s, 1));
    in_norm = register_module(
        "in_norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(half).affine(true)));
    in_branch_3x1 = register_module("in_branch_3x1", make_conv(half, half, {3, 1}, {1, 0}));
    in_branch_1x3 = register_module("in_branch_1x3", make_conv(half, half, {1, 3}, {0, 1}));
    bn_norm = register_module(
        "bn_norm", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(half).momentum(0.1)));
    bn_branch_3x1 = register_module("bn_branch_3x1", make_conv(half, half, {3, 1}, {1, 0}));
    bn_branch_1x3 = register_module("bn_branch_1x3", make_conv(half, half, {1, 3}, {0, 1}));
    merge = register_module("merge", make_conv(s, s, 3, 1, 1));
    project = register_module("project", make_conv(s, options.out_channels, 1));
}

torch::Tensor RDRImpl::forward(const torch::Tensor& x) {
    check_4d(x, "rdr_forward");
    if (x.size(1) != options_.in_channels) {
        throw InvalidShapeError("rdr_forward: expected " + std::to_string(options_.in_channels) +
                                " input channels, got " + std::to_string(x.size(1)));
    }
    auto squeezed = squeeze(x);
    auto halves = squeezed.chunk(2, 1);
    auto appearance = in_branch_1x3(in_branch_3x1(in_norm(halves[0])));
    auto content = bn_branch_1x3(bn_branch_3x1(bn_norm(halves[1])));
    auto refined = merge(torch::cat({appearance, content}, 1));
    return project(refined + squeezed);
}

torch::Tensor rdr_forward(const torch::Tensor& x, RDR& params, bool training) {
    params->train(training);
    return params->forward(x);
}

int up_block_count(int stage) { return std::max(1, stage); }

void validate_stage_set(const std::vector<torch::Tensor>& stages) {
    if (stages.size() != kStageCount) {
        throw InvalidInputError("stage set must hold exactly 5 features, got " +
                                std::to_string(stages.size()));
    }
    for (const auto& s : stages) {
        check_4d(s, "stage feature");
    }
    for (int k = 1; k < kStageCount; ++k) {
        if (stages[k].size(0) != stages[0].size(0)) {
            throw InvalidInputError("stage features disagree on batch size");
        }
        if (stages[k].size(2) * 2 != stages[k - 1].size(2) ||
            stages[k].size(3) * 2 != stages[k - 1].size(3)) {
            throw InvalidShapeError("stage " + std::to_string(k) +
                                    " does not halve the previous stage resolution");
        }
    }
}

USFImpl::USFImpl(const USFOptions& options) : options_(options) {
    const auto u = options.up_channels;
    for (int s = 0; s < kStageCount; ++s) {
        torch::nn::Sequential path;
        for (int k = 0; k < up_block_count(s); ++k) {
            path->push_back(UpBlock(k == 0 ? options.stage_channels[s] : u, u, 2));
        }
        paths.push_back(register_module("path" + std::to_string(s), path));
    }
    const auto concat = u * kStageCount;
    merge = register_module("merge", make_conv(concat, concat, 3, 1, 1));
    rdr = register_module("rdr", RDR(RDROptions{concat, default_squeeze_channels(concat),
                                                options.fused_channels}));
}

torch::Tensor USFImpl::forward(const std::vector<torch::Tensor>& stages) {
    validate_stage_set(stages);
    const auto out_h = stages[0].size(2);
    const auto out_w = stages[0].size(3);
    std::vector<torch::Tensor> unified;
    unified.reserve(kStageCount);
    for (int s = 0; s < kStageCount; ++s) {
        unified.push_back(adaptive_pool(paths[s]->forward(stages[s]), out_h, out_w));
    }
    auto merged = adaptive_pool(msfnet::leaky_relu(merge(torch::cat(unified, 1))), out_h, out_w);
    return rdr(merged);
}

torch::Tensor usf_forward(const std::vector<torch::Tensor>& stages, USF& params, bool training) {
    params->train(training);
    return params->forward(stages);
}

} // namespace msfnet::fusion
