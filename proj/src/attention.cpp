#include "msfnet/attention.hpp"

#include "msfnet/errors.hpp"
#include "msfnet/layers.hpp"

namespace msfnet::attention {

namespace {

void check_feature(const torch::Tensor& x) {
    if (!x.defined() || x.dim() != 4) {
        throw InvalidShapeError("attention: expected a [B,C,H,W] tensor");
    }
    if (x.size(1) < 1) {
        throw InvalidInputError("attention: empty channel dimension");
    }
    if (x.size(2) < 1 || x.size(3) < 1) {
        throw InvalidShapeError("attention: empty spatial dimension");
    }
}

torch::Tensor apply_gate_conv(const torch::Tensor& stacked, const SpatialGateParams& params) {
    params.validate();
    namespace F = torch::nn::functional;
    return torch::sigmoid(F::conv2d(stacked, params.weight.to(stacked.dtype()),
                                    F::Conv2dFuncOptions()
                                        .bias(params.bias.to(stacked.dtype()))
                                        .padding(kGateKernel / 2)));
}

} // namespace

PooledMaps channel_pool(const torch::Tensor& x) {
    check_feature(x);
    return PooledMaps{
        .x_max = x.amax(1, /*keepdim=*/true),
        .x_min = x.amin(1, /*keepdim=*/true),
        .x_avg = x.mean(1, /*keepdim=*/true),
    };
}

void SpatialGateParams::validate() const {
    if (!weight.defined() || weight.sizes() != torch::IntArrayRef{1, 2, kGateKernel, kGateKernel}) {
        throw InvalidShapeError("spatial gate: weight must be shaped [1,2,7,7]");
    }
    if (!bias.defined() || bias.numel() != 1) {
        throw InvalidShapeError("spatial gate: bias must hold exactly one value");
    }
}

SpatialGateParams SpatialGateParams::zeros(torch::TensorOptions options) {
    return {torch::zeros({1, 2, kGateKernel, kGateKernel}, options), torch::zeros({1}, options)};
}

SpatialGateParams SpatialGateParams::random(torch::Generator gen, torch::TensorOptions options) {
    return {torch::randn({1, 2, kGateKernel, kGateKernel}, gen, options) * 0.1,
            torch::randn({1}, gen, options) * 0.1};
}

torch::Tensor eda_gate(const torch::Tensor& x, const SpatialGateParams& params) {
    auto pooled = channel_pool(x);
    auto stacked = torch::cat({pooled.x_avg - pooled.x_min, pooled.x_max - pooled.x_min}, 1);
    return apply_gate_conv(stacked, params);
}

torch::Tensor eda_forward(const torch::Tensor& x, const SpatialGateParams& params) {
    return eda_gate(x, params) * x;
}

torch::Tensor cbam_s_gate(const torch::Tensor& x, const SpatialGateParams& params) {
    auto pooled = channel_pool(x);
    return apply_gate_conv(torch::cat({pooled.x_avg, pooled.x_max}, 1), params);
}

torch::Tensor cbam_s_forward(const torch::Tensor& x, const SpatialGateParams& params) {
    return cbam_s_gate(x, params) * x;
}

std::string_view to_string(AttentionKind kind) {
    switch (kind) {
    case AttentionKind::none: return "none";
    case AttentionKind::cbam_s: return "cbam_s";
    case AttentionKind::eda: return "eda";
    }
    return "none";
}

AttentionKind attention_kind_from_string(std::string_view name) {
    if (name == "none") return AttentionKind::none;
    if (name == "cbam_s" || name == "cbam-s") return AttentionKind::cbam_s;
    if (name == "eda") return AttentionKind::eda;
    throw ConfigError("unknown attention kind: " + std::string(name));
}

SpatialAttentionImpl::SpatialAttentionImpl(AttentionKind kind) : kind_(kind) {
    if (kind == AttentionKind::none) {
        throw ConfigError("SpatialAttention requires cbam_s or eda");
    }
    conv_ = register_module("conv", make_conv(2, 1, kGateKernel, 1, kGateKernel / 2));
}

SpatialGateParams SpatialAttentionImpl::params() const {
    return {conv_->weight, conv_->bias};
}

torch::Tensor SpatialAttentionImpl::gate(const torch::Tensor& x) {
    return kind_ == AttentionKind::eda ? eda_gate(x, params()) : cbam_s_gate(x, params());
}

torch::Tensor SpatialAttentionImpl::forward(const torch::Tensor& x) { return gate(x) * x; }

} // namespace msfnet::attention
