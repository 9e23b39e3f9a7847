#pragma once

#include <torch/torch.h>

#include <string>
#include <string_view>

namespace msfnet::attention {

// Channel-wise statistics of a feature map, each shaped [B,1,H,W].
struct PooledMaps {
    torch::Tensor x_max;
    torch::Tensor x_min;
    torch::Tensor x_avg;
};

// Max, min and arithmetic-mean pooling along the channel axis.
PooledMaps channel_pool(const torch::Tensor& x);

inline constexpr int64_t kGateKernel = 7;

// Weights of the 7x7 gate convolution: weight [1,2,7,7], bias [1].
struct SpatialGateParams {
    torch::Tensor weight;
    torch::Tensor bias;

    void validate() const;

    static SpatialGateParams zeros(torch::TensorOptions options = torch::kFloat64);
    static SpatialGateParams random(torch::Generator gen,
                                    torch::TensorOptions options = torch::kFloat64);
};

// sigma(conv7([x_avg - x_min ; x_max - x_min])), shaped [B,1,H,W].
torch::Tensor eda_gate(const torch::Tensor& x, const SpatialGateParams& params);

// Enhanced diverse attention: the min-subtracted spatial gate applied to every channel of x.
torch::Tensor eda_forward(const torch::Tensor& x, const SpatialGateParams& params);

// sigma(conv7([x_avg ; x_max])), the CBAM spatial gate.
torch::Tensor cbam_s_gate(const torch::Tensor& x, const SpatialGateParams& params);

// CBAM spatial attention; used as the ablation baseline for EDA.
torch::Tensor cbam_s_forward(const torch::Tensor& x, const SpatialGateParams& params);

enum class AttentionKind { none, cbam_s, eda };

std::string_view to_string(AttentionKind kind);
AttentionKind attention_kind_from_string(std::string_view name);

// Learnable spatial attention block wrapping one 7x7 gate convolution.
class SpatialAttentionImpl : public torch::nn::Module {
public:
    explicit SpatialAttentionImpl(AttentionKind kind);

    torch::Tensor forward(const torch::Tensor& x);
    torch::Tensor gate(const torch::Tensor& x);

    AttentionKind kind() const { return kind_; }
    SpatialGateParams params() const;

private:
    AttentionKind kind_;
    torch::nn::Conv2d conv_{nullptr};
};
TORCH_MODULE(SpatialAttention);

} // namespace msfnet::attention
