#pragma once

#include <torch/torch.h>

namespace msfnet {

// Negative slope used by every activation in the network.
inline constexpr double kLeakySlope = 0.2;

// Scalar Leaky ReLU: x for x > 0, alpha * x otherwise.
constexpr double leaky_relu(double x, double alpha = kLeakySlope) { return x > 0.0 ? x : alpha * x; }

inline torch::Tensor leaky_relu(const torch::Tensor& x, double alpha = kLeakySlope) {
    return torch::leaky_relu(x, alpha);
}

inline torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                                   int64_t padding = 0) {
    return torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(true));
}

inline torch::nn::Conv2d make_conv(int64_t in, int64_t out, std::array<int64_t, 2> kernel,
                                   std::array<int64_t, 2> padding) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, torch::ExpandingArray<2>(kernel))
                                 .padding(torch::ExpandingArray<2>(padding))
                                 .bias(true));
}

// Xavier-uniform weights and zero biases for every convolution below `module`.
// Normalization layers keep their unit/zero affine defaults.
void xavier_init(torch::nn::Module& module);

} // namespace msfnet
