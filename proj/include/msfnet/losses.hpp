#pragma once

#include "msfnet/network.hpp"

#include <torch/torch.h>

#include <string_view>

namespace msfnet::losses {

enum class BatchLossScope { per_batch, per_image };

std::string_view to_string(BatchLossScope scope);
BatchLossScope batch_loss_scope_from_string(std::string_view name);

struct LossConfig {
    double lambda = 0.1;
    double mu = 0.1;
    BatchLossScope batch_loss_scope = BatchLossScope::per_batch;
    int64_t ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_c1 = 0.01 * 0.01;
    double ssim_c2 = 0.03 * 0.03;
    bool use_batch_loss = true;

    // Sets C1 = (0.01 L)^2 and C2 = (0.03 L)^2 for a target whose values span [0, L].
    LossConfig& with_dynamic_range(double max_value);

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double batch_or_l1 = 0.0;
    double grad = 0.0;
    double ssim = 0.0;
    double aux = 0.0;
};

struct LossResult {
    torch::Tensor total; // differentiable scalar
    LossBreakdown breakdown;
};

// Mean of |y - yhat| over valid pixels.
torch::Tensor masked_l1(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask);

// Hard-example weighted L1: (1/n) sum w_i e_i + (1/n) sum e_i with w = softmax(e) over the
// valid pixels of the batch (per_batch) or of each image (per_image, then image-averaged).
torch::Tensor batch_loss(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask,
                         BatchLossScope scope = BatchLossScope::per_batch);

// Masked mean of |d_x(y - yhat)| + |d_y(y - yhat)| using forward differences. A difference
// counts only when both of its pixels are valid; n is the number of valid pixels.
torch::Tensor grad_loss(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask);

// Normalized 1-D Gaussian taps of odd length `size`.
torch::Tensor gaussian_taps(int64_t size, double sigma, torch::TensorOptions options = torch::kFloat64);

// Mean SSIM over every fully-valid window position (no padding).
torch::Tensor ssim(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask,
                   const LossConfig& cfg);

// (1 - SSIM) / 2.
torch::Tensor ssim_loss(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask,
                        const LossConfig& cfg);

// masked_l1(y2) + masked_l1(y3).
torch::Tensor aux_loss(const torch::Tensor& y2, const torch::Tensor& y3, const torch::Tensor& yhat,
                       const torch::Tensor& mask);

// lambda * (batch-loss or L1) + grad + SSIM + mu * aux. Auxiliary terms cover only the heads
// whose module is enabled.
LossResult total_loss(const NetworkOutput& output, const torch::Tensor& yhat, const torch::Tensor& mask,
                      const LossConfig& cfg);

} // namespace msfnet::losses
