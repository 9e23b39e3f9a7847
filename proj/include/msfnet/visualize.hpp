#pragma once

#include "msfnet/data.hpp"
#include "msfnet/harness.hpp"

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <array>
#include <filesystem>
#include <vector>

namespace msfnet::viz {

// Invalid (masked-out) pixels; magenta never occurs in the depth color map.
inline const cv::Vec3b kSentinelBgr{255, 0, 255};

// Perceptual dark-to-bright ramp, t clamped to [0,1]. Returned in BGR order.
cv::Vec3b colormap(double t);

// Color-mapped depth over the shared range [vmin, vmax].
cv::Mat render_depth(const torch::Tensor& depth, const torch::Tensor& mask, double vmin, double vmax);

// rgb [3,H,W] in [0,1].
cv::Mat render_rgb(const torch::Tensor& rgb);

// |prediction - truth| mapped over [0, emax].
cv::Mat render_error(const torch::Tensor& prediction, const torch::Tensor& truth, const torch::Tensor& mask,
                     double emax);

struct PanelSet {
    cv::Mat rgb;
    cv::Mat truth;
    cv::Mat prediction;
    cv::Mat error;
    double vmin = 0.0;
    double vmax = 1.0;
    double emax = 1.0;
};

// Ground truth and prediction share one value range taken over the valid pixels of both.
PanelSet render_panels(const torch::Tensor& prediction, const data::Sample& sample);

// Writes sample_<i>_{rgb,gt,pred,error}.png per sample plus contact_sheet.png.
std::vector<std::filesystem::path> visualize(MSFNet& net, const std::vector<data::Sample>& samples,
                                             const std::filesystem::path& out_dir,
                                             const harness::EvalOptions& options);

} // namespace msfnet::viz
