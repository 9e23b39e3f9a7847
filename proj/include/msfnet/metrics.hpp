#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace msfnet::metrics {

// Standard depth-accuracy numbers for one image.
struct ImageMetrics {
    double rmse = 0.0;
    double rel = 0.0;
    double log10 = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    int64_t n_pixels = 0;
};

struct MetricReport {
    double rmse = 0.0;
    double rel = 0.0;
    double log10 = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    double delta3 = 0.0;
    int64_t n_pixels = 0;
    int64_t n_images = 0;
};

// Threshold base for the delta accuracies: delta_k counts max(p/g, g/p) < 1.25^k.
inline constexpr double kDeltaBase = 1.25;

// `prediction` and `truth` are metric depths; REL divides by the ground truth.
// An empty mask span means every pixel is valid.
ImageMetrics evaluate_image(std::span<const double> prediction, std::span<const double> truth,
                            std::span<const uint8_t> mask = {});

// Tensor overload; all three tensors must have the same number of elements.
ImageMetrics evaluate_image(const torch::Tensor& prediction, const torch::Tensor& truth,
                            const torch::Tensor& mask = {});

// Unweighted mean over images.
MetricReport aggregate(std::span<const ImageMetrics> images);

inline constexpr const char* kCsvHeader = "rel,rmse,log10,delta1,delta2,delta3,n_images,n_pixels";

std::string to_csv_row(const MetricReport& report);
void write_csv(std::ostream& out, const MetricReport& report);

} // namespace msfnet::metrics
