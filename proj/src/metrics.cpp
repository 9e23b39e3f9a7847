#include "msfnet/metrics.hpp"

#include "msfnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace msfnet::metrics {

ImageMetrics evaluate_image(std::span<const double> prediction, std::span<const double> truth,
                            std::span<const uint8_t> mask) {
    if (prediction.size() != truth.size() || (!mask.empty() && mask.size() != truth.size())) {
        throw InvalidShapeError("evaluate_image: prediction, truth and mask sizes differ");
    }
    double sq = 0.0, rel = 0.0, lg = 0.0;
    int64_t n = 0, d1 = 0, d2 = 0, d3 = 0;
    const double t1 = kDeltaBase, t2 = t1 * t1, t3 = t2 * t1;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!mask.empty() && mask[i] == 0) {
            continue;
        }
        const double p = prediction[i];
        const double g = truth[i];
        if (!(p > 0.0) || !(g > 0.0)) {
            throw InvalidInputError("evaluate_image: nonpositive depth on a valid pixel");
        }
        const double diff = p - g;
        sq += diff * diff;
        rel += std::abs(diff) / g;
        lg += std::abs(std::log10(p) - std::log10(g));
        const double ratio = std::max(p / g, g / p);
        d1 += ratio < t1;
        d2 += ratio < t2;
        d3 += ratio < t3;
        ++n;
    }
    if (n == 0) {
        throw EmptyMaskError("evaluate_image: mask has no valid pixels");
    }
    const double dn = static_cast<double>(n);
    return ImageMetrics{
        .rmse = std::sqrt(sq / dn),
        .rel = rel / dn,
        .log10 = lg / dn,
        .delta1 = static_cast<double>(d1) / dn,
        .delta2 = static_cast<double>(d2) / dn,
        .delta3 = static_cast<double>(d3) / dn,
        .n_pixels = n,
    };
}

ImageMetrics evaluate_image(const torch::Tensor& prediction, const torch::Tensor& truth,
                            const torch::Tensor& mask) {
    if (prediction.numel() != truth.numel() || (mask.defined() && mask.numel() != truth.numel())) {
        throw InvalidShapeError("evaluate_image: prediction, truth and mask sizes differ");
    }
    auto p = prediction.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    auto g = truth.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    const auto np = static_cast<std::size_t>(p.numel());
    std::span<const double> ps(p.data_ptr<double>(), np);
    std::span<const double> gs(g.data_ptr<double>(), np);
    if (!mask.defined()) {
        return evaluate_image(ps, gs);
    }
    auto m = mask.detach().to(torch::kCPU).to(torch::kBool).to(torch::kUInt8).contiguous();
    return evaluate_image(ps, gs, std::span<const uint8_t>(m.data_ptr<uint8_t>(), np));
}

MetricReport aggregate(std::span<const ImageMetrics> images) {
    if (images.empty()) {
        throw InvalidInputError("aggregate: no per-image metrics");
    }
    MetricReport r;
    for (const auto& m : images) {
        r.rmse += m.rmse;
        r.rel += m.rel;
        r.log10 += m.log10;
        r.delta1 += m.delta1;
        r.delta2 += m.delta2;
        r.delta3 += m.delta3;
        r.n_pixels += m.n_pixels;
    }
    const double n = static_cast<double>(images.size());
    r.rmse /= n;
    r.rel /= n;
    r.log10 /= n;
    r.delta1 /= n;
    r.delta2 /= n;
    r.delta3 /= n;
    r.n_images = static_cast<int64_t>(images.size());
    return r;
}

std::string to_csv_row(const MetricReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld,%lld", r.rel, r.rmse, r.log10,
                  r.delta1, r.delta2, r.delta3, static_cast<long long>(r.n_images),
                  static_cast<long long>(r.n_pixels));
    return buf;
}

void write_csv(std::ostream& out, const MetricReport& report) {
    out << kCsvHeader << '\n' << to_csv_row(report) << '\n';
}

} // namespace msfnet::metrics
