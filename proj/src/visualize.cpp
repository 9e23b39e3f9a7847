#include "msfnet/visualize.hpp"

#include "msfnet/errors.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>

namespace msfnet::viz {

namespace fs = std::filesystem;

namespace {

// (t, r, g, b) anchors of an inferno-like ramp.
constexpr std::array<std::array<double, 4>, 6> kRamp{{
    {0.0, 0, 0, 4},
    {0.2, 40, 11, 84},
    {0.4, 101, 21, 110},
    {0.6, 188, 55, 84},
    {0.8, 249, 142, 8},
    {1.0, 252, 255, 164},
}};

torch::Tensor as_hw(const torch::Tensor& t) {
    auto out = t.detach().to(torch::kCPU);
    while (out.dim() > 2) out = out.squeeze(0);
    return out;
}

cv::Mat render_scalar(const torch::Tensor& values, const torch::Tensor& mask, double lo, double hi) {
    auto v = as_hw(values).to(torch::kFloat64).contiguous();
    auto m = as_hw(mask).to(torch::kBool).contiguous();
    const auto h = v.size(0), w = v.size(1);
    auto va = v.accessor<double, 2>();
    auto ma = m.accessor<bool, 2>();
    const double span = hi > lo ? hi - lo : 1.0;
    cv::Mat out(static_cast<int>(h), static_cast<int>(w), CV_8UC3);
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            out.at<cv::Vec3b>(static_cast<int>(i), static_cast<int>(j)) =
                ma[i][j] ? colormap((va[i][j] - lo) / span) : kSentinelBgr;
        }
    }
    return out;
}

} // namespace

cv::Vec3b colormap(double t) {
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
    std::size_t k = 1;
    while (k + 1 < kRamp.size() && t > kRamp[k][0]) ++k;
    const auto& a = kRamp[k - 1];
    const auto& b = kRamp[k];
    const double u = (t - a[0]) / (b[0] - a[0]);
    const auto lerp = [&](int c) { return static_cast<uint8_t>(std::lround(a[c] + u * (b[c] - a[c]))); };
    return {lerp(3), lerp(2), lerp(1)};
}

cv::Mat render_depth(const torch::Tensor& depth, const torch::Tensor& mask, double vmin, double vmax) {
    return render_scalar(depth, mask, vmin, vmax);
}

cv::Mat render_rgb(const torch::Tensor& rgb) {
    auto hwc = (rgb.detach().to(torch::kCPU).clamp(0.0, 1.0) * 255.0)
                   .round()
                   .to(torch::kUInt8)
                   .flip({0})
                   .permute({1, 2, 0})
                   .contiguous();
    cv::Mat out(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3);
    std::memcpy(out.data, hwc.data_ptr<uint8_t>(), static_cast<std::size_t>(hwc.numel()));
    return out;
}

cv::Mat render_error(const torch::Tensor& prediction, const torch::Tensor& truth, const torch::Tensor& mask,
                     double emax) {
    auto err = (prediction.detach().to(torch::kFloat64) - truth.detach().to(torch::kFloat64)).abs();
    return render_scalar(err, mask, 0.0, emax > 0.0 ? emax : 1.0);
}

PanelSet render_panels(const torch::Tensor& prediction, const data::Sample& sample) {
    auto pred = as_hw(prediction).to(torch::kFloat64);
    auto gt = as_hw(sample.depth).to(torch::kFloat64);
    auto mask = as_hw(sample.mask).to(torch::kBool);
    if (pred.sizes() != gt.sizes()) {
        throw InvalidShapeError("render_panels: prediction must be at ground-truth resolution");
    }
    PanelSet p;
    auto valid_gt = gt.masked_select(mask);
    auto valid_pred = pred.masked_select(mask);
    if (valid_gt.numel() > 0) {
        p.vmin = std::min(valid_gt.min().item<double>(), valid_pred.min().item<double>());
        p.vmax = std::max(valid_gt.max().item<double>(), valid_pred.max().item<double>());
        const double e = (valid_pred - valid_gt).abs().max().item<double>();
        p.emax = e > 0.0 ? e : 1.0;
    }
    auto all = torch::ones_like(pred, torch::kBool);
    p.rgb = render_rgb(data::bilinear_resize(sample.rgb, gt.size(0), gt.size(1)));
    p.truth = render_depth(gt, mask, p.vmin, p.vmax);
    p.prediction = render_depth(pred, all, p.vmin, p.vmax);
    p.error = render_error(pred, gt, mask, p.emax);
    return p;
}

std::vector<fs::path> visualize(MSFNet& net, const std::vector<data::Sample>& samples, const fs::path& out_dir,
                                const harness::EvalOptions& options) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string());
    }
    std::vector<fs::path> written;
    const auto write = [&](const fs::path& path, const cv::Mat& image) {
        bool ok = false;
        try {
            ok = cv::imwrite(path.string(), image);
        } catch (const cv::Exception&) {
            ok = false;
        }
        if (!ok) throw IoError("cannot write " + path.string());
        written.push_back(path);
    };

    std::vector<cv::Mat> rows;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        auto pred = harness::predict_depth(net, samples[i], options);
        auto panels = render_panels(pred.depth, samples[i]);
        const auto stem = "sample_" + std::to_string(i);
        write(out_dir / (stem + "_rgb.png"), panels.rgb);
        write(out_dir / (stem + "_gt.png"), panels.truth);
        write(out_dir / (stem + "_pred.png"), panels.prediction);
        write(out_dir / (stem + "_error.png"), panels.error);
        cv::Mat row;
        cv::hconcat(std::vector<cv::Mat>{panels.rgb, panels.truth, panels.prediction, panels.error}, row);
        if (!rows.empty() && row.cols != rows.front().cols) continue;
        rows.push_back(row);
    }
    if (!rows.empty()) {
        cv::Mat sheet;
        cv::vconcat(rows, sheet);
        write(out_dir / "contact_sheet.png", sheet);
    }
    return written;
}

} // namespace msfnet::viz
