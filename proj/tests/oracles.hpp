#pragma once

// Plain-loop reference implementations used by the unit tests and the acceptance suite.
// They share no code with the library.

#include "msfnet/losses.hpp"

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace msfnet::oracles {

using losses::LossConfig;

inline std::vector<double> flat(const torch::Tensor& t) {
    auto c = t.to(torch::kFloat64).contiguous().view(-1);
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

// (1/n) sum softmax(e) e + (1/n) sum e, written with plain loops.
inline double weighted_l1_oracle(const std::vector<double>& e) {
    const double n = static_cast<double>(e.size());
    const double top = *std::max_element(e.begin(), e.end());
    double z = 0.0, weighted = 0.0, plain = 0.0;
    for (double v : e) z += std::exp(v - top);
    for (double v : e) {
        weighted += std::exp(v - top) / z * v;
        plain += v;
    }
    return weighted / n + plain / n;
}

inline double batch_loss_oracle(const torch::Tensor& y, const torch::Tensor& t, const torch::Tensor& m, bool per_image) {
    const auto b = y.size(0);
    std::vector<double> all;
    double image_sum = 0.0;
    int images = 0;
    for (int64_t k = 0; k < b; ++k) {
        auto ys = flat(y[k]), ts = flat(t[k]), ms = flat(m[k].to(torch::kFloat64));
        std::vector<double> e;
        for (std::size_t i = 0; i < ys.size(); ++i)
            if (ms[i] > 0.5) e.push_back(std::abs(ys[i] - ts[i]));
        all.insert(all.end(), e.begin(), e.end());
        if (!e.empty()) {
            image_sum += weighted_l1_oracle(e);
            ++images;
        }
    }
    return per_image ? image_sum / images : weighted_l1_oracle(all);
}

inline double grad_loss_oracle(const torch::Tensor& y, const torch::Tensor& t, const torch::Tensor& m) {
    auto ya = y.accessor<double, 4>(), ta = t.accessor<double, 4>();
    auto mb = m.to(torch::kBool);
    auto ma = mb.accessor<bool, 4>();
    double total = 0.0;
    int64_t n = 0;
    for (int64_t b = 0; b < y.size(0); ++b)
        for (int64_t i = 0; i < y.size(2); ++i)
            for (int64_t j = 0; j < y.size(3); ++j) {
                if (!ma[b][0][i][j]) continue;
                ++n;
                const double d = ya[b][0][i][j] - ta[b][0][i][j];
                if (j + 1 < y.size(3) && ma[b][0][i][j + 1])
                    total += std::abs(ya[b][0][i][j + 1] - ta[b][0][i][j + 1] - d);
                if (i + 1 < y.size(2) && ma[b][0][i + 1][j])
                    total += std::abs(ya[b][0][i + 1][j] - ta[b][0][i + 1][j] - d);
            }
    return total / static_cast<double>(n);
}

// Per-window weighted statistics, skipping any window touching an invalid pixel.
inline double ssim_oracle(const torch::Tensor& y, const torch::Tensor& t, const torch::Tensor& m, const LossConfig& cfg) {
    const int64_t win = cfg.ssim_window, half = win / 2;
    std::vector<double> g(static_cast<std::size_t>(win));
    for (int64_t k = 0; k < win; ++k) {
        const double x = static_cast<double>(k - half);
        g[static_cast<std::size_t>(k)] = std::exp(-x * x / (2.0 * cfg.ssim_sigma * cfg.ssim_sigma));
    }
    const double gs = std::accumulate(g.begin(), g.end(), 0.0);
    for (auto& v : g) v /= gs;
    auto ya = y.accessor<double, 4>(), ta = t.accessor<double, 4>();
    auto mb = m.to(torch::kBool);
    auto ma = mb.accessor<bool, 4>();
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t b = 0; b < y.size(0); ++b)
        for (int64_t i = 0; i + win <= y.size(2); ++i)
            for (int64_t j = 0; j + win <= y.size(3); ++j) {
                bool ok = true;
                double my = 0, mt = 0, syy = 0, stt = 0, syt = 0;
                for (int64_t p = 0; p < win; ++p)
                    for (int64_t q = 0; q < win; ++q) {
                        ok = ok && ma[b][0][i + p][j + q];
                        const double w = g[static_cast<std::size_t>(p)] * g[static_cast<std::size_t>(q)];
                        const double a = ya[b][0][i + p][j + q], c = ta[b][0][i + p][j + q];
                        my += w * a;
                        mt += w * c;
                        syy += w * a * a;
                        stt += w * c * c;
                        syt += w * a * c;
                    }
                if (!ok) continue;
                const double vy = syy - my * my, vt = stt - mt * mt, cov = syt - my * mt;
                sum += ((2 * my * mt + cfg.ssim_c1) * (2 * cov + cfg.ssim_c2)) /
                       ((my * my + mt * mt + cfg.ssim_c1) * (vy + vt + cfg.ssim_c2));
                ++count;
            }
    return sum / static_cast<double>(count);
}

// mean |y2 - t| + mean |y3 - t| over valid pixels.
inline double aux_loss_oracle(const torch::Tensor& y2, const torch::Tensor& y3, const torch::Tensor& t,
                              const torch::Tensor& m) {
    auto a = flat(y2), b = flat(y3), ts = flat(t), ms = flat(m.to(torch::kFloat64));
    double sa = 0.0, sb = 0.0;
    int64_t n = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ms[i] < 0.5) continue;
        sa += std::abs(a[i] - ts[i]);
        sb += std::abs(b[i] - ts[i]);
        ++n;
    }
    return sa / static_cast<double>(n) + sb / static_cast<double>(n);
}

} // namespace msfnet::oracles
