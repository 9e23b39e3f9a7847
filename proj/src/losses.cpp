#include "msfnet/losses.hpp"

#include "msfnet/errors.hpp"

#include <cmath>
#include <string>

namespace msfnet::losses {

namespace F = torch::nn::functional;

namespace {

torch::Tensor as_bool_mask(const torch::Tensor& y, const torch::Tensor& mask) {
    if (!mask.defined()) {
        return torch::ones_like(y, torch::kBool);
    }
    if (mask.sizes() != y.sizes()) {
        throw InvalidShapeError("loss: mask shape does not match prediction");
    }
    return mask.to(torch::kBool);
}

void check_pair(const torch::Tensor& y, const torch::Tensor& yhat, const char* what) {
    if (!y.defined() || !yhat.defined() || y.dim() != 4) {
        throw InvalidShapeError(std::string(what) + ": expected [B,1,h,w] tensors");
    }
    if (y.sizes() != yhat.sizes()) {
        throw InvalidShapeError(std::string(what) + ": prediction and target shapes differ");
    }
}

torch::Tensor weighted_l1(const torch::Tensor& errors) {
    const auto n = static_cast<double>(errors.numel());
    // Max subtraction keeps exp() finite; the softmax weights are unchanged.
    auto shifted = torch::exp(errors - errors.max().detach());
    auto weights = shifted / shifted.sum();
    return (weights * errors).sum() / n + errors.sum() / n;
}

} // namespace

std::string_view to_string(BatchLossScope scope) {
    return scope == BatchLossScope::per_batch ? "per_batch" : "per_image";
}

BatchLossScope batch_loss_scope_from_string(std::string_view name) {
    if (name == "per_batch") return BatchLossScope::per_batch;
    if (name == "per_image") return BatchLossScope::per_image;
    throw ConfigError("unknown batch loss scope: " + std::string(name));
}

LossConfig& LossConfig::with_dynamic_range(double max_value) {
    ssim_c1 = std::pow(0.01 * max_value, 2);
    ssim_c2 = std::pow(0.03 * max_value, 2);
    return *this;
}

void LossConfig::validate() const {
    if (!(lambda >= 0.0) || !(mu >= 0.0)) {
        throw ConfigError("loss weights lambda and mu must be nonnegative");
    }
    if (ssim_window < 1 || ssim_window % 2 == 0) {
        throw ConfigError("ssim window must be a positive odd integer");
    }
    if (!(ssim_sigma > 0.0) || !(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) {
        throw ConfigError("ssim sigma and stabilizers must be positive");
    }
}

torch::Tensor masked_l1(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask) {
    check_pair(y, yhat, "l1");
    auto errors = (y - yhat).abs().masked_select(as_bool_mask(y, mask));
    if (errors.numel() == 0) {
        throw EmptyMaskError("l1: mask has no valid pixels");
    }
    return errors.mean();
}

torch::Tensor batch_loss(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask,
                         BatchLossScope scope) {
    check_pair(y, yhat, "batch_loss");
    auto valid = as_bool_mask(y, mask);
    auto errors = (y - yhat).abs();
    if (scope == BatchLossScope::per_batch) {
        auto e = errors.masked_select(valid);
        if (e.numel() == 0) {
            throw EmptyMaskError("batch_loss: mask has no valid pixels");
        }
        return weighted_l1(e);
    }
    std::vector<torch::Tensor> per_image;
    for (int64_t b = 0; b < y.size(0); ++b) {
        auto e = errors[b].masked_select(valid[b]);
        if (e.numel() > 0) {
            per_image.push_back(weighted_l1(e));
        }
    }
    if (per_image.empty()) {
        throw EmptyMaskError("batch_loss: mask has no valid pixels");
    }
    return torch::stack(per_image).mean();
}

torch::Tensor grad_loss(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask) {
    using torch::indexing::None;
    using torch::indexing::Slice;
    check_pair(y, yhat, "grad_loss");
    auto valid = as_bool_mask(y, mask);
    const auto n = valid.sum().item<int64_t>();
    if (n == 0) {
        throw EmptyMaskError("grad_loss: mask has no valid pixels");
    }
    auto d = y - yhat;
    auto gx = d.index({"...", Slice(1, None)}) - d.index({"...", Slice(None, -1)});
    auto gy = d.index({"...", Slice(1, None), Slice()}) - d.index({"...", Slice(None, -1), Slice()});
    auto vx = valid.index({"...", Slice(1, None)}).logical_and(valid.index({"...", Slice(None, -1)}));
    auto vy = valid.index({"...", Slice(1, None), Slice()})
                  .logical_and(valid.index({"...", Slice(None, -1), Slice()}));
    auto total = gx.abs().masked_select(vx).sum() + gy.abs().masked_select(vy).sum();
    return total / static_cast<double>(n);
}

torch::Tensor gaussian_taps(int64_t size, double sigma, torch::TensorOptions options) {
    auto x = torch::arange(size, options) - static_cast<double>(size / 2);
    auto g = torch::exp(-(x * x) / (2.0 * sigma * sigma));
    return g / g.sum();
}

torch::Tensor ssim(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask,
                   const LossConfig& cfg) {
    cfg.validate();
    check_pair(y, yhat, "ssim");
    const auto win = cfg.ssim_window;
    if (y.size(2) < win || y.size(3) < win) {
        throw InvalidShapeError("ssim: image " + std::to_string(y.size(2)) + "x" +
                                std::to_string(y.size(3)) + " is smaller than the " +
                                std::to_string(win) + "x" + std::to_string(win) + " window");
    }
    const auto channels = y.size(1);
    auto taps = gaussian_taps(win, cfg.ssim_sigma, y.options());
    auto window = torch::outer(taps, taps).expand({channels, 1, win, win}).contiguous();
    const auto filter = [&](const torch::Tensor& t) {
        return F::conv2d(t, window, F::Conv2dFuncOptions().groups(channels));
    };

    auto mu_y = filter(y);
    auto mu_t = filter(yhat);
    auto var_y = filter(y * y) - mu_y * mu_y;
    auto var_t = filter(yhat * yhat) - mu_t * mu_t;
    auto cov = filter(y * yhat) - mu_y * mu_t;
    const auto c1 = cfg.ssim_c1, c2 = cfg.ssim_c2;
    auto map = ((2.0 * mu_y * mu_t + c1) * (2.0 * cov + c2)) /
               ((mu_y * mu_y + mu_t * mu_t + c1) * (var_y + var_t + c2));

    auto invalid = as_bool_mask(y, mask).logical_not().to(y.scalar_type());
    auto window_ok = F::max_pool2d(invalid, F::MaxPool2dFuncOptions(win).stride(1)) == 0;
    auto values = map.masked_select(window_ok);
    if (values.numel() == 0) {
        throw EmptyMaskError("ssim: no window is fully covered by valid pixels");
    }
    return values.mean();
}

torch::Tensor ssim_loss(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask,
                        const LossConfig& cfg) {
    return (1.0 - ssim(y, yhat, mask, cfg)) / 2.0;
}

torch::Tensor aux_loss(const torch::Tensor& y2, const torch::Tensor& y3, const torch::Tensor& yhat,
                       const torch::Tensor& mask) {
    return masked_l1(y2, yhat, mask) + masked_l1(y3, yhat, mask);
}

LossResult total_loss(const NetworkOutput& output, const torch::Tensor& yhat, const torch::Tensor& mask,
                      const LossConfig& cfg) {
    cfg.validate();
    const auto& y = output.y;
    auto first = cfg.use_batch_loss ? batch_loss(y, yhat, mask, cfg.batch_loss_scope)
                                    : masked_l1(y, yhat, mask);
    auto grad = grad_loss(y, yhat, mask);
    auto structural = ssim_loss(y, yhat, mask, cfg);
    auto aux = torch::zeros({}, y.options());
    if (output.y2_live) aux = aux + masked_l1(output.y2, yhat, mask);
    if (output.y3_live) aux = aux + masked_l1(output.y3, yhat, mask);

    LossResult result;
    result.total = cfg.lambda * first + grad + structural + cfg.mu * aux;
    result.breakdown = LossBreakdown{
        .total = result.total.item<double>(),
        .batch_or_l1 = first.item<double>(),
        .grad = grad.item<double>(),
        .ssim = structural.item<double>(),
        .aux = aux.item<double>(),
    };
    return result;
}

} // namespace msfnet::losses
