#include "msfnet/data.hpp"

#include "msfnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace msfnet::data {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

namespace {

using Vec3 = std::array<double, 3>;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 normalized(const Vec3& a) {
    const double n = std::sqrt(dot(a, a));
    return n > 0.0 ? scale(a, 1.0 / n) : a;
}

void check_chw(const torch::Tensor& t, int64_t channels, const char* what) {
    if (!t.defined() || t.dim() != 3 || t.size(0) != channels) {
        throw InvalidShapeError(std::string(what) + ": expected a [" + std::to_string(channels) +
                                ",H,W] tensor");
    }
}

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Vec3 normal{0, 0, -1};
    Vec3 albedo{0, 0, 0};
    double checker = 0.0;
};

Hit trace(const SceneSpec& scene, const Vec3& ray) {
    Hit best;
    for (const auto& p : scene.planes) {
        const Vec3 n = normalized(p.normal);
        const double denom = dot(n, ray);
        if (std::abs(denom) < 1e-12) continue;
        const double t = p.offset / std::sqrt(dot(p.normal, p.normal)) / denom;
        if (t > 0.0 && t < best.t) {
            best = Hit{t, denom > 0.0 ? scale(n, -1.0) : n, p.albedo, p.checker};
        }
    }
    for (const auto& s : scene.spheres) {
        const double a = dot(ray, ray);
        const double b = -2.0 * dot(ray, s.center);
        const double c = dot(s.center, s.center) - s.radius * s.radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) continue;
        const double t = (-b - std::sqrt(disc)) / (2.0 * a);
        if (t > 0.0 && t < best.t) {
            best = Hit{t, normalized(sub(scale(ray, t), s.center)), s.albedo, 0.0};
        }
    }
    return best;
}

} // namespace

std::string_view to_string(DatasetTag tag) {
    switch (tag) {
    case DatasetTag::nyu: return "nyu";
    case DatasetTag::kitti: return "kitti";
    case DatasetTag::synthetic: return "synthetic";
    }
    return "synthetic";
}

std::string_view to_string(TargetSpace space) {
    return space == TargetSpace::inverse_depth ? "inverse_depth" : "metric_depth";
}

DatasetTag dataset_tag_from_string(std::string_view name) {
    if (name == "nyu") return DatasetTag::nyu;
    if (name == "kitti") return DatasetTag::kitti;
    if (name == "synthetic") return DatasetTag::synthetic;
    throw ConfigError("unknown dataset: " + std::string(name));
}

Split split_from_string(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split: " + std::string(name));
}

torch::Tensor Sample::target() const {
    if (target_space == TargetSpace::metric_depth) {
        return torch::where(mask, depth, torch::zeros_like(depth));
    }
    return torch::where(mask, 1.0 / depth.clamp_min(1e-12), torch::zeros_like(depth));
}

int64_t Sample::valid_pixels() const { return mask.sum().item<int64_t>(); }

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

Rng derive_stream(uint64_t seed, uint64_t index, uint64_t epoch) {
    // splitmix64 finalizer over the combined key
    const auto mix = [](uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return Rng(mix(mix(mix(seed) ^ index) ^ (epoch * 0x2545f4914f6cdd1dULL)));
}

torch::Tensor bilinear_resize(const torch::Tensor& x, int64_t out_h, int64_t out_w) {
    const bool batched = x.dim() == 4;
    auto in = batched ? x : x.unsqueeze(0);
    if (in.size(2) == out_h && in.size(3) == out_w) {
        return x;
    }
    auto out = F::interpolate(in, F::InterpolateFuncOptions()
                                      .size(std::vector<int64_t>{out_h, out_w})
                                      .mode(torch::kBilinear)
                                      .align_corners(false));
    return batched ? out : out.squeeze(0);
}

torch::Tensor nearest_resize(const torch::Tensor& x, int64_t out_h, int64_t out_w) {
    const auto h = x.size(-2), w = x.size(-1);
    auto rows = torch::arange(out_h, torch::kInt64).mul(h).div(out_h, "floor");
    auto cols = torch::arange(out_w, torch::kInt64).mul(w).div(out_w, "floor");
    return x.index_select(-2, rows).index_select(-1, cols);
}

int64_t fill_nearest(torch::Tensor& depth) {
    check_chw(depth, 1, "fill_nearest");
    depth = depth.to(torch::kFloat32).contiguous();
    const auto h = depth.size(1), w = depth.size(2);
    auto acc = depth.accessor<float, 3>();
    std::vector<uint8_t> known(static_cast<std::size_t>(h * w), 0);
    std::deque<int64_t> queue;
    for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
            if (acc[0][i][j] > 0.0f) {
                known[i * w + j] = 1;
                queue.push_back(i * w + j);
            }
        }
    }
    if (queue.empty()) {
        throw InvalidInputError("depth map has no valid pixel to fill from");
    }
    int64_t filled = 0;
    constexpr int di[] = {-1, 1, 0, 0};
    constexpr int dj[] = {0, 0, -1, 1};
    while (!queue.empty()) {
        const auto idx = queue.front();
        queue.pop_front();
        const auto i = idx / w, j = idx % w;
        for (int k = 0; k < 4; ++k) {
            const auto ni = i + di[k], nj = j + dj[k];
            if (ni < 0 || nj < 0 || ni >= h || nj >= w || known[ni * w + nj]) continue;
            known[ni * w + nj] = 1;
            acc[0][ni][nj] = acc[0][i][j];
            ++filled;
            queue.push_back(ni * w + nj);
        }
    }
    return filled;
}

Sample nyu_preprocess(const torch::Tensor& rgb_raw, const torch::Tensor& depth_raw, Split split) {
    check_chw(rgb_raw, 3, "nyu_preprocess rgb");
    check_chw(depth_raw, 1, "nyu_preprocess depth");
    for (const auto* t : {&rgb_raw, &depth_raw}) {
        if (t->size(1) != kNyuRawHeight || t->size(2) != kNyuRawWidth) {
            throw InvalidShapeError("nyu_preprocess: raw frames must be 640x480, got " +
                                    std::to_string(t->size(2)) + "x" + std::to_string(t->size(1)));
        }
    }
    const auto top = (kNyuHalfHeight - kNyuCropHeight) / 2;
    const auto left = (kNyuHalfWidth - kNyuCropWidth) / 2;
    const auto crop = [&](const torch::Tensor& t) {
        return bilinear_resize(t, kNyuHalfHeight, kNyuHalfWidth)
            .index({Slice(), Slice(top, top + kNyuCropHeight), Slice(left, left + kNyuCropWidth)})
            .contiguous();
    };

    auto depth = depth_raw.to(torch::kFloat32).clone();
    Sample s;
    s.filled_pixels = fill_nearest(depth);
    s.rgb = crop(rgb_raw.to(torch::kFloat32));
    s.depth = crop(depth);
    if (split == Split::train) {
        s.depth = bilinear_resize(s.depth, kNyuTargetHeight, kNyuTargetWidth).contiguous();
    }
    s.mask = s.depth > 0;
    s.dataset = DatasetTag::nyu;
    s.target_space = TargetSpace::inverse_depth;
    return s;
}

Sample kitti_preprocess(const torch::Tensor& rgb_raw, const torch::Tensor& depth_raw, Split split,
                        Rng& rng) {
    check_chw(rgb_raw, 3, "kitti_preprocess rgb");
    check_chw(depth_raw, 1, "kitti_preprocess depth");
    if (rgb_raw.size(1) != depth_raw.size(1) || rgb_raw.size(2) != depth_raw.size(2)) {
        throw InvalidShapeError("kitti_preprocess: rgb and depth frames differ in size");
    }
    auto depth = depth_raw.to(torch::kFloat32);
    if ((depth > 0).sum().item<int64_t>() == 0) {
        throw InvalidInputError("kitti_preprocess: empty LIDAR frame");
    }
    auto rgb = rgb_raw.to(torch::kFloat32);

    Sample s;
    s.dataset = DatasetTag::kitti;
    s.target_space = TargetSpace::metric_depth;
    if (split == Split::train) {
        const auto pad_h = std::max<int64_t>(0, kKittiCropHeight - rgb.size(1));
        const auto pad_w = std::max<int64_t>(0, kKittiCropWidth - rgb.size(2));
        if (pad_h > 0 || pad_w > 0) {
            // F::pad order: (left, right, top, bottom)
            rgb = F::pad(rgb.unsqueeze(0), F::PadFuncOptions({0, pad_w, pad_h, 0}).mode(torch::kReflect))
                      .squeeze(0);
            depth = F::pad(depth, F::PadFuncOptions({0, pad_w, pad_h, 0}).value(0.0));
        }
        const auto max_top = rgb.size(1) - kKittiCropHeight;
        const auto max_left = rgb.size(2) - kKittiCropWidth;
        const auto top = static_cast<int64_t>(uniform01(rng) * static_cast<double>(max_top + 1));
        const auto left = static_cast<int64_t>(uniform01(rng) * static_cast<double>(max_left + 1));
        const auto rows = Slice(top, top + kKittiCropHeight);
        const auto cols = Slice(left, left + kKittiCropWidth);
        rgb = rgb.index({Slice(), rows, cols});
        depth = nearest_resize(depth.index({Slice(), rows, cols}), kKittiTargetHeight, kKittiTargetWidth);
    }
    s.rgb = rgb.contiguous();
    s.mask = (depth > 0).logical_and(depth <= kKittiMaxDepth);
    s.depth = torch::where(s.mask, depth, torch::zeros_like(depth)).contiguous();
    return s;
}

DepthRange default_depth_range(DatasetTag tag) {
    switch (tag) {
    case DatasetTag::nyu: return {1e-3, 10.0};
    case DatasetTag::kitti: return {1e-3, kKittiMaxDepth};
    case DatasetTag::synthetic: return {1e-3, 10.0};
    }
    return {};
}

PostprocessResult postprocess_prediction(const torch::Tensor& y, const Sample& sample,
                                         const DepthRange& range) {
    if (!(range.min_depth > 0.0) || !(range.max_depth > range.min_depth)) {
        throw ConfigError("postprocess: invalid depth range");
    }
    auto pred = y.detach().to(torch::kFloat32);
    while (pred.dim() > 3) {
        pred = pred.squeeze(0);
    }
    check_chw(pred, 1, "postprocess_prediction");

    PostprocessResult result;
    result.clamped = (pred <= 0).sum().item<int64_t>();
    if (sample.target_space == TargetSpace::inverse_depth) {
        pred = 1.0 / pred.clamp_min(1.0 / range.max_depth);
    } else {
        pred = pred.clamp_min(range.min_depth);
    }
    pred = bilinear_resize(pred, sample.depth.size(1), sample.depth.size(2));
    result.depth = pred.clamp(range.min_depth, range.max_depth).contiguous();
    return result;
}

void AugmentationPolicy::validate() const {
    for (double p : {p_hflip, p_channel_permute}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError("augmentation probabilities must lie in [0,1]");
        }
    }
    for (double s : normalize_std) {
        if (!(s > 0.0)) throw ConfigError("normalization std must be positive");
    }
}

AugmentationPolicy AugmentationPolicy::identity() {
    return AugmentationPolicy{0.0, 0.0, {0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}};
}

torch::Tensor normalize_rgb(const torch::Tensor& rgb, const AugmentationPolicy& policy) {
    check_chw(rgb, 3, "normalize_rgb");
    auto opts = rgb.options();
    auto mean = torch::tensor(std::vector<double>(policy.normalize_mean.begin(), policy.normalize_mean.end()))
                    .to(opts)
                    .view({3, 1, 1});
    auto std = torch::tensor(std::vector<double>(policy.normalize_std.begin(), policy.normalize_std.end()))
                   .to(opts)
                   .view({3, 1, 1});
    return (rgb - mean) / std;
}

Sample hflip(const Sample& sample) {
    Sample out = sample;
    out.rgb = sample.rgb.flip({-1}).contiguous();
    out.depth = sample.depth.flip({-1}).contiguous();
    out.mask = sample.mask.flip({-1}).contiguous();
    return out;
}

Sample augment(const Sample& sample, const AugmentationPolicy& policy, Rng& rng) {
    policy.validate();
    Sample out = uniform01(rng) < policy.p_hflip ? hflip(sample) : sample;
    if (uniform01(rng) < policy.p_channel_permute) {
        std::array<int64_t, 3> order{0, 1, 2};
        const auto k = static_cast<int>(uniform01(rng) * 6.0);
        for (int i = 0; i < k; ++i) {
            std::next_permutation(order.begin(), order.end());
        }
        out.rgb = out.rgb.index_select(0, torch::tensor({order[0], order[1], order[2]}));
    }
    out.rgb = normalize_rgb(out.rgb, policy);
    return out;
}

Sample render_scene(const SceneSpec& scene, int64_t size, const SynthOptions& options) {
    if (size < 2 || size % 2 != 0) {
        throw InvalidInputError("render_scene: size must be a positive even number");
    }
    const double f = static_cast<double>(size);
    const double c = static_cast<double>(size) / 2.0;
    const Vec3 light = normalized(scene.light);

    auto rgb = torch::empty({3, size, size}, torch::kFloat32);
    auto rgb_acc = rgb.accessor<float, 3>();
    for (int64_t v = 0; v < size; ++v) {
        for (int64_t u = 0; u < size; ++u) {
            const Vec3 ray{(u + 0.5 - c) / f, (v + 0.5 - c) / f, 1.0};
            const Hit hit = trace(scene, ray);
            Vec3 color{0.05, 0.05, 0.05};
            if (std::isfinite(hit.t)) {
                const double shade = scene.ambient + (1.0 - scene.ambient) * std::max(0.0, dot(hit.normal, light));
                double tex = 1.0;
                if (hit.checker > 0.0) {
                    const Vec3 p = scale(ray, hit.t);
                    const auto cell = static_cast<int64_t>(std::floor(p[0] * 2.0) + std::floor(p[1] * 2.0) +
                                                           std::floor(p[2] * 2.0));
                    tex = (cell % 2 == 0) ? 1.0 - hit.checker : 1.0;
                }
                color = scale(hit.albedo, shade * tex);
            }
            for (int ch = 0; ch < 3; ++ch) {
                rgb_acc[ch][v][u] = static_cast<float>(std::clamp(color[ch], 0.0, 1.0));
            }
        }
    }

    const int64_t half = size / 2;
    auto depth = torch::empty({1, half, half}, torch::kFloat32);
    auto depth_acc = depth.accessor<float, 3>();
    for (int64_t i = 0; i < half; ++i) {
        for (int64_t j = 0; j < half; ++j) {
            const Vec3 ray{(2.0 * j + 1.0 - c) / f, (2.0 * i + 1.0 - c) / f, 1.0};
            const Hit hit = trace(scene, ray);
            // ray z component is 1, so the hit distance along the ray equals z-depth
            const double z = std::isfinite(hit.t) ? hit.t : options.max_depth;
            depth_acc[0][i][j] = static_cast<float>(std::clamp(z, options.min_depth, options.max_depth));
        }
    }

    Sample s;
    s.rgb = rgb;
    s.depth = depth;
    s.mask = torch::ones({1, half, half}, torch::kBool);
    s.dataset = DatasetTag::synthetic;
    s.target_space = options.target_space;
    return s;
}

SceneSpec random_scene(Rng& rng) {
    const auto color = [&]() {
        return Vec3{uniform(rng, 0.2, 1.0), uniform(rng, 0.2, 1.0), uniform(rng, 0.2, 1.0)};
    };
    SceneSpec scene;
    {
        const Vec3 n = normalized({uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3), 1.0});
        const double axis_depth = uniform(rng, 4.0, 9.0);
        scene.planes.push_back(Plane{n, axis_depth * n[2], color(), uniform(rng, 0.0, 0.3)});
    }
    if (uniform01(rng) < 0.6) {
        scene.planes.push_back(Plane{{0.0, 1.0, 0.0}, uniform(rng, 0.8, 1.6), color(), uniform(rng, 0.0, 0.3)});
    }
    const int spheres = 1 + static_cast<int>(uniform01(rng) * 3.0);
    for (int k = 0; k < spheres; ++k) {
        const double z = uniform(rng, 1.5, 6.0);
        scene.spheres.push_back(Sphere{{uniform(rng, -0.35, 0.35) * z, uniform(rng, -0.25, 0.25) * z, z},
                                       uniform(rng, 0.3, 1.0),
                                       color()});
    }
    scene.light = {uniform(rng, -0.6, 0.6), uniform(rng, -1.0, -0.3), -1.0};
    scene.ambient = uniform(rng, 0.2, 0.35);
    return scene;
}

std::vector<Sample> synth_generate(uint64_t seed, int64_t count, int64_t size, const SynthOptions& options) {
    if (size < 32 || size % 32 != 0) {
        throw InvalidInputError("synth_generate: size must be divisible by 32");
    }
    if (!(options.min_depth > 0.0) || !(options.max_depth > options.min_depth)) {
        throw ConfigError("synth_generate: invalid depth range");
    }
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(std::max<int64_t>(count, 0)));
    for (int64_t i = 0; i < count; ++i) {
        auto rng = derive_stream(seed, static_cast<uint64_t>(i));
        out.push_back(render_scene(random_scene(rng), size, options));
    }
    return out;
}

Batch collate(const std::vector<Sample>& samples) {
    if (samples.empty()) {
        throw InvalidInputError("collate: empty batch");
    }
    std::vector<torch::Tensor> rgb, target, mask;
    for (const auto& s : samples) {
        if (s.rgb.sizes() != samples[0].rgb.sizes() || s.depth.sizes() != samples[0].depth.sizes()) {
            throw InvalidShapeError("collate: samples differ in size");
        }
        rgb.push_back(s.rgb);
        target.push_back(s.target());
        mask.push_back(s.mask);
    }
    return Batch{torch::stack(rgb), torch::stack(target), torch::stack(mask)};
}

} // namespace msfnet::data
