#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace msfnet::data {

enum class DatasetTag { nyu, kitti, synthetic };
enum class TargetSpace { inverse_depth, metric_depth };
enum class Split { train, test };

std::string_view to_string(DatasetTag tag);
std::string_view to_string(TargetSpace space);
DatasetTag dataset_tag_from_string(std::string_view name);
Split split_from_string(std::string_view name);

// One training or evaluation item. `depth` is always metric (meters); the regression target
// is derived from it according to `target_space`.
struct Sample {
    torch::Tensor rgb;   // [3,H,W] float, [0,1] before normalization
    torch::Tensor depth; // [1,h,w] float meters, 0 where invalid
    torch::Tensor mask;  // [1,h,w] bool
    DatasetTag dataset = DatasetTag::synthetic;
    TargetSpace target_space = TargetSpace::inverse_depth;
    int64_t filled_pixels = 0; // holes filled during ingestion

    // 1/depth or depth on valid pixels, zero elsewhere.
    torch::Tensor target() const;
    int64_t valid_pixels() const;
};

using Rng = std::mt19937_64;

// Uniform double in [0,1) from the top 53 bits of one draw.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);

// Independent stream for (seed, sample index, epoch).
Rng derive_stream(uint64_t seed, uint64_t index, uint64_t epoch = 0);

// --- NYU-Depth V2 -----------------------------------------------------------------------

inline constexpr int64_t kNyuRawHeight = 480, kNyuRawWidth = 640;
inline constexpr int64_t kNyuHalfHeight = 240, kNyuHalfWidth = 320;
inline constexpr int64_t kNyuCropHeight = 228, kNyuCropWidth = 304;
inline constexpr int64_t kNyuTargetHeight = 114, kNyuTargetWidth = 152;

// Replaces nonpositive depths by the value of the nearest valid pixel (BFS order).
// Returns the number of pixels filled. Throws if there is no valid pixel at all.
int64_t fill_nearest(torch::Tensor& depth);

// Half-scale, center crop 304x228; train depth is further resized to 152x114.
// rgb_raw [3,480,640] in [0,1]; depth_raw [1,480,640] meters with 0 marking holes.
Sample nyu_preprocess(const torch::Tensor& rgb_raw, const torch::Tensor& depth_raw, Split split);

// --- KITTI ------------------------------------------------------------------------------

inline constexpr int64_t kKittiCropHeight = 385, kKittiCropWidth = 513;
inline constexpr int64_t kKittiTargetHeight = 193, kKittiTargetWidth = 257;
inline constexpr double kKittiMaxDepth = 80.0;

// Train: random 385x513 crop (reflect-padded rgb when the frame is smaller, invalid-padded
// depth), sparse depth nearest-downsampled to 193x257. Test: full frame. Returns beyond
// 80 m are masked out.
Sample kitti_preprocess(const torch::Tensor& rgb_raw, const torch::Tensor& depth_raw, Split split,
                        Rng& rng);

// Nearest-neighbour resize of a sparse map: out[i,j] = in[floor(i*H/h), floor(j*W/w)].
torch::Tensor nearest_resize(const torch::Tensor& x, int64_t out_h, int64_t out_w);

// Bilinear resize (half-pixel centers) of a [C,H,W] or [B,C,H,W] tensor.
torch::Tensor bilinear_resize(const torch::Tensor& x, int64_t out_h, int64_t out_w);

// --- Prediction post-processing -----------------------------------------------------------

struct DepthRange {
    double min_depth = 1e-3;
    double max_depth = 10.0;
};

DepthRange default_depth_range(DatasetTag tag);

struct PostprocessResult {
    torch::Tensor depth;   // [1,H_gt,W_gt] meters
    int64_t clamped = 0;   // nonpositive network outputs replaced before inversion
};

// Inverse-depth targets: reciprocal then bilinear resize. Metric targets: bilinear resize.
// The result is clamped to `range`.
PostprocessResult postprocess_prediction(const torch::Tensor& y, const Sample& sample,
                                         const DepthRange& range);

// --- Augmentation ------------------------------------------------------------------------

struct AugmentationPolicy {
    double p_hflip = 0.5;
    double p_channel_permute = 0.25;
    std::array<double, 3> normalize_mean{0.485, 0.456, 0.406};
    std::array<double, 3> normalize_std{0.229, 0.224, 0.225};

    void validate() const;
    static AugmentationPolicy identity();
};

torch::Tensor normalize_rgb(const torch::Tensor& rgb, const AugmentationPolicy& policy);

// Joint horizontal flip of rgb/depth/mask, rgb channel permutation, then normalization.
Sample augment(const Sample& sample, const AugmentationPolicy& policy, Rng& rng);

// Horizontal flip applied jointly to rgb, depth and mask.
Sample hflip(const Sample& sample);

// --- Synthetic scenes ---------------------------------------------------------------------

struct Plane {
    std::array<double, 3> normal{0, 0, 1}; // points X with normal . X = offset
    double offset = 3.0;
    std::array<double, 3> albedo{0.7, 0.7, 0.7};
    double checker = 0.0; // texture contrast in [0,1)
};

struct Sphere {
    std::array<double, 3> center{0, 0, 3};
    double radius = 1.0;
    std::array<double, 3> albedo{0.7, 0.7, 0.7};
};

struct SceneSpec {
    std::vector<Plane> planes;
    std::vector<Sphere> spheres;
    std::array<double, 3> light{0.3, -0.5, -1.0}; // direction towards the light
    double ambient = 0.25;
};

struct SynthOptions {
    double min_depth = 0.5;
    double max_depth = 10.0;
    TargetSpace target_space = TargetSpace::metric_depth;
};

// Pinhole camera at the origin looking down +z with focal length equal to `size` pixels.
// rgb is rendered at size x size, analytic z-depth at the half-resolution pixel centers.
Sample render_scene(const SceneSpec& scene, int64_t size, const SynthOptions& options = {});

SceneSpec random_scene(Rng& rng);

// `count` random plane/sphere scenes; deterministic per seed. size must be divisible by 32.
std::vector<Sample> synth_generate(uint64_t seed, int64_t count, int64_t size,
                                   const SynthOptions& options = {});

// --- Batching -----------------------------------------------------------------------------

struct Batch {
    torch::Tensor rgb;    // [B,3,H,W]
    torch::Tensor target; // [B,1,h,w]
    torch::Tensor mask;   // [B,1,h,w] bool
};

Batch collate(const std::vector<Sample>& samples);

// --- On-disk datasets ---------------------------------------------------------------------

struct ManifestEntry {
    std::string rgb;
    std::string depth;
};

// One line per sample: rgb path <TAB> depth path. Blank lines and '#' comments are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Depth scale (raw integer units per meter) for 16-bit PNG depth files.
double depth_png_scale(DatasetTag tag);

// rgb [3,H,W] float in [0,1].
torch::Tensor load_rgb(const std::filesystem::path& path);

// [1,H,W] meters. 16-bit PNG divided by `scale`, or raw little-endian float32 (.f32/.bin)
// with dimensions `height` x `width`.
torch::Tensor load_depth(const std::filesystem::path& path, double scale, int64_t height = 0,
                         int64_t width = 0);

// Environment variable naming the default dataset root for the CLI.
inline constexpr const char* kDataRootEnv = "MSFNET_DATA_ROOT";

// Manifests are <root>/<split>.tsv with paths relative to root. KITTI additionally accepts
// the raw-sync layout: <root>/<drive>/image_02/data/*.png paired with
// <root>/<drive>/proj_depth/groundtruth/image_02/*.png.
std::vector<Sample> load_dataset(DatasetTag tag, const std::filesystem::path& root, Split split,
                                 uint64_t seed);

} // namespace msfnet::data
