#pragma once

#include "msfnet/harness.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace msfnet::config {

using nlohmann::json;

json to_json(const NetworkOptions& options);
NetworkOptions network_options_from_json(const json& j);

json to_json(const losses::LossConfig& cfg);
losses::LossConfig loss_config_from_json(const json& j, losses::LossConfig defaults = {});

json to_json(const data::AugmentationPolicy& policy);
data::AugmentationPolicy augmentation_from_json(const json& j, data::AugmentationPolicy defaults = {});

struct SyntheticSetup {
    int64_t train_count = 64;
    int64_t test_count = 16;
    int64_t size = 64;
    uint64_t seed = 1234;
    data::SynthOptions options;
};

// Everything a CLI run needs. Missing keys fall back to the per-dataset defaults.
//
// {
//   "dataset": "synthetic" | "nyu" | "kitti",
//   "data_root": "...",
//   "variant": "baseline+USF+EDA+batch-loss",
//   "train": { "lr0", "lr_decay_factor", "lr_decay_every", "weight_decay", "adam_beta1",
//              "adam_beta2", "batch_size", "epochs", "seed" },
//   "loss": { "lambda", "mu", "batch_loss_scope", "ssim_window", "ssim_sigma",
//             "ssim_c1", "ssim_c2" },
//   "augmentation": { "p_hflip", "p_channel_permute", "normalize_mean", "normalize_std" },
//   "network": { "encoder": { "kind", "stage_channels", "stem" }, "up_channels",
//                "fused_channels", "decoder_channels" },
//   "depth_range": { "min", "max" },
//   "synthetic": { "train_count", "test_count", "size", "seed", "min_depth", "max_depth",
//                  "target_space" }
// }
struct RunConfig {
    data::DatasetTag dataset = data::DatasetTag::synthetic;
    std::filesystem::path data_root;
    NetworkVariant variant = NetworkVariant::full();
    harness::TrainConfig train;
    SyntheticSetup synthetic;
};

RunConfig run_config_from_json(const json& j);
json to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);

} // namespace msfnet::config
