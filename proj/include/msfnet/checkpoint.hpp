#pragma once

#include "msfnet/network.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <optional>
#include <string>

namespace msfnet {

// Checkpoint archive (torch serialize format) holding a flat key -> value map:
//
//   "format"            string  "msfnet-checkpoint"
//   "version"           int     kCheckpointVersion
//   "meta"              string  JSON {variant, network, epoch, learning_rate, note}
//   "param/<name>"      tensor  every registered parameter, by dotted module path
//   "buffer/<name>"     tensor  batch-norm running statistics and counters
//   "optimizer"         archive optional Adam state (torch::optim serialization)
inline constexpr int64_t kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "msfnet-checkpoint";

struct CheckpointMeta {
    NetworkVariant variant;
    NetworkOptions network;
    int64_t epoch = 0;
    double learning_rate = 0.0;
    std::string note;
};

void save_checkpoint(const std::filesystem::path& path, MSFNet& net, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
    MSFNet net{nullptr};
    CheckpointMeta meta;
    bool has_optimizer_state = false;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Restores optimizer state into an optimizer built over the loaded network's parameters.
void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer);

} // namespace msfnet
