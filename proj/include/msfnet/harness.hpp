#pragma once

#include "msfnet/checkpoint.hpp"
#include "msfnet/data.hpp"
#include "msfnet/losses.hpp"
#include "msfnet/metrics.hpp"
#include "msfnet/network.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace msfnet::harness {

struct LrDecay {
    // Multiplier applied every `every_epochs` epochs. 0.05 is the literal "reduce to 5%" reading.
    double factor = 0.95;
    int64_t every_epochs = 5;
};

struct TrainConfig {
    double lr0 = 1e-4;
    LrDecay lr_decay;
    double weight_decay = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int64_t batch_size = 8;
    int64_t epochs = 20;
    uint64_t seed = 0;
    // Start every depth head's bias at the mean training target instead of zero.
    bool init_head_bias = true;

    losses::LossConfig loss;
    data::AugmentationPolicy augmentation;
    NetworkOptions network;
    data::DepthRange depth_range;

    // Output directory for CSV logs and checkpoints; empty keeps everything in memory.
    std::filesystem::path out_dir;
    bool save_checkpoints = true;

    void validate() const;

    // Per-dataset defaults: NYU batch 16, lambda = mu = 0.1, SSIM range of the inverse target;
    // KITTI batch 8, lambda = mu = 1, 80 m range; synthetic batch 8, lambda = mu = 1, metric range.
    static TrainConfig defaults_for(data::DatasetTag tag);
};

// lr0 * factor^floor(epoch / every_epochs)
double learning_rate(const TrainConfig& config, int64_t epoch);

struct IterationLog {
    int64_t epoch = 0;
    int64_t iteration = 0;
    double lr = 0.0;
    losses::LossBreakdown loss;
};

struct EpochLog {
    int64_t epoch = 0;
    double lr = 0.0;
    std::optional<metrics::MetricReport> validation;
};

struct TrainResult {
    MSFNet net{nullptr};
    std::vector<IterationLog> iterations;
    std::vector<EpochLog> epochs;
    std::filesystem::path last_checkpoint;
    std::filesystem::path best_checkpoint;
};

inline constexpr const char* kIterationCsvHeader = "epoch,iteration,lr,total,batch_or_l1,grad,ssim,aux";

std::string to_csv_row(const IterationLog& log);

// Fills the bias of every live depth head with the mean valid target of `samples`.
void init_head_biases(MSFNet& net, const std::vector<data::Sample>& samples);

// Pads the batch to a multiple of 32 (replicated borders), runs the network and crops every
// head back to out_h x out_w.
NetworkOutput forward_cropped(MSFNet& net, const torch::Tensor& rgb, int64_t out_h, int64_t out_w,
                              bool training);

// Sample order for an epoch; depends only on (seed, epoch).
std::vector<std::size_t> epoch_order(uint64_t seed, int64_t epoch, std::size_t count);

// Adam training with the configured step schedule. Deterministic given the seed.
TrainResult train(const TrainConfig& config, const NetworkVariant& variant,
                  const std::vector<data::Sample>& train_set,
                  const std::vector<data::Sample>& validation_set = {});

struct EvalOptions {
    data::AugmentationPolicy normalization;
    data::DepthRange depth_range;
    // Uses the ground truth as the prediction; exercises the metric pipeline end to end.
    bool oracle = false;
};

struct EvaluationResult {
    metrics::MetricReport report;
    std::vector<metrics::ImageMetrics> per_image;
    int64_t clamped = 0;
};

// Evaluation-mode prediction for one sample, post-processed to ground-truth resolution.
data::PostprocessResult predict_depth(MSFNet& net, const data::Sample& sample, const EvalOptions& options);

EvaluationResult evaluate(MSFNet& net, const std::vector<data::Sample>& samples, const EvalOptions& options);

// Loads the checkpoint, checks it against `expected` when given, evaluates and optionally
// writes the metric CSV.
EvaluationResult evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                     const std::vector<data::Sample>& samples, const EvalOptions& options,
                                     const std::optional<NetworkVariant>& expected = std::nullopt,
                                     const std::filesystem::path& csv_path = {});

struct AblationRow {
    std::string variant;
    metrics::MetricReport report;
};

struct AblationResult {
    std::vector<AblationRow> rows; // per-metric median over seeds, ladder order
    std::vector<std::vector<AblationRow>> per_seed;
};

// Trains and evaluates the five-variant ladder for every seed on identical batch sequences.
AblationResult ablate(const TrainConfig& config, const std::vector<data::Sample>& train_set,
                      const std::vector<data::Sample>& test_set, const std::vector<uint64_t>& seeds);

// Method | REL | RMSE | log10 | d1 | d2 | d3
std::string format_ablation_table(const std::vector<AblationRow>& rows);
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

} // namespace msfnet::harness
