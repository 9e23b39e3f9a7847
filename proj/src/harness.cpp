#include "msfnet/harness.hpp"

#include "msfnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace msfnet::harness {

namespace F = torch::nn::functional;
namespace fs = std::filesystem;
using torch::indexing::Slice;

namespace {

// Keeps augmentation streams disjoint from the shuffling stream.
constexpr uint64_t kAugmentStreamTag = 0xa5a5'0000'0000'0001ULL;
constexpr uint64_t kShuffleStreamTag = 0x5a5a'0000'0000'0002ULL;

bool finite(const losses::LossBreakdown& b) {
    return std::isfinite(b.total) && std::isfinite(b.batch_or_l1) && std::isfinite(b.grad) &&
           std::isfinite(b.ssim) && std::isfinite(b.aux);
}

void dump_batch(const fs::path& out_dir, const data::Batch& batch, const NetworkOutput& out) {
    if (out_dir.empty()) return;
    fs::create_directories(out_dir);
    torch::save(std::vector<torch::Tensor>{batch.rgb, batch.target, batch.mask, out.y.detach(),
                                           out.y2.detach(), out.y3.detach()},
                (out_dir / "nonfinite_batch.pt").string());
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace

void TrainConfig::validate() const {
    if (!(lr0 > 0.0) || !(lr_decay.factor > 0.0) || lr_decay.every_epochs < 1) {
        throw ConfigError("train: learning rate and decay must be positive");
    }
    if (!(weight_decay >= 0.0) || !(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
        !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
        throw ConfigError("train: invalid Adam hyperparameters");
    }
    if (batch_size < 1) throw ConfigError("train: batch size must be at least 1");
    if (epochs < 0) throw ConfigError("train: epoch count must be nonnegative");
    loss.validate();
    augmentation.validate();
    network.validate();
}

TrainConfig TrainConfig::defaults_for(data::DatasetTag tag) {
    TrainConfig c;
    c.depth_range = data::default_depth_range(tag);
    switch (tag) {
    case data::DatasetTag::nyu:
        c.batch_size = 16;
        c.loss.lambda = c.loss.mu = 0.1;
        c.loss.with_dynamic_range(1.0 / 0.5);
        break;
    case data::DatasetTag::kitti:
        c.batch_size = 8;
        c.loss.lambda = c.loss.mu = 1.0;
        c.loss.with_dynamic_range(data::kKittiMaxDepth);
        break;
    case data::DatasetTag::synthetic:
        c.batch_size = 8;
        c.loss.lambda = c.loss.mu = 1.0;
        c.loss.with_dynamic_range(data::SynthOptions{}.max_depth);
        break;
    }
    return c;
}

double learning_rate(const TrainConfig& config, int64_t epoch) {
    const auto steps = epoch / config.lr_decay.every_epochs;
    return config.lr0 * std::pow(config.lr_decay.factor, static_cast<double>(steps));
}

std::string to_csv_row(const IterationLog& log) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.9g,%.17g,%.17g,%.17g,%.17g,%.17g",
                  static_cast<long long>(log.epoch), static_cast<long long>(log.iteration), log.lr,
                  log.loss.total, log.loss.batch_or_l1, log.loss.grad, log.loss.ssim, log.loss.aux);
    return buf;
}

void init_head_biases(MSFNet& net, const std::vector<data::Sample>& samples) {
    double sum = 0.0;
    int64_t n = 0;
    for (const auto& s : samples) {
        sum += s.target().masked_select(s.mask).sum().item<double>();
        n += s.valid_pixels();
    }
    if (n == 0) return;
    torch::NoGradGuard no_grad;
    for (auto* head : {&net->head, &net->attention_head, &net->fusion_head}) {
        if (*head) (*head)->bias.fill_(sum / static_cast<double>(n));
    }
}

NetworkOutput forward_cropped(MSFNet& net, const torch::Tensor& rgb, int64_t out_h, int64_t out_w,
                              bool training) {
    const auto h = rgb.size(2), w = rgb.size(3);
    const auto ph = (kEncoderStride - h % kEncoderStride) % kEncoderStride;
    const auto pw = (kEncoderStride - w % kEncoderStride) % kEncoderStride;
    if (out_h > (h + ph) / 2 || out_w > (w + pw) / 2) {
        throw InvalidShapeError("forward_cropped: requested output exceeds half the padded input");
    }
    auto input = rgb;
    if (ph > 0 || pw > 0) {
        input = F::pad(rgb, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
    }
    net->train(training);
    auto out = net->forward(input);
    if (out.y.size(2) == out_h && out.y.size(3) == out_w) {
        return out;
    }
    const auto crop = [&](const torch::Tensor& t) {
        return t.index({Slice(), Slice(), Slice(0, out_h), Slice(0, out_w)});
    };
    out.y = crop(out.y);
    out.y2 = crop(out.y2);
    out.y3 = crop(out.y3);
    return out;
}

std::vector<std::size_t> epoch_order(uint64_t seed, int64_t epoch, std::size_t count) {
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = data::derive_stream(seed ^ kShuffleStreamTag, 0, static_cast<uint64_t>(epoch));
    for (std::size_t i = count; i > 1; --i) {
        const auto j = static_cast<std::size_t>(data::uniform01(rng) * static_cast<double>(i));
        std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    return order;
}

TrainResult train(const TrainConfig& config, const NetworkVariant& variant,
                  const std::vector<data::Sample>& train_set, const std::vector<data::Sample>& validation_set) {
    config.validate();
    variant.validate();

    torch::manual_seed(config.seed);
    TrainResult result;
    result.net = MSFNet(config.network, variant);
    auto& net = result.net;

    if (config.init_head_bias && !train_set.empty()) {
        init_head_biases(net, train_set);
    }

    auto loss_cfg = config.loss;
    loss_cfg.use_batch_loss = variant.use_batch_loss;

    torch::optim::Adam optimizer(net->parameters(),
                                 torch::optim::AdamOptions(config.lr0)
                                     .betas({config.adam_beta1, config.adam_beta2})
                                     .weight_decay(config.weight_decay));

    std::ofstream iter_csv, val_csv;
    const bool to_disk = !config.out_dir.empty();
    if (to_disk) {
        fs::create_directories(config.out_dir);
        iter_csv.open(config.out_dir / "train_log.csv");
        val_csv.open(config.out_dir / "val_log.csv");
        if (!iter_csv || !val_csv) {
            throw IoError("cannot write logs under " + config.out_dir.string());
        }
        iter_csv << kIterationCsvHeader << '\n';
        val_csv << "epoch,lr," << metrics::kCsvHeader << '\n';
    }
    const auto checkpoint = [&](const fs::path& name, int64_t epoch, double lr) {
        if (!to_disk || !config.save_checkpoints) return fs::path{};
        const auto path = config.out_dir / name;
        save_checkpoint(path, net, CheckpointMeta{variant, config.network, epoch, lr, "msfnet train"}, &optimizer);
        return path;
    };

    if (config.epochs == 0) {
        result.last_checkpoint = checkpoint("checkpoint_last.pt", 0, config.lr0);
        return result;
    }
    if (train_set.empty()) {
        throw InvalidInputError("train: empty training set");
    }

    const auto batch = static_cast<std::size_t>(config.batch_size);
    const EvalOptions eval_options{config.augmentation, config.depth_range, false};
    double best_rel = std::numeric_limits<double>::infinity();
    int64_t iteration = 0;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = learning_rate(config, epoch);
        for (auto& group : optimizer.param_groups()) {
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
        }
        const auto order = epoch_order(config.seed, epoch, train_set.size());
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::vector<data::Sample> items;
            for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) {
                auto rng = data::derive_stream(config.seed ^ kAugmentStreamTag, order[k],
                                               static_cast<uint64_t>(epoch));
                items.push_back(data::augment(train_set[order[k]], config.augmentation, rng));
            }
            const auto b = data::collate(items);
            auto out = forward_cropped(net, b.rgb, b.target.size(2), b.target.size(3), /*training=*/true);
            auto loss = losses::total_loss(out, b.target, b.mask, loss_cfg);
            if (!finite(loss.breakdown)) {
                dump_batch(config.out_dir, b, out);
                throw NonFiniteLossError("non-finite loss at epoch " + std::to_string(epoch) +
                                         ", iteration " + std::to_string(iteration));
            }
            optimizer.zero_grad();
            loss.total.backward();
            optimizer.step();

            IterationLog log{epoch, iteration++, lr, loss.breakdown};
            if (to_disk) iter_csv << to_csv_row(log) << '\n';
            result.iterations.push_back(log);
        }

        EpochLog elog{epoch, lr, std::nullopt};
        if (!validation_set.empty()) {
            elog.validation = evaluate(net, validation_set, eval_options).report;
            if (to_disk) val_csv << epoch << ',' << lr << ',' << metrics::to_csv_row(*elog.validation) << '\n';
            if (elog.validation->rel < best_rel) {
                best_rel = elog.validation->rel;
                result.best_checkpoint = checkpoint("checkpoint_best.pt", epoch + 1, lr);
            }
        }
        result.epochs.push_back(elog);
        result.last_checkpoint = checkpoint("checkpoint_last.pt", epoch + 1, lr);
    }
    return result;
}

data::PostprocessResult predict_depth(MSFNet& net, const data::Sample& sample, const EvalOptions& options) {
    torch::NoGradGuard no_grad;
    auto rgb = data::normalize_rgb(sample.rgb, options.normalization).unsqueeze(0);
    const auto out_h = (rgb.size(2) + 1) / 2;
    const auto out_w = (rgb.size(3) + 1) / 2;
    auto out = forward_cropped(net, rgb, out_h, out_w, /*training=*/false);
    return data::postprocess_prediction(out.y[0], sample, options.depth_range);
}

EvaluationResult evaluate(MSFNet& net, const std::vector<data::Sample>& samples, const EvalOptions& options) {
    if (samples.empty()) {
        throw InvalidInputError("evaluate: no samples");
    }
    EvaluationResult result;
    for (const auto& s : samples) {
        if (options.oracle) {
            result.per_image.push_back(metrics::evaluate_image(s.depth, s.depth, s.mask));
            continue;
        }
        auto pred = predict_depth(net, s, options);
        result.clamped += pred.clamped;
        result.per_image.push_back(metrics::evaluate_image(pred.depth, s.depth, s.mask));
    }
    result.report = metrics::aggregate(result.per_image);
    return result;
}

EvaluationResult evaluate_checkpoint(const fs::path& checkpoint, const std::vector<data::Sample>& samples,
                                     const EvalOptions& options, const std::optional<NetworkVariant>& expected,
                                     const fs::path& csv_path) {
    auto loaded = load_checkpoint(checkpoint);
    if (expected && !(*expected == loaded.meta.variant)) {
        throw ConfigError("checkpoint " + checkpoint.string() + " holds variant " + loaded.meta.variant.name() +
                          " but " + expected->name() + " was requested");
    }
    auto result = evaluate(loaded.net, samples, options);
    if (!csv_path.empty()) {
        if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path.string());
        metrics::write_csv(out, result.report);
    }
    return result;
}

AblationResult ablate(const TrainConfig& config, const std::vector<data::Sample>& train_set,
                      const std::vector<data::Sample>& test_set, const std::vector<uint64_t>& seeds) {
    if (seeds.empty()) {
        throw ConfigError("ablate: at least one seed is required");
    }
    const auto ladder = NetworkVariant::ablation_ladder();
    const EvalOptions eval_options{config.augmentation, config.depth_range, false};
    AblationResult result;
    for (auto seed : seeds) {
        std::vector<AblationRow> rows;
        for (const auto& variant : ladder) {
            auto cfg = config;
            cfg.seed = seed;
            if (!config.out_dir.empty()) {
                cfg.out_dir = config.out_dir / ("seed_" + std::to_string(seed)) / variant.name();
            }
            auto trained = train(cfg, variant, train_set);
            rows.push_back({variant.name(), evaluate(trained.net, test_set, eval_options).report});
        }
        result.per_seed.push_back(std::move(rows));
    }
    for (std::size_t v = 0; v < ladder.size(); ++v) {
        const auto collect = [&](auto field) {
            std::vector<double> values;
            for (const auto& rows : result.per_seed) values.push_back(rows[v].report.*field);
            return median(values);
        };
        metrics::MetricReport r = result.per_seed.front()[v].report;
        r.rel = collect(&metrics::MetricReport::rel);
        r.rmse = collect(&metrics::MetricReport::rmse);
        r.log10 = collect(&metrics::MetricReport::log10);
        r.delta1 = collect(&metrics::MetricReport::delta1);
        r.delta2 = collect(&metrics::MetricReport::delta2);
        r.delta3 = collect(&metrics::MetricReport::delta3);
        result.rows.push_back({ladder[v].name(), r});
    }
    return result;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "| %-28s | %7s | %7s | %7s | %7s | %7s | %7s |\n", "method", "REL",
                  "RMSE", "log10", "d<1.25", "d<1.25^2", "d<1.25^3");
    out << line;
    out << "|" << std::string(30, '-') << "|" << std::string(9, '-') << "|" << std::string(9, '-') << "|"
        << std::string(9, '-') << "|" << std::string(9, '-') << "|" << std::string(10, '-') << "|"
        << std::string(10, '-') << "|\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        std::snprintf(line, sizeof(line), "| %-28s | %7.3f | %7.3f | %7.3f | %7.3f | %8.3f | %8.3f |\n",
                      row.variant.c_str(), r.rel, r.rmse, r.log10, r.delta1, r.delta2, r.delta3);
        out << line;
    }
    return out.str();
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
    out << "method," << metrics::kCsvHeader << '\n';
    for (const auto& row : rows) {
        out << row.variant << ',' << metrics::to_csv_row(row.report) << '\n';
    }
}

} // namespace msfnet::harness
