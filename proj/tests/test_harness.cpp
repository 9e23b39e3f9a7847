#include "msfnet/config.hpp"
#include "msfnet/errors.hpp"
#include "msfnet/harness.hpp"
#include "msfnet/visualize.hpp"

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace msfnet;
using namespace msfnet::harness;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("msfnet_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TrainConfig tiny_config() {
    auto c = TrainConfig::defaults_for(data::DatasetTag::synthetic);
    c.network.encoder.stage_channels = {4, 8, 8, 16, 16};
    c.network.up_channels = 4;
    c.network.fused_channels = 4;
    c.network.decoder_channels = {16, 8, 8, 4};
    c.batch_size = 2;
    c.epochs = 2;
    c.seed = 3;
    return c;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST(Schedule, StepDecay) {
    TrainConfig c;
    c.lr_decay = {0.5, 5};
    EXPECT_DOUBLE_EQ(learning_rate(c, 0), 1e-4);
    EXPECT_DOUBLE_EQ(learning_rate(c, 4), 1e-4);
    EXPECT_DOUBLE_EQ(learning_rate(c, 5), 0.5e-4);
    EXPECT_DOUBLE_EQ(learning_rate(c, 12), 0.25e-4);
    c.lr_decay = {0.95, 5};
    EXPECT_DOUBLE_EQ(learning_rate(c, 5), 1e-4 * 0.95);
}

TEST(Schedule, Defaults) {
    auto nyu = TrainConfig::defaults_for(data::DatasetTag::nyu);
    auto kitti = TrainConfig::defaults_for(data::DatasetTag::kitti);
    EXPECT_EQ(nyu.batch_size, 16);
    EXPECT_EQ(kitti.batch_size, 8);
    EXPECT_DOUBLE_EQ(nyu.loss.lambda, 0.1);
    EXPECT_DOUBLE_EQ(kitti.loss.mu, 1.0);
    EXPECT_DOUBLE_EQ(nyu.weight_decay, 1e-4);
    EXPECT_DOUBLE_EQ(nyu.adam_beta2, 0.999);
    TrainConfig bad;
    bad.batch_size = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(EpochOrder, PermutationDependingOnlyOnSeedAndEpoch) {
    auto a = epoch_order(1, 4, 10);
    EXPECT_EQ(a, epoch_order(1, 4, 10));
    EXPECT_NE(a, epoch_order(1, 5, 10));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
}

TEST(ForwardCropped, PadsAndCrops) {
    MSFNet net(tiny_config().network, NetworkVariant::full());
    auto out = forward_cropped(net, torch::randn({1, 3, 50, 70}), 25, 35, false);
    EXPECT_EQ(out.y.sizes(), (std::vector<int64_t>{1, 1, 25, 35}));
    EXPECT_EQ(out.y3.sizes(), out.y.sizes());
    EXPECT_THROW(forward_cropped(net, torch::randn({1, 3, 64, 64}), 40, 32, false), InvalidShapeError);
}

TEST(Train, ZeroEpochsWritesCheckpointAndEmptyLog) {
    auto c = tiny_config();
    c.epochs = 0;
    c.out_dir = temp_dir("zero");
    auto r = train(c, NetworkVariant::full(), {});
    EXPECT_TRUE(r.iterations.empty());
    EXPECT_TRUE(fs::exists(c.out_dir / "checkpoint_last.pt"));
    EXPECT_EQ(read_file(c.out_dir / "train_log.csv"), std::string(kIterationCsvHeader) + "\n");
    auto loaded = load_checkpoint(c.out_dir / "checkpoint_last.pt");
    EXPECT_EQ(loaded.meta.variant, NetworkVariant::full());
    EXPECT_TRUE(loaded.has_optimizer_state);
}

TEST(Train, DeterministicLogsAndCheckpoints) {
    auto samples = data::synth_generate(5, 4, 64);
    auto c = tiny_config();
    c.out_dir = temp_dir("det_a");
    auto a = train(c, NetworkVariant::full(), samples, samples);
    c.out_dir = temp_dir("det_b");
    auto b = train(c, NetworkVariant::full(), samples, samples);
    ASSERT_EQ(a.iterations.size(), 4u);
    EXPECT_EQ(read_file(fs::temp_directory_path() / "msfnet_test_det_a" / "train_log.csv"),
              read_file(c.out_dir / "train_log.csv"));
    for (std::size_t i = 0; i < a.iterations.size(); ++i) {
        EXPECT_EQ(a.iterations[i].loss.total, b.iterations[i].loss.total);
        EXPECT_TRUE(std::isfinite(a.iterations[i].loss.total));
    }
    EXPECT_TRUE(fs::exists(c.out_dir / "checkpoint_best.pt"));
    EXPECT_EQ(a.epochs.size(), 2u);
    ASSERT_TRUE(a.epochs.back().validation.has_value());

    c.seed = 4;
    c.out_dir.clear();
    auto other = train(c, NetworkVariant::full(), samples);
    EXPECT_NE(other.iterations.back().loss.total, a.iterations.back().loss.total);
}

TEST(Train, HeadBiasStartsAtMeanTarget) {
    auto samples = data::synth_generate(6, 2, 64);
    MSFNet net(tiny_config().network, NetworkVariant::full());
    init_head_biases(net, samples);
    double sum = 0.0;
    int64_t n = 0;
    for (const auto& s : samples) {
        sum += s.target().sum().item<double>();
        n += s.valid_pixels();
    }
    EXPECT_NEAR(net->head->bias.item<double>(), sum / static_cast<double>(n), 1e-6);
    EXPECT_NEAR(net->fusion_head->bias.item<double>(), sum / static_cast<double>(n), 1e-6);
}

TEST(Train, NonFiniteLossAbortsWithDump) {
    auto samples = data::synth_generate(7, 2, 64);
    samples[1].depth[0][3][3] = std::nanf("");
    auto c = tiny_config();
    c.init_head_bias = false;
    c.out_dir = temp_dir("nan");
    EXPECT_THROW(train(c, NetworkVariant::full(), samples), NonFiniteLossError);
    EXPECT_TRUE(fs::exists(c.out_dir / "nonfinite_batch.pt"));
}

TEST(Evaluate, OracleModeIsPerfect) {
    auto samples = data::synth_generate(8, 3, 64);
    MSFNet net(tiny_config().network, NetworkVariant::baseline());
    EvalOptions opts{data::AugmentationPolicy{}, data::default_depth_range(data::DatasetTag::synthetic), true};
    auto r = evaluate(net, samples, opts).report;
    EXPECT_EQ(r.rel, 0.0);
    EXPECT_EQ(r.rmse, 0.0);
    EXPECT_EQ(r.delta1, 1.0);
    EXPECT_EQ(r.n_images, 3);
}

TEST(Evaluate, CheckpointCsvDeterministicAndVariantChecked) {
    auto dir = temp_dir("eval");
    auto samples = data::synth_generate(9, 3, 64);
    auto c = tiny_config();
    MSFNet net(c.network, NetworkVariant::full());
    save_checkpoint(dir / "m.pt", net, CheckpointMeta{NetworkVariant::full(), c.network, 0, 1e-4, ""});
    EvalOptions opts{c.augmentation, c.depth_range, false};
    evaluate_checkpoint(dir / "m.pt", samples, opts, NetworkVariant::full(), dir / "a.csv");
    evaluate_checkpoint(dir / "m.pt", samples, opts, std::nullopt, dir / "b.csv");
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
    EXPECT_EQ(read_file(dir / "a.csv").substr(0, std::string(metrics::kCsvHeader).size()), metrics::kCsvHeader);
    EXPECT_THROW(evaluate_checkpoint(dir / "m.pt", samples, opts, NetworkVariant::baseline()), ConfigError);
}

TEST(Evaluate, DeltasMonotoneOnRandomCheckpoints) {
    auto samples = data::synth_generate(10, 2, 64);
    auto c = tiny_config();
    EvalOptions opts{c.augmentation, c.depth_range, false};
    for (int k = 0; k < 5; ++k) {
        torch::manual_seed(100 + k);
        MSFNet net(c.network, NetworkVariant::ablation_ladder()[static_cast<std::size_t>(k)]);
        {
            torch::NoGradGuard g;
            net->head->bias.fill_(0.1 + 0.2 * k);
        }
        auto r = evaluate(net, samples, opts).report;
        EXPECT_LE(r.delta1, r.delta2);
        EXPECT_LE(r.delta2, r.delta3);
        EXPECT_TRUE(std::isfinite(r.rel));
    }
}

TEST(Ablate, LadderOrderMedianAndTable) {
    auto train_set = data::synth_generate(11, 2, 64);
    auto test_set = data::synth_generate(12, 2, 64);
    auto c = tiny_config();
    c.epochs = 1;
    auto result = ablate(c, train_set, test_set, {1, 2, 3});
    ASSERT_EQ(result.rows.size(), 5u);
    ASSERT_EQ(result.per_seed.size(), 3u);
    const auto ladder = NetworkVariant::ablation_ladder();
    for (std::size_t v = 0; v < 5; ++v) {
        EXPECT_EQ(result.rows[v].variant, ladder[v].name());
        std::vector<double> rels;
        for (const auto& rows : result.per_seed) rels.push_back(rows[v].report.rel);
        std::sort(rels.begin(), rels.end());
        EXPECT_EQ(result.rows[v].report.rel, rels[1]);
    }
    // The baseline row of seed 1 equals an independent train + evaluate with that seed.
    auto cfg = c;
    cfg.seed = 1;
    auto trained = train(cfg, NetworkVariant::baseline(), train_set);
    auto direct = evaluate(trained.net, test_set, EvalOptions{c.augmentation, c.depth_range, false}).report;
    EXPECT_EQ(result.per_seed[0][0].report.rel, direct.rel);

    auto table = format_ablation_table(result.rows);
    for (const char* col : {"REL", "RMSE", "log10", "d<1.25", "d<1.25^2", "d<1.25^3"}) {
        EXPECT_NE(table.find(col), std::string::npos);
    }
    EXPECT_NE(table.find("baseline+USF+EDA+batch-loss"), std::string::npos);
    std::ostringstream csv;
    write_ablation_csv(csv, result.rows);
    const auto text = csv.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
    EXPECT_THROW(ablate(c, train_set, test_set, {}), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    auto cfg = config::run_config_from_json(config::json::parse(R"({
        "dataset": "kitti", "variant": "baseline+USF+CBAM-S",
        "train": {"epochs": 3, "batch_size": 2, "lr_decay_factor": 0.5, "seed": 9},
        "loss": {"lambda": 0.7, "batch_loss_scope": "per_image"},
        "synthetic": {"size": 96}
    })"));
    EXPECT_EQ(cfg.dataset, data::DatasetTag::kitti);
    EXPECT_EQ(cfg.variant.name(), "baseline+USF+CBAM-S");
    EXPECT_EQ(cfg.train.epochs, 3);
    EXPECT_EQ(cfg.train.seed, 9u);
    EXPECT_DOUBLE_EQ(cfg.train.loss.lambda, 0.7);
    EXPECT_DOUBLE_EQ(cfg.train.loss.mu, 1.0); // KITTI default survives
    EXPECT_EQ(cfg.train.loss.batch_loss_scope, losses::BatchLossScope::per_image);
    EXPECT_EQ(cfg.synthetic.size, 96);
    auto again = config::run_config_from_json(config::to_json(cfg));
    EXPECT_EQ(config::to_json(again).dump(), config::to_json(cfg).dump());
    EXPECT_THROW(config::run_config_from_json(config::json::parse(R"({"dataset": "mnist"})")), ConfigError);
}

TEST(Visualize, SharedRangeSentinelAndPerfectError) {
    auto s = data::synth_generate(13, 1, 64)[0];
    s.mask[0][0][0] = false;
    auto pred = s.depth.clone();
    auto panels = viz::render_panels(pred, s);
    EXPECT_DOUBLE_EQ(panels.vmin, s.depth.masked_select(s.mask).min().item<double>());
    EXPECT_DOUBLE_EQ(panels.vmax, s.depth.masked_select(s.mask).max().item<double>());
    // Identical values map to identical colors in both panels.
    for (int i = 0; i < 32; i += 5)
        for (int j = 1; j < 32; j += 7) EXPECT_EQ(panels.truth.at<cv::Vec3b>(i, j), panels.prediction.at<cv::Vec3b>(i, j));
    EXPECT_EQ(panels.truth.at<cv::Vec3b>(0, 0), viz::kSentinelBgr);
    const auto zero = viz::colormap(0.0);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            if (i == 0 && j == 0) continue;
            ASSERT_EQ(panels.error.at<cv::Vec3b>(i, j), zero);
        }
    EXPECT_EQ(panels.rgb.rows, 32);
}

TEST(Visualize, WritesPanelsAndRejectsUnwritableDir) {
    auto dir = temp_dir("viz");
    auto samples = data::synth_generate(14, 2, 64);
    MSFNet net(tiny_config().network, NetworkVariant::full());
    EvalOptions opts{data::AugmentationPolicy{}, data::default_depth_range(data::DatasetTag::synthetic), false};
    auto files = viz::visualize(net, samples, dir, opts);
    EXPECT_EQ(files.size(), 9u);
    EXPECT_FALSE(cv::imread((dir / "contact_sheet.png").string()).empty());
    std::ofstream(dir / "blocker") << "x";
    EXPECT_THROW(viz::visualize(net, samples, dir / "blocker" / "sub", opts), IoError);
}
