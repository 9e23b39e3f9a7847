// Command-line harness: train, eval, ablate, visualize.

#include "msfnet/config.hpp"
#include "msfnet/errors.hpp"
#include "msfnet/harness.hpp"
#include "msfnet/visualize.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace msfnet;

namespace {

// Test scenes never overlap the training scenes of the same config.
constexpr uint64_t kSyntheticTestSeedOffset = 0x7e57'0000ULL;

struct CommonFlags {
    std::string config_path;
    std::string data_root;
    std::string variant;
    int64_t seed = -1;
    std::string out_dir = "runs/latest";
};

void add_common(CLI::App* app, CommonFlags& flags) {
    app->add_option("-c,--config", flags.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app->add_option("--data-root", flags.data_root,
                    std::string("dataset root (default: $") + data::kDataRootEnv + ")");
    app->add_option("--variant", flags.variant, "e.g. baseline, baseline+USF+EDA+batch-loss, full");
    app->add_option("--seed", flags.seed, "random seed");
    app->add_option("-o,--out", flags.out_dir, "output directory");
}

config::RunConfig resolve(const CommonFlags& flags) {
    auto cfg = flags.config_path.empty() ? config::run_config_from_json(config::json::object())
                                         : config::load_run_config(flags.config_path);
    if (!flags.data_root.empty()) {
        cfg.data_root = flags.data_root;
    } else if (cfg.data_root.empty()) {
        if (const char* env = std::getenv(data::kDataRootEnv)) cfg.data_root = env;
    }
    if (!flags.variant.empty()) cfg.variant = NetworkVariant::from_name(flags.variant);
    if (flags.seed >= 0) cfg.train.seed = static_cast<uint64_t>(flags.seed);
    cfg.train.out_dir = flags.out_dir;
    return cfg;
}

std::vector<data::Sample> load_split(const config::RunConfig& cfg, data::Split split) {
    if (cfg.dataset == data::DatasetTag::synthetic) {
        const auto& s = cfg.synthetic;
        return split == data::Split::train
                   ? data::synth_generate(s.seed, s.train_count, s.size, s.options)
                   : data::synth_generate(s.seed + kSyntheticTestSeedOffset, s.test_count, s.size, s.options);
    }
    if (cfg.data_root.empty()) {
        throw ConfigError("a dataset root is required (--data-root or $" + std::string(data::kDataRootEnv) + ")");
    }
    return data::load_dataset(cfg.dataset, cfg.data_root, split, cfg.train.seed);
}

harness::EvalOptions eval_options(const config::RunConfig& cfg) {
    return {cfg.train.augmentation, cfg.train.depth_range, false};
}

void save_resolved_config(const config::RunConfig& cfg) {
    fs::create_directories(cfg.train.out_dir);
    std::ofstream(cfg.train.out_dir / "config.json") << config::to_json(cfg).dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    torch::set_num_threads(1);
    CLI::App app{"MSFNet monocular depth estimation harness"};
    app.require_subcommand(1);

    CommonFlags train_flags, eval_flags, ablate_flags, viz_flags;

    auto* train_cmd = app.add_subcommand("train", "train a network variant");
    add_common(train_cmd, train_flags);

    std::string eval_checkpoint, eval_split = "test", eval_csv;
    bool oracle = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd, eval_flags);
    eval_cmd->add_option("--checkpoint", eval_checkpoint)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test"}));
    eval_cmd->add_option("--csv", eval_csv, "metric CSV path (default: <out>/eval.csv)");
    eval_cmd->add_flag("--oracle", oracle, "score the ground truth against itself");

    int seeds = 3;
    auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate the five-variant ladder");
    add_common(ablate_cmd, ablate_flags);
    ablate_cmd->add_option("--seeds", seeds, "number of seeds (seed, seed+1, ...)")->check(CLI::PositiveNumber);

    std::string viz_checkpoint;
    int viz_count = 4;
    auto* viz_cmd = app.add_subcommand("visualize", "render rgb / truth / prediction / error panels");
    add_common(viz_cmd, viz_flags);
    viz_cmd->add_option("--checkpoint", viz_checkpoint)->required()->check(CLI::ExistingFile);
    viz_cmd->add_option("--count", viz_count, "number of test samples")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train_cmd) {
            auto cfg = resolve(train_flags);
            save_resolved_config(cfg);
            auto train_set = load_split(cfg, data::Split::train);
            auto test_set = load_split(cfg, data::Split::test);
            std::cout << "training " << cfg.variant.name() << " on " << train_set.size() << " samples for "
                      << cfg.train.epochs << " epochs\n";
            auto result = harness::train(cfg.train, cfg.variant, train_set, test_set);
            if (!result.epochs.empty() && result.epochs.back().validation) {
                std::cout << metrics::kCsvHeader << '\n'
                          << metrics::to_csv_row(*result.epochs.back().validation) << '\n';
            }
            std::cout << "checkpoint: " << result.last_checkpoint.string() << '\n';
        } else if (*eval_cmd) {
            auto cfg = resolve(eval_flags);
            auto samples = load_split(cfg, data::split_from_string(eval_split));
            auto options = eval_options(cfg);
            options.oracle = oracle;
            const fs::path csv = eval_csv.empty() ? cfg.train.out_dir / "eval.csv" : fs::path(eval_csv);
            const auto expected = eval_flags.variant.empty() ? std::nullopt : std::optional(cfg.variant);
            auto result = harness::evaluate_checkpoint(eval_checkpoint, samples, options, expected, csv);
            metrics::write_csv(std::cout, result.report);
            if (result.clamped > 0) {
                std::cerr << result.clamped << " nonpositive predictions were clamped\n";
            }
        } else if (*ablate_cmd) {
            auto cfg = resolve(ablate_flags);
            save_resolved_config(cfg);
            auto train_set = load_split(cfg, data::Split::train);
            auto test_set = load_split(cfg, data::Split::test);
            std::vector<uint64_t> seed_list;
            for (int k = 0; k < seeds; ++k) seed_list.push_back(cfg.train.seed + static_cast<uint64_t>(k));
            auto result = harness::ablate(cfg.train, train_set, test_set, seed_list);
            const auto table = harness::format_ablation_table(result.rows);
            std::cout << table;
            std::ofstream(cfg.train.out_dir / "ablation_table.md") << table;
            std::ofstream csv(cfg.train.out_dir / "ablation.csv");
            harness::write_ablation_csv(csv, result.rows);
        } else if (*viz_cmd) {
            auto cfg = resolve(viz_flags);
            auto samples = load_split(cfg, data::Split::test);
            if (samples.size() > static_cast<std::size_t>(viz_count)) samples.resize(viz_count);
            auto loaded = load_checkpoint(viz_checkpoint);
            auto files = viz::visualize(loaded.net, samples, cfg.train.out_dir, eval_options(cfg));
            std::cout << "wrote " << files.size() << " images to " << cfg.train.out_dir.string() << '\n';
        }
    } catch (const msfnet::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const c10::Error& e) {
        std::cerr << "torch error: " << e.what_without_backtrace() << '\n';
        return 1;
    }
    return 0;
}
