#include "msfnet/config.hpp"

#include "msfnet/errors.hpp"

#include <fstream>

namespace msfnet::config {

namespace {

template <typename T, std::size_t N>
std::array<T, N> array_from_json(const json& j, const char* key, std::array<T, N> fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != N) {
        throw ConfigError(std::string("config: '") + key + "' must be an array of " + std::to_string(N));
    }
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = v[i].get<T>();
    return out;
}

} // namespace

json to_json(const NetworkOptions& o) {
    return json{
        {"encoder",
         {{"kind", o.encoder.kind == EncoderKind::toy ? "toy" : "senet154-hook"},
          {"stage_channels", o.encoder.stage_channels},
          {"stem", o.encoder.stem}}},
        {"up_channels", o.up_channels},
        {"fused_channels", o.fused_channels},
        {"decoder_channels", o.decoder_channels},
    };
}

NetworkOptions network_options_from_json(const json& j) {
    NetworkOptions o;
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        const auto kind = e.value("kind", std::string("toy"));
        if (kind == "toy") o.encoder.kind = EncoderKind::toy;
        else if (kind == "senet154-hook") o.encoder.kind = EncoderKind::senet154_hook;
        else throw ConfigError("unknown encoder kind: " + kind);
        o.encoder.stage_channels = array_from_json(e, "stage_channels", o.encoder.stage_channels);
        o.encoder.stem = e.value("stem", o.encoder.stem);
    }
    o.up_channels = j.value("up_channels", o.up_channels);
    o.fused_channels = j.value("fused_channels", o.fused_channels);
    o.decoder_channels = array_from_json(j, "decoder_channels", o.decoder_channels);
    o.validate();
    return o;
}

json to_json(const losses::LossConfig& c) {
    return json{
        {"lambda", c.lambda},
        {"mu", c.mu},
        {"batch_loss_scope", std::string(losses::to_string(c.batch_loss_scope))},
        {"ssim_window", c.ssim_window},
        {"ssim_sigma", c.ssim_sigma},
        {"ssim_c1", c.ssim_c1},
        {"ssim_c2", c.ssim_c2},
    };
}

losses::LossConfig loss_config_from_json(const json& j, losses::LossConfig c) {
    c.lambda = j.value("lambda", c.lambda);
    c.mu = j.value("mu", c.mu);
    if (j.contains("batch_loss_scope")) {
        c.batch_loss_scope = losses::batch_loss_scope_from_string(j.at("batch_loss_scope").get<std::string>());
    }
    c.ssim_window = j.value("ssim_window", c.ssim_window);
    c.ssim_sigma = j.value("ssim_sigma", c.ssim_sigma);
    c.ssim_c1 = j.value("ssim_c1", c.ssim_c1);
    c.ssim_c2 = j.value("ssim_c2", c.ssim_c2);
    c.validate();
    return c;
}

json to_json(const data::AugmentationPolicy& p) {
    return json{
        {"p_hflip", p.p_hflip},
        {"p_channel_permute", p.p_channel_permute},
        {"normalize_mean", p.normalize_mean},
        {"normalize_std", p.normalize_std},
    };
}

data::AugmentationPolicy augmentation_from_json(const json& j, data::AugmentationPolicy p) {
    p.p_hflip = j.value("p_hflip", p.p_hflip);
    p.p_channel_permute = j.value("p_channel_permute", p.p_channel_permute);
    p.normalize_mean = array_from_json(j, "normalize_mean", p.normalize_mean);
    p.normalize_std = array_from_json(j, "normalize_std", p.normalize_std);
    p.validate();
    return p;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    if (!j.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    cfg.dataset = data::dataset_tag_from_string(j.value("dataset", std::string("synthetic")));
    cfg.data_root = j.value("data_root", std::string());
    if (j.contains("variant")) {
        cfg.variant = NetworkVariant::from_name(j.at("variant").get<std::string>());
    }

    auto& t = cfg.train;
    t = harness::TrainConfig::defaults_for(cfg.dataset);
    if (j.contains("train")) {
        const auto& jt = j.at("train");
        t.lr0 = jt.value("lr0", t.lr0);
        t.lr_decay.factor = jt.value("lr_decay_factor", t.lr_decay.factor);
        t.lr_decay.every_epochs = jt.value("lr_decay_every", t.lr_decay.every_epochs);
        t.weight_decay = jt.value("weight_decay", t.weight_decay);
        t.init_head_bias = jt.value("init_head_bias", t.init_head_bias);
        t.adam_beta1 = jt.value("adam_beta1", t.adam_beta1);
        t.adam_beta2 = jt.value("adam_beta2", t.adam_beta2);
        t.batch_size = jt.value("batch_size", t.batch_size);
        t.epochs = jt.value("epochs", t.epochs);
        t.seed = jt.value("seed", t.seed);
    }
    if (j.contains("loss")) t.loss = loss_config_from_json(j.at("loss"), t.loss);
    if (j.contains("augmentation")) t.augmentation = augmentation_from_json(j.at("augmentation"), t.augmentation);
    if (j.contains("network")) t.network = network_options_from_json(j.at("network"));
    if (j.contains("depth_range")) {
        t.depth_range.min_depth = j.at("depth_range").value("min", t.depth_range.min_depth);
        t.depth_range.max_depth = j.at("depth_range").value("max", t.depth_range.max_depth);
    }
    if (j.contains("synthetic")) {
        const auto& js = j.at("synthetic");
        auto& s = cfg.synthetic;
        s.train_count = js.value("train_count", s.train_count);
        s.test_count = js.value("test_count", s.test_count);
        s.size = js.value("size", s.size);
        s.seed = js.value("seed", s.seed);
        s.options.min_depth = js.value("min_depth", s.options.min_depth);
        s.options.max_depth = js.value("max_depth", s.options.max_depth);
        if (js.contains("target_space")) {
            const auto space = js.at("target_space").get<std::string>();
            if (space == "inverse_depth") s.options.target_space = data::TargetSpace::inverse_depth;
            else if (space == "metric_depth") s.options.target_space = data::TargetSpace::metric_depth;
            else throw ConfigError("unknown target space: " + space);
        }
    }
    t.validate();
    return cfg;
}

json to_json(const RunConfig& cfg) {
    const auto& t = cfg.train;
    return json{
        {"dataset", std::string(data::to_string(cfg.dataset))},
        {"data_root", cfg.data_root.string()},
        {"variant", cfg.variant.name()},
        {"train",
         {{"lr0", t.lr0},
          {"lr_decay_factor", t.lr_decay.factor},
          {"lr_decay_every", t.lr_decay.every_epochs},
          {"weight_decay", t.weight_decay},
          {"init_head_bias", t.init_head_bias},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"seed", t.seed}}},
        {"loss", to_json(t.loss)},
        {"augmentation", to_json(t.augmentation)},
        {"network", to_json(t.network)},
        {"depth_range", {{"min", t.depth_range.min_depth}, {"max", t.depth_range.max_depth}}},
        {"synthetic",
         {{"train_count", cfg.synthetic.train_count},
          {"test_count", cfg.synthetic.test_count},
          {"size", cfg.synthetic.size},
          {"seed", cfg.synthetic.seed},
          {"min_depth", cfg.synthetic.options.min_depth},
          {"max_depth", cfg.synthetic.options.max_depth},
          {"target_space", std::string(data::to_string(cfg.synthetic.options.target_space))}}},
    };
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path.string());
    }
    try {
        return run_config_from_json(json::parse(in, nullptr, true, /*ignore_comments=*/true));
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
}

} // namespace msfnet::config
