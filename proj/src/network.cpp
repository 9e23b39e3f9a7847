#include "msfnet/network.hpp"

#include "msfnet/errors.hpp"

#include <mutex>

namespace msfnet {

namespace F = torch::nn::functional;
using attention::AttentionKind;

namespace {

EncoderFactory& encoder_hook() {
    static EncoderFactory hook;
    return hook;
}

std::mutex& encoder_hook_mutex() {
    static std::mutex m;
    return m;
}

torch::Tensor resize_bilinear(const torch::Tensor& x, int64_t h, int64_t w) {
    if (x.size(2) == h && x.size(3) == w) {
        return x;
    }
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{h, w})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

// 2x bilinear upsampling of the previous block, concat with the encoder skip, two conv3x3.
class UpStepImpl : public torch::nn::Module {
public:
    UpStepImpl(int64_t in_channels, int64_t skip_channels, int64_t out_channels) {
        conv_a = register_module("conv_a", make_conv(in_channels + skip_channels, out_channels, 3, 1, 1));
        conv_b = register_module("conv_b", make_conv(out_channels, out_channels, 3, 1, 1));
    }

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& skip) {
        auto up = resize_bilinear(x, skip.size(2), skip.size(3));
        auto h = msfnet::leaky_relu(conv_a(torch::cat({up, skip}, 1)));
        return msfnet::leaky_relu(conv_b(h));
    }

    torch::nn::Conv2d conv_a{nullptr};
    torch::nn::Conv2d conv_b{nullptr};
};

} // namespace

void EncoderSpec::validate() const {
    for (auto c : stage_channels) {
        if (c < 1) {
            throw ConfigError("encoder stage channels must be positive");
        }
    }
}

ToyEncoderImpl::ToyEncoderImpl(const EncoderSpec& spec) {
    spec.validate();
    int64_t in = 3;
    for (int s = 0; s < fusion::kStageCount; ++s) {
        blocks_.push_back(register_module("stage" + std::to_string(s),
                                          make_conv(in, spec.stage_channels[s], 3, 2, 1)));
        in = spec.stage_channels[s];
    }
}

torch::Tensor ToyEncoderImpl::stage(int index, const torch::Tensor& x) {
    return msfnet::leaky_relu(blocks_.at(index)(x));
}

void set_encoder_hook(EncoderFactory factory) {
    std::lock_guard lock(encoder_hook_mutex());
    encoder_hook() = std::move(factory);
}

std::shared_ptr<StagedEncoderImpl> make_encoder(const EncoderSpec& spec) {
    spec.validate();
    if (spec.kind == EncoderKind::toy) {
        return std::make_shared<ToyEncoderImpl>(spec);
    }
    std::lock_guard lock(encoder_hook_mutex());
    if (!encoder_hook()) {
        throw ConfigError("senet154-hook encoder requested but no encoder factory is installed");
    }
    return encoder_hook()(spec);
}

void check_input_size(const torch::Tensor& image) {
    if (!image.defined() || image.dim() != 4 || image.size(1) != 3) {
        throw InvalidShapeError("network input must be shaped [B,3,H,W]");
    }
    const auto h = image.size(2), w = image.size(3);
    if (h < kEncoderStride || w < kEncoderStride || h % kEncoderStride != 0 ||
        w % kEncoderStride != 0) {
        throw InvalidInputError("network input " + std::to_string(h) + "x" + std::to_string(w) +
                                " is not divisible by 32");
    }
}

std::vector<torch::Tensor> encoder_forward(const torch::Tensor& image, StagedEncoderImpl& encoder) {
    check_input_size(image);
    std::vector<torch::Tensor> stages;
    auto x = image;
    for (int s = 0; s < fusion::kStageCount; ++s) {
        x = encoder.stage(s, x);
        stages.push_back(x);
    }
    return stages;
}

void NetworkVariant::validate() const {
    if (attention != AttentionKind::none && !use_usf) {
        throw ConfigError("variant " + name() + ": attention requires the USF module");
    }
}

std::string NetworkVariant::name() const {
    std::string n = "baseline";
    if (use_usf) n += "+USF";
    if (attention == AttentionKind::cbam_s) n += "+CBAM-S";
    if (attention == AttentionKind::eda) n += "+EDA";
    if (use_batch_loss) n += "+batch-loss";
    return n;
}

NetworkVariant NetworkVariant::from_name(const std::string& name) {
    if (name == "full") {
        return full();
    }
    NetworkVariant v;
    std::size_t pos = 0;
    const auto next = [&]() {
        auto end = name.find('+', pos);
        auto token = name.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = end == std::string::npos ? name.size() : end + 1;
        return token;
    };
    if (next() != "baseline") {
        throw ConfigError("variant name must start with 'baseline': " + name);
    }
    while (pos < name.size()) {
        auto token = next();
        if (token == "USF") v.use_usf = true;
        else if (token == "CBAM-S") v.attention = AttentionKind::cbam_s;
        else if (token == "EDA") v.attention = AttentionKind::eda;
        else if (token == "batch-loss") v.use_batch_loss = true;
        else throw ConfigError("unknown variant component '" + token + "' in " + name);
    }
    v.validate();
    return v;
}

std::vector<NetworkVariant> NetworkVariant::ablation_ladder() {
    return {
        {false, AttentionKind::none, false},
        {true, AttentionKind::none, false},
        {true, AttentionKind::cbam_s, false},
        {true, AttentionKind::eda, false},
        {true, AttentionKind::eda, true},
    };
}

void NetworkOptions::validate() const {
    encoder.validate();
    if (up_channels < 1 || fused_channels < 1) {
        throw ConfigError("fusion channel counts must be positive");
    }
    for (auto c : decoder_channels) {
        if (c < 1) throw ConfigError("decoder channel counts must be positive");
    }
}

MSFNetImpl::MSFNetImpl(const NetworkOptions& options, const NetworkVariant& variant)
    : options_(options), variant_(variant) {
    options.validate();
    variant.validate();
    const auto& sc = options.encoder.stage_channels;

    encoder = register_module("encoder", make_encoder(options.encoder));
    if (variant.attention != AttentionKind::none) {
        attention = register_module("attention", attention::SpatialAttention(variant.attention));
        attention_head = register_module("attention_head", make_conv(sc[3], 1, 1));
    }
    if (variant.use_usf) {
        usf = register_module("usf", fusion::USF(fusion::USFOptions{
                                         sc, options.up_channels, options.fused_channels}));
        fusion_head = register_module("fusion_head", make_conv(options.fused_channels, 1, 1));
    }

    decoder = register_module("decoder", torch::nn::ModuleList());
    int64_t prev = sc[4];
    for (int k = 0; k < 4; ++k) {
        const auto out = options.decoder_channels[k];
        decoder->push_back(std::make_shared<UpStepImpl>(prev, sc[3 - k], out));
        prev = out;
    }
    const auto final_in = prev + (variant.use_usf ? options.fused_channels : 0);
    final_conv = register_module("final_conv", make_conv(final_in, prev, 3, 1, 1));
    head = register_module("head", make_conv(prev, 1, 1));

    xavier_init(*this);
}

NetworkOutput MSFNetImpl::forward(const torch::Tensor& image) {
    check_input_size(image);
    const auto out_h = image.size(2) / 2;
    const auto out_w = image.size(3) / 2;

    std::vector<torch::Tensor> stages;
    auto x = image;
    for (int s = 0; s < 4; ++s) {
        x = encoder->stage(s, x);
        stages.push_back(x);
    }
    if (attention) {
        stages[3] = attention(stages[3]);
    }
    stages.push_back(encoder->stage(4, stages[3]));

    torch::Tensor fused;
    if (usf) {
        fused = usf(stages);
    }

    auto d = stages[4];
    for (int k = 0; k < 4; ++k) {
        d = decoder->ptr<UpStepImpl>(k)->forward(d, stages[3 - k]);
    }
    if (fused.defined()) {
        d = torch::cat({d, fused}, 1);
    }
    d = msfnet::leaky_relu(final_conv(d));

    NetworkOutput out;
    out.y = head(d);
    if (attention) {
        out.y2 = resize_bilinear(attention_head(stages[3]), out_h, out_w);
        out.y2_live = true;
    } else {
        out.y2 = out.y.detach().clone();
    }
    if (usf) {
        out.y3 = resize_bilinear(fusion_head(fused), out_h, out_w);
        out.y3_live = true;
    } else {
        out.y3 = out.y.detach().clone();
    }
    return out;
}

NetworkOutput msfnet_forward(const torch::Tensor& image, const NetworkVariant& variant, MSFNet& net,
                             bool training) {
    variant.validate();
    if (!(variant == net->variant())) {
        throw ConfigError("requested variant " + variant.name() + " but network is " +
                          net->variant().name());
    }
    net->train(training);
    return net->forward(image);
}

} // namespace msfnet
