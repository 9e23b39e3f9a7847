#include "msfnet/checkpoint.hpp"

#include "msfnet/config.hpp"
#include "msfnet/errors.hpp"

namespace msfnet {

namespace {

using config::json;

std::string meta_to_string(const CheckpointMeta& meta) {
    return json{
        {"variant", meta.variant.name()},
        {"network", config::to_json(meta.network)},
        {"epoch", meta.epoch},
        {"learning_rate", meta.learning_rate},
        {"note", meta.note},
    }
        .dump();
}

CheckpointMeta meta_from_string(const std::string& text) {
    const auto j = json::parse(text);
    CheckpointMeta meta;
    meta.variant = NetworkVariant::from_name(j.at("variant").get<std::string>());
    meta.network = config::network_options_from_json(j.at("network"));
    meta.epoch = j.value("epoch", int64_t{0});
    meta.learning_rate = j.value("learning_rate", 0.0);
    meta.note = j.value("note", std::string());
    return meta;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, MSFNet& net, const CheckpointMeta& meta,
                     torch::optim::Optimizer* optimizer) {
    torch::serialize::OutputArchive archive;
    archive.write("format", c10::IValue(std::string(kCheckpointFormat)));
    archive.write("version", c10::IValue(kCheckpointVersion));
    archive.write("meta", c10::IValue(meta_to_string(meta)));
    for (const auto& item : net->named_parameters()) {
        archive.write("param/" + item.key(), item.value());
    }
    for (const auto& item : net->named_buffers()) {
        archive.write("buffer/" + item.key(), item.value(), /*is_buffer=*/true);
    }
    if (optimizer != nullptr) {
        torch::serialize::OutputArchive opt_archive;
        optimizer->save(opt_archive);
        archive.write("optimizer", opt_archive);
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    try {
        archive.save_to(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw IoError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    c10::IValue format, version, meta;
    if (!archive.try_read("format", format) || !format.isString() ||
        format.toStringRef() != kCheckpointFormat) {
        throw IoError(path.string() + " is not an msfnet checkpoint");
    }
    if (!archive.try_read("version", version) || version.toInt() != kCheckpointVersion) {
        throw IoError(path.string() + ": unsupported checkpoint version");
    }
    archive.read("meta", meta);

    LoadedCheckpoint out;
    out.meta = meta_from_string(meta.toStringRef());
    out.net = MSFNet(out.meta.network, out.meta.variant);

    torch::NoGradGuard no_grad;
    for (auto& item : out.net->named_parameters()) {
        torch::Tensor value;
        if (!archive.try_read("param/" + item.key(), value)) {
            throw IoError(path.string() + ": missing parameter " + item.key());
        }
        if (value.sizes() != item.value().sizes()) {
            throw IoError(path.string() + ": shape mismatch for " + item.key());
        }
        item.value().copy_(value);
    }
    for (auto& item : out.net->named_buffers()) {
        torch::Tensor value;
        if (!archive.try_read("buffer/" + item.key(), value, /*is_buffer=*/true)) {
            throw IoError(path.string() + ": missing buffer " + item.key());
        }
        item.value().copy_(value);
    }
    torch::serialize::InputArchive opt_archive;
    out.has_optimizer_state = archive.try_read("optimizer", opt_archive);
    return out;
}

void load_optimizer_state(const std::filesystem::path& path, torch::optim::Optimizer& optimizer) {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    torch::serialize::InputArchive opt_archive;
    if (!archive.try_read("optimizer", opt_archive)) {
        throw IoError(path.string() + ": checkpoint holds no optimizer state");
    }
    optimizer.load(opt_archive);
}

} // namespace msfnet
