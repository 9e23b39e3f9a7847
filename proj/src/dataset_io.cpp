#include "msfnet/data.hpp"

#include "msfnet/errors.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace msfnet::data {

namespace fs = std::filesystem;

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    std::vector<ManifestEntry> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw IoError(path.string() + ":" + std::to_string(line_no) +
                          ": expected '<rgb path>\\t<depth path>'");
        }
        entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return entries;
}

double depth_png_scale(DatasetTag tag) {
    switch (tag) {
    case DatasetTag::nyu: return 1000.0; // millimeters
    case DatasetTag::kitti: return 256.0;
    case DatasetTag::synthetic: return 1000.0;
    }
    return 1000.0;
}

torch::Tensor load_rgb(const fs::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) {
        throw IoError("cannot read image " + path.string());
    }
    auto hwc = torch::from_blob(bgr.data, {bgr.rows, bgr.cols, 3}, torch::kUInt8).clone();
    return hwc.permute({2, 0, 1}).flip({0}).to(torch::kFloat32).div(255.0).contiguous();
}

torch::Tensor load_depth(const fs::path& path, double scale, int64_t height, int64_t width) {
    const auto ext = path.extension().string();
    if (ext == ".f32" || ext == ".bin") {
        if (height < 1 || width < 1) {
            throw IoError("raw depth file " + path.string() + " needs explicit dimensions");
        }
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open depth file " + path.string());
        auto out = torch::empty({1, height, width}, torch::kFloat32);
        const auto bytes = static_cast<std::streamsize>(out.numel() * sizeof(float));
        in.read(reinterpret_cast<char*>(out.data_ptr<float>()), bytes);
        if (in.gcount() != bytes) {
            throw IoError("depth file " + path.string() + " is shorter than " +
                          std::to_string(height) + "x" + std::to_string(width) + " floats");
        }
        return out;
    }
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (raw.empty()) {
        throw IoError("cannot read depth image " + path.string());
    }
    if (raw.channels() != 1) {
        throw IoError("depth image " + path.string() + " must be single-channel");
    }
    cv::Mat as_float;
    raw.convertTo(as_float, CV_32F, 1.0 / scale);
    return torch::from_blob(as_float.data, {1, as_float.rows, as_float.cols}, torch::kFloat32).clone();
}

namespace {

std::vector<std::pair<fs::path, fs::path>> kitti_layout_pairs(const fs::path& root) {
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (!fs::is_directory(root)) return pairs;
    std::vector<fs::path> drives;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) drives.push_back(entry.path());
    }
    std::sort(drives.begin(), drives.end());
    for (const auto& drive : drives) {
        const auto depth_dir = drive / "proj_depth" / "groundtruth" / "image_02";
        const auto rgb_dir = drive / "image_02" / "data";
        if (!fs::is_directory(depth_dir) || !fs::is_directory(rgb_dir)) continue;
        std::vector<fs::path> frames;
        for (const auto& f : fs::directory_iterator(depth_dir)) {
            if (f.path().extension() == ".png") frames.push_back(f.path());
        }
        std::sort(frames.begin(), frames.end());
        for (const auto& depth : frames) {
            const auto rgb = rgb_dir / depth.filename();
            if (fs::exists(rgb)) pairs.emplace_back(rgb, depth);
        }
    }
    return pairs;
}

} // namespace

std::vector<Sample> load_dataset(DatasetTag tag, const fs::path& root, Split split, uint64_t seed) {
    if (tag == DatasetTag::synthetic) {
        throw ConfigError("synthetic samples are generated, not loaded from disk");
    }
    const auto manifest = root / (split == Split::train ? "train.tsv" : "test.tsv");
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (fs::exists(manifest)) {
        for (const auto& e : read_manifest(manifest)) {
            pairs.emplace_back(root / e.rgb, root / e.depth);
        }
    } else if (tag == DatasetTag::kitti) {
        pairs = kitti_layout_pairs(root / (split == Split::train ? "train" : "val"));
    } else {
        throw IoError("missing manifest " + manifest.string());
    }
    if (pairs.empty()) {
        throw IoError("no samples found under " + root.string());
    }

    std::vector<Sample> samples;
    samples.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto rgb = load_rgb(pairs[i].first);
        auto depth = load_depth(pairs[i].second, depth_png_scale(tag), rgb.size(1), rgb.size(2));
        if (tag == DatasetTag::nyu) {
            samples.push_back(nyu_preprocess(rgb, depth, split));
        } else {
            auto rng = derive_stream(seed, i);
            samples.push_back(kitti_preprocess(rgb, depth, split, rng));
        }
    }
    return samples;
}

} // namespace msfnet::data
