#include "a2net/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "a2net/errors.hpp"

namespace a2net {

namespace {

constexpr char kFeatureMagic[8] = {'A', '2', 'N', 'E', 'T', 'F', 'T', 'R'};
constexpr std::uint32_t kFeatureVersion = 1;

using nlohmann::json;

void validate_record(const VideoRecord& v, long num_classes) {
    if (v.video_id.empty()) {
        throw DataError("record with empty video_id");
    }
    if (v.features.rank() != 2) {
        throw DataError("video '" + v.video_id + "': features must be [D, T], got " +
                        v.features.shape_str());
    }
    if (v.fps <= 0.0 || v.frames_per_feature <= 0.0) {
        throw DataError("video '" + v.video_id + "': fps and frames_per_feature must be positive");
    }
    const double duration = v.duration_sec();
    for (const Segment& g : v.annotations) {
        if (!(g.end > g.start)) {
            throw DataError("video '" + v.video_id + "': annotation with end <= start");
        }
        if (g.start < 0.0 || g.end > duration + 1e-9) {
            throw DataError("video '" + v.video_id + "': annotation [" +
                            std::to_string(g.start) + ", " + std::to_string(g.end) +
                            ") outside video of " + std::to_string(duration) + " s");
        }
        if (g.label < 1 || (num_classes > 0 && g.label > num_classes)) {
            throw DataError("video '" + v.video_id + "': annotation label " +
                            std::to_string(g.label) + " outside [1, " +
                            std::to_string(num_classes) + "]");
        }
    }
}

}  // namespace

Tensor load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open feature file: " + path.string());
    }
    char magic[sizeof(kFeatureMagic)];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0) {
        throw DataError("not a feature file: " + path.string());
    }
    auto read_u32 = [&] {
        std::uint8_t b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) {
            throw DataError("truncated feature file: " + path.string());
        }
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    };
    auto read_u64 = [&] {
        std::uint8_t b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) {
            throw DataError("truncated feature file: " + path.string());
        }
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    };
    const std::uint32_t version = read_u32();
    if (version != kFeatureVersion) {
        throw DataError("feature file version " + std::to_string(version) + " unsupported: " +
                        path.string());
    }
    const auto d = static_cast<long>(read_u64());
    const auto t = static_cast<long>(read_u64());
    if (d < 1 || t < 1 || d > (1L << 20) || t > (1L << 28)) {
        throw DataError("feature file reports implausible shape: " + path.string());
    }
    Tensor out({d, t});
    for (double& v : out.values()) {
        v = std::bit_cast<double>(read_u64());
    }
    return out;
}

void save_features(const std::filesystem::path& path, const Tensor& features) {
    if (features.rank() != 2) {
        throw std::invalid_argument("features must be [D, T], got " + features.shape_str());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot open feature file for writing: " + path.string());
    }
    out.write(kFeatureMagic, sizeof(kFeatureMagic));
    auto write_u32 = [&](std::uint32_t v) {
        std::uint8_t b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    auto write_u64 = [&](std::uint64_t v) {
        std::uint8_t b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    };
    write_u32(kFeatureVersion);
    write_u64(static_cast<std::uint64_t>(features.dim(0)));
    write_u64(static_cast<std::uint64_t>(features.dim(1)));
    for (double v : features.values()) {
        write_u64(std::bit_cast<std::uint64_t>(v));
    }
    out.flush();
    if (!out) {
        throw DataError("write failure on feature file: " + path.string());
    }
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw DataError("cannot open manifest: " + manifest_path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset ds;
    try {
        ds.num_classes = doc.at("num_classes").get<long>();
        const auto base = manifest_path.parent_path();
        for (const auto& jv : doc.at("videos")) {
            VideoRecord v;
            v.video_id = jv.at("video_id").get<std::string>();
            v.fps = jv.at("fps").get<double>();
            v.frames_per_feature = jv.at("frames_per_feature").get<double>();
            const std::filesystem::path feat = jv.at("features").get<std::string>();
            v.features = load_features(feat.is_absolute() ? feat : base / feat);
            for (const auto& ja : jv.at("annotations")) {
                Segment g;
                g.start = ja.at("start_sec").get<double>();
                g.end = ja.at("end_sec").get<double>();
                g.label = ja.at("label").get<long>();
                v.annotations.push_back(g);
            }
            validate_record(v, ds.num_classes);
            ds.videos.push_back(std::move(v));
        }
    } catch (const json::exception& e) {
        throw DataError("manifest " + manifest_path.string() +
                        " missing or mistyped field: " + e.what());
    }
    if (ds.num_classes < 1) {
        throw DataError("manifest " + manifest_path.string() + " declares no classes");
    }
    return ds;
}

std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw DataError("cannot open manifest: " + manifest_path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    std::vector<std::filesystem::path> files{manifest_path};
    try {
        const auto base = manifest_path.parent_path();
        for (const auto& jv : doc.at("videos")) {
            const std::filesystem::path feat = jv.at("features").get<std::string>();
            files.push_back(feat.is_absolute() ? feat : base / feat);
        }
    } catch (const json::exception& e) {
        throw DataError("manifest " + manifest_path.string() +
                        " missing or mistyped field: " + e.what());
    }
    return files;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
    std::filesystem::create_directories(dir);
    json doc;
    doc["num_classes"] = dataset.num_classes;
    doc["videos"] = json::array();
    for (const VideoRecord& v : dataset.videos) {
        validate_record(v, dataset.num_classes);
        const std::string feat_name = v.video_id + ".feat";
        save_features(dir / feat_name, v.features);
        json jv;
        jv["video_id"] = v.video_id;
        jv["features"] = feat_name;
        jv["fps"] = v.fps;
        jv["frames_per_feature"] = v.frames_per_feature;
        jv["annotations"] = json::array();
        for (const Segment& g : v.annotations) {
            jv["annotations"].push_back(
                {{"start_sec", g.start}, {"end_sec", g.end}, {"label", g.label}});
        }
        doc["videos"].push_back(std::move(jv));
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) {
        throw DataError("cannot write manifest in " + dir.string());
    }
    out << doc.dump(2) << "\n";
}

std::vector<WindowSample> make_windows(const VideoRecord& video, long window_steps,
                                       long stride_steps, bool training,
                                       double min_keep_fraction) {
    if (window_steps < 1 || stride_steps < 1) {
        throw std::invalid_argument("window and stride must be positive");
    }
    const long d = video.features.dim(0);
    const long t_video = video.features.dim(1);

    std::vector<long> offsets;
    if (t_video <= window_steps) {
        offsets.push_back(0);
    } else {
        for (long off = 0; off + window_steps <= t_video; off += stride_steps) {
            offsets.push_back(off);
        }
        if (offsets.back() + window_steps < t_video) {
            offsets.push_back(t_video - window_steps);  // align the tail
        }
    }

    std::vector<WindowSample> out;
    for (long off : offsets) {
        WindowSample w;
        w.video_id = video.video_id;
        w.offset_steps = static_cast<double>(off);
        w.features = Tensor({d, window_steps});
        const long copy = std::min(window_steps, t_video - off);
        for (long c = 0; c < d; ++c) {
            const double* src = video.features.data() + c * t_video + off;
            double* dst = w.features.data() + c * window_steps;
            std::copy(src, src + copy, dst);
        }

        for (const Segment& g : video.annotations) {
            const double gs = video.sec_to_steps(g.start);
            const double ge = video.sec_to_steps(g.end);
            const double lo = std::max(gs, static_cast<double>(off));
            const double hi = std::min(ge, static_cast<double>(off + window_steps));
            if (hi <= lo) continue;
            if (training && (hi - lo) / (ge - gs) < min_keep_fraction) continue;
            w.gt.push_back(Segment{lo - off, hi - off, g.label, 1.0});
        }
        if (training && w.gt.empty()) continue;
        out.push_back(std::move(w));
    }
    return out;
}

WindowSample make_resized_window(const VideoRecord& video, long window_steps) {
    WindowSample w;
    w.video_id = video.video_id;
    w.offset_steps = 0.0;
    const long t_video = video.features.dim(1);
    w.scale = static_cast<double>(t_video) / static_cast<double>(window_steps);
    w.features = resize_sequence(video.features, window_steps);
    for (const Segment& g : video.annotations) {
        w.gt.push_back(Segment{video.sec_to_steps(g.start) / w.scale,
                               video.sec_to_steps(g.end) / w.scale, g.label, 1.0});
    }
    return w;
}

Tensor resize_sequence(const Tensor& features, long target_steps) {
    if (features.rank() != 2) {
        throw std::invalid_argument("resize expects [D, T], got " + features.shape_str());
    }
    if (target_steps < 1) {
        throw std::invalid_argument("target length must be positive");
    }
    const long d = features.dim(0), t = features.dim(1);
    if (t == target_steps) return features;
    Tensor out({d, target_steps});
    for (long c = 0; c < d; ++c) {
        const double* src = features.data() + c * t;
        double* dst = out.data() + c * target_steps;
        for (long k = 0; k < target_steps; ++k) {
            if (t == 1 || target_steps == 1) {
                dst[k] = src[0];
                continue;
            }
            const double u = static_cast<double>(k) * static_cast<double>(t - 1) /
                             static_cast<double>(target_steps - 1);
            const long i0 = std::min(static_cast<long>(u), t - 2);
            const double frac = u - static_cast<double>(i0);
            dst[k] = src[i0] * (1.0 - frac) + src[i0 + 1] * frac;
        }
    }
    return out;
}

}  // namespace a2net
