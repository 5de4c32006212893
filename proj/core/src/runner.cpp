#include "a2net/runner.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "a2net/errors.hpp"
#include "a2net/sha256.hpp"
#include "a2net/trainer.hpp"

namespace a2net {
namespace {

using nlohmann::json;

const char* branch_name(Branch b) { return b == Branch::af ? "af" : "ab"; }

Branch branch_from_name(const std::string& name, const std::string& where) {
    if (name == "af") return Branch::af;
    if (name == "ab") return Branch::ab;
    throw DataError(where + ": unknown branch \"" + name + "\" (expected af or ab)");
}

void require_model_match(const ModelConfig& stored, const ModelConfig& cfg,
                         const std::filesystem::path& ckpt_path) {
    auto fail = [&](const std::string& field) {
        throw DataError("checkpoint " + ckpt_path.string() +
                        " disagrees with the configured model on " + field);
    };
    if (stored.input_dim != cfg.input_dim) fail("model.input_dim");
    if (stored.window_steps != cfg.window_steps) fail("model.window_steps");
    if (stored.num_levels != cfg.num_levels) fail("model.levels");
    if (stored.num_classes != cfg.num_classes) fail("model.classes");
    if (stored.base_channels != cfg.base_channels) fail("model.base_channels");
    if (stored.head_channels != cfg.head_channels) fail("model.head_channels");
    if (stored.anchor_scale != cfg.anchor_scale) fail("model.anchor_scale");
    if (stored.coeffs.alpha != cfg.coeffs.alpha) fail("model.alpha");
    if (stored.coeffs.beta != cfg.coeffs.beta) fail("model.beta");
}

struct LoadedModel {
    Network net;
    CheckpointInfo info;
};

LoadedModel load_model(const ExperimentConfig& cfg, const std::filesystem::path& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    CheckpointInfo info = parse_checkpoint_meta(ckpt.meta_json);
    require_model_match(info.model, cfg.model, ckpt_path);
    LoadedModel loaded{Network(cfg.model, 0), info};
    load_network(loaded.net, ckpt);
    return loaded;
}

Tensor as_batch(const Tensor& features) {
    return Tensor({1, features.dim(0), features.dim(1)}, features.values());
}

/// Window-step detections scaled back onto the video timeline (still in
/// steps); resized windows stretch by `scale`, sliding windows pass
/// through and stitch_windows adds the offset.
std::vector<Detection> rescale_window(std::vector<Detection> dets, double scale) {
    if (scale != 1.0) {
        for (Detection& d : dets) {
            d.start *= scale;
            d.end *= scale;
        }
    }
    return dets;
}

void append_video(std::vector<VideoDetection>& out, const VideoRecord& video,
                  const std::vector<Detection>& stitched) {
    for (const Detection& d : stitched) {
        out.push_back(VideoDetection{video.video_id, video.steps_to_sec(d.start),
                                     video.steps_to_sec(d.end), d.label, d.score, d.branch});
    }
}

}  // namespace

void write_detections(const std::filesystem::path& path,
                      const std::vector<VideoDetection>& dets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.precision(17);
    for (const VideoDetection& d : dets) {
        json row;
        row["video_id"] = d.video_id;
        row["t_start_sec"] = d.t_start_sec;
        row["t_end_sec"] = d.t_end_sec;
        row["label"] = d.label;
        row["score"] = d.score;
        row["branch"] = branch_name(d.branch);
        out << row.dump() << "\n";
    }
    if (!out) throw DataError("failed writing detections to " + path.string());
}

std::vector<VideoDetection> read_detections(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open detections file " + path.string());
    std::vector<VideoDetection> dets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        VideoDetection d;
        try {
            d.video_id = row.at("video_id").get<std::string>();
            d.t_start_sec = row.at("t_start_sec").get<double>();
            d.t_end_sec = row.at("t_end_sec").get<double>();
            d.label = row.at("label").get<long>();
            d.score = row.at("score").get<double>();
            d.branch = branch_from_name(row.at("branch").get<std::string>(), where);
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        if (d.label < 1) throw DataError(where + ": label must be a positive class id");
        if (!(d.t_end_sec > d.t_start_sec))
            throw DataError(where + ": t_end_sec must exceed t_start_sec");
        if (!std::isfinite(d.score)) throw DataError(where + ": score is not finite");
        dets.push_back(std::move(d));
    }
    return dets;
}

std::map<std::string, std::vector<Detection>> detections_by_video(
    const std::vector<VideoDetection>& dets) {
    std::map<std::string, std::vector<Detection>> by_video;
    for (const VideoDetection& d : dets) {
        by_video[d.video_id].push_back(
            Detection{d.t_start_sec, d.t_end_sec, d.label, d.score, d.branch});
    }
    return by_video;
}

std::vector<VideoDetection> run_inference(const ExperimentConfig& cfg,
                                          const std::filesystem::path& checkpoint_path,
                                          const Dataset& data, std::ostream& info) {
    LoadedModel loaded = load_model(cfg, checkpoint_path);
    const BranchMode mode = parse_branch_mode(loaded.info.branch_mode);
    if (cfg.branch_mode != loaded.info.branch_mode) {
        throw DataError("checkpoint " + checkpoint_path.string() + " was trained as " +
                        loaded.info.branch_mode + " but the config asks for " + cfg.branch_mode);
    }
    const PyramidSpec& spec = loaded.net.pyramid();

    std::vector<VideoDetection> all;
    for (const VideoRecord& video : data.videos) {
        std::vector<WindowDetections> windows;
        for (const WindowSample& w : windows_for_inference(cfg, video)) {
            ModelOutputs outputs = loaded.net.forward(as_batch(w.features));
            std::vector<Detection> dets = decode_window(outputs, 0, spec, cfg.model.coeffs,
                                                        cfg.inference.score_floor, mode);
            if (mode == BranchMode::joint) {
                std::vector<Detection> af_dets;
                std::vector<Detection> ab_dets;
                for (const Detection& d : dets) {
                    (d.branch == Branch::af ? af_dets : ab_dets).push_back(d);
                }
                dets = lambda_merge(af_dets, ab_dets, cfg.inference.lambda);
            }
            dets = top_k_by_score(std::move(dets), cfg.inference.top_k);
            windows.push_back(
                WindowDetections{w.offset_steps, rescale_window(std::move(dets), w.scale)});
        }
        std::vector<Detection> stitched = stitch_windows(windows, cfg.inference.nms_iou);
        info << video.video_id << ": " << windows.size() << " windows, " << stitched.size()
             << " detections\n";
        append_video(all, video, stitched);
    }
    return all;
}

std::vector<VideoDetection> run_fusion(const ExperimentConfig& cfg,
                                       const std::filesystem::path& af_checkpoint,
                                       const std::filesystem::path& ab_checkpoint,
                                       const Dataset& data, std::ostream& info) {
    LoadedModel af_model = load_model(cfg, af_checkpoint);
    LoadedModel ab_model = load_model(cfg, ab_checkpoint);
    if (af_model.info.branch_mode != branch_mode_name(BranchMode::af_only)) {
        throw DataError("fusion needs an af_only checkpoint first, got " +
                        af_model.info.branch_mode + " from " + af_checkpoint.string());
    }
    if (ab_model.info.branch_mode != branch_mode_name(BranchMode::ab_only)) {
        throw DataError("fusion needs an ab_only checkpoint second, got " +
                        ab_model.info.branch_mode + " from " + ab_checkpoint.string());
    }
    const PyramidSpec& spec = af_model.net.pyramid();

    std::vector<VideoDetection> all;
    for (const VideoRecord& video : data.videos) {
        std::vector<WindowDetections> windows;
        for (const WindowSample& w : windows_for_inference(cfg, video)) {
            const Tensor batch = as_batch(w.features);
            ModelOutputs af_out = af_model.net.forward(batch);
            ModelOutputs ab_out = ab_model.net.forward(batch);
            std::vector<Detection> dets =
                decode_window(af_out, 0, spec, cfg.model.coeffs, cfg.inference.score_floor,
                              BranchMode::af_only);
            std::vector<Detection> ab_dets =
                decode_window(ab_out, 0, spec, cfg.model.coeffs, cfg.inference.score_floor,
                              BranchMode::ab_only);
            dets.insert(dets.end(), ab_dets.begin(), ab_dets.end());
            dets = top_k_by_score(std::move(dets), cfg.inference.top_k);
            windows.push_back(
                WindowDetections{w.offset_steps, rescale_window(std::move(dets), w.scale)});
        }
        std::vector<Detection> stitched = stitch_windows(windows, cfg.inference.nms_iou);
        info << video.video_id << ": " << windows.size() << " windows, " << stitched.size()
             << " fused detections\n";
        append_video(all, video, stitched);
    }
    return all;
}

EvalReport run_evaluation(const std::vector<VideoDetection>& dets, const Dataset& data,
                          const std::vector<double>& thresholds, double bucket_threshold,
                          bool eleven_point) {
    std::map<std::string, std::vector<Segment>> gts;
    for (const VideoRecord& video : data.videos) gts[video.video_id] = video.annotations;
    return evaluate(detections_by_video(dets), gts, thresholds, bucket_threshold, {},
                    eleven_point);
}

std::vector<double> parse_thresholds(const std::string& text) {
    std::vector<double> out;
    if (text == "thumos") {
        for (int i = 1; i <= 7; ++i) out.push_back(i / 10.0);
        return out;
    }
    if (text == "activitynet") {
        for (int i = 10; i <= 19; ++i) out.push_back(i / 20.0);
        return out;
    }
    std::stringstream ss(text);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        const char* begin = piece.data();
        const char* end = begin + piece.size();
        while (begin < end && *begin == ' ') ++begin;
        while (end > begin && *(end - 1) == ' ') --end;
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc{} || ptr != end || !(value > 0.0) || value > 1.0) {
            throw UsageError("bad IoU threshold \"" + piece +
                             "\" (expected a preset name or values in (0, 1])");
        }
        out.push_back(value);
    }
    if (out.empty()) throw UsageError("empty threshold list");
    return out;
}

SynthResult run_synth(const SynthSpec& spec, const std::filesystem::path& out_dir) {
    SynthResult result = generate_synthetic(spec);
    save_dataset(out_dir, result.dataset);
    return result;
}

void write_loss_curves(const std::filesystem::path& train_log_jsonl,
                       const std::filesystem::path& out_csv) {
    std::ifstream in(train_log_jsonl, std::ios::binary);
    if (!in) throw DataError("cannot open training log " + train_log_jsonl.string());
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw DataError("cannot open " + out_csv.string() + " for writing");
    out << "step,epoch,lr,total,af_cls,af_reg,ab_cls,ab_overlap,ab_reg\n";
    out.precision(17);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json row;
        try {
            row = json::parse(line);
            const json& loss = row.at("loss");
            out << row.at("step").get<long>() << "," << row.at("epoch").get<long>() << ","
                << row.at("lr").get<double>() << "," << loss.at("total").get<double>() << ","
                << loss.at("af_cls").get<double>() << "," << loss.at("af_reg").get<double>()
                << "," << loss.at("ab_cls").get<double>() << ","
                << loss.at("ab_overlap").get<double>() << "," << loss.at("ab_reg").get<double>()
                << "\n";
        } catch (const json::exception& e) {
            throw DataError(train_log_jsonl.string() + ":" + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    if (!out) throw DataError("failed writing " + out_csv.string());
}

void write_input_hashes(const std::filesystem::path& out_file,
                        const std::vector<std::filesystem::path>& inputs) {
    std::ofstream out(out_file, std::ios::binary);
    if (!out) throw DataError("cannot open " + out_file.string() + " for writing");
    for (const std::filesystem::path& p : inputs) {
        out << sha256_file_hex(p) << "  " << p.string() << "\n";
    }
    if (!out) throw DataError("failed writing " + out_file.string());
}

}  // namespace a2net
