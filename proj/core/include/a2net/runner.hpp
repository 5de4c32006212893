#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "a2net/config.hpp"
#include "a2net/data.hpp"
#include "a2net/eval.hpp"
#include "a2net/inference.hpp"
#include "a2net/synthetic.hpp"

namespace a2net {

/// One detection on a video timeline in seconds; the JSONL row format.
struct VideoDetection {
    std::string video_id;
    double t_start_sec = 0.0;
    double t_end_sec = 0.0;
    long label = 0;
    double score = 0.0;
    Branch branch = Branch::af;
};

void write_detections(const std::filesystem::path& path,
                      const std::vector<VideoDetection>& dets);
std::vector<VideoDetection> read_detections(const std::filesystem::path& path);
std::map<std::string, std::vector<Detection>> detections_by_video(
    const std::vector<VideoDetection>& dets);

/// Checkpoint -> detections for the whole dataset: windows, forward,
/// decode, confidence merge (joint checkpoints only), per-window cap,
/// stitching with video-level suppression, conversion to seconds.
/// The checkpoint's stored model must match cfg.model field for field.
std::vector<VideoDetection> run_inference(const ExperimentConfig& cfg,
                                          const std::filesystem::path& checkpoint_path,
                                          const Dataset& data, std::ostream& info);

/// Two single-branch checkpoints run side by side; their raw detections
/// are pooled without reweighting, then suppressed together.
std::vector<VideoDetection> run_fusion(const ExperimentConfig& cfg,
                                       const std::filesystem::path& af_checkpoint,
                                       const std::filesystem::path& ab_checkpoint,
                                       const Dataset& data, std::ostream& info);

EvalReport run_evaluation(const std::vector<VideoDetection>& dets, const Dataset& data,
                          const std::vector<double>& thresholds, double bucket_threshold = 0.5,
                          bool eleven_point = false);

/// "thumos" (0.1:0.1:0.7), "activitynet" (0.5:0.05:0.95), or an explicit
/// comma-separated list.
std::vector<double> parse_thresholds(const std::string& text);

/// Generates a corpus and writes it as a loadable dataset directory.
SynthResult run_synth(const SynthSpec& spec, const std::filesystem::path& out_dir);

/// Extracts per-step loss series from a training log into CSV for
/// external plotting.
void write_loss_curves(const std::filesystem::path& train_log_jsonl,
                       const std::filesystem::path& out_csv);

/// SHA-256 of each input file, written as "<hex>  <path>" lines.
void write_input_hashes(const std::filesystem::path& out_file,
                        const std::vector<std::filesystem::path>& inputs);

}  // namespace a2net
