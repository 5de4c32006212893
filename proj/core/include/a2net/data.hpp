#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "a2net/geometry.hpp"
#include "a2net/tensor.hpp"

namespace a2net {

/// One video: feature sequence on the model timeline plus annotations in
/// seconds. frames_per_feature converts between raw video frames and
/// feature steps.
struct VideoRecord {
    std::string video_id;
    Tensor features;  // [D, T_video]
    double fps = 30.0;
    double frames_per_feature = 4.0;
    std::vector<Segment> annotations;  // seconds, labels 1..C

    double feature_fps() const { return fps / frames_per_feature; }
    double duration_sec() const {
        return static_cast<double>(features.dim(1)) / feature_fps();
    }
    double sec_to_steps(double sec) const { return sec * feature_fps(); }
    double steps_to_sec(double steps) const { return steps / feature_fps(); }
};

struct Dataset {
    long num_classes = 0;
    std::vector<VideoRecord> videos;
};

/// Fixed-length slice of a video, with ground truth remapped to
/// window-local feature steps. `scale` is video steps per window step
/// (1 for sliding windows, T_video / T for a resized video).
struct WindowSample {
    std::string video_id;
    Tensor features;  // [D, window_steps]
    std::vector<Segment> gt;  // window-local steps
    double offset_steps = 0.0;
    double scale = 1.0;
};

Tensor load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const Tensor& features);

/// Reads a manifest (JSON) and the feature files it references, validating
/// every annotation; failures name the offending record.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes feature binaries plus a manifest into `dir`; the result loads
/// back identically.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

/// The manifest plus every feature file it references, for provenance
/// hashing. Does not load the features.
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& manifest_path);

/// Slides a fixed window over the video. Training mode keeps only windows
/// holding at least one ground-truth fragment that retains at least
/// `min_keep_fraction` of its original span (shorter fragments are dropped
/// from the targets as well); evaluation mode keeps every window and skips
/// the fragment filter. A video shorter than the window yields one
/// zero-padded window.
std::vector<WindowSample> make_windows(const VideoRecord& video, long window_steps,
                                       long stride_steps, bool training,
                                       double min_keep_fraction = 0.75);

/// Per-channel linear interpolation onto `target_steps` uniform samples,
/// endpoints preserved.
Tensor resize_sequence(const Tensor& features, long target_steps);

/// The whole video squeezed (or stretched) into one window of
/// `window_steps`, ground truth rescaled to match.
WindowSample make_resized_window(const VideoRecord& video, long window_steps);

}  // namespace a2net
