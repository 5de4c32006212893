#pragma once

#include <vector>

#include "a2net/losses.hpp"
#include "a2net/network.hpp"

namespace a2net {

enum class Branch { af, ab };

/// One localized action with its confidence and originating head.
struct Detection {
    double start = 0.0;  // same timeline as the producing stage
    double end = 0.0;
    long label = 0;  // 1..C
    double score = 0.0;
    Branch branch = Branch::af;

    double length() const { return end - start; }
};

struct InferenceConfig {
    double score_floor = 0.005;
    double lambda = 0.5;   // anchor-based share in the confidence merge
    double nms_iou = 0.5;
    long top_k = 200;      // per-window cap before stitching
};

/// Decodes one batch entry of a forward pass into raw detections. A
/// location fires only when its class argmax is non-background; anchor-free
/// confidence is that class probability, anchor-based confidence is the
/// probability multiplied by the predicted overlap. Detections below
/// `score_floor` or without positive length are dropped. Single-branch
/// modes decode only their own head.
std::vector<Detection> decode_window(const ModelOutputs& outputs, long batch_index,
                                     const PyramidSpec& spec, const RegressionCoeffs& coeffs,
                                     double score_floor, BranchMode mode);

/// Scales anchor-based confidences by lambda and anchor-free ones by
/// (1 - lambda), then concatenates.
std::vector<Detection> lambda_merge(const std::vector<Detection>& af_dets,
                                    const std::vector<Detection>& ab_dets, double lambda);

/// Keeps the k highest-confidence detections (ties: earlier start, then
/// earlier list position).
std::vector<Detection> top_k_by_score(std::vector<Detection> dets, long k);

/// Greedy class-wise suppression: repeatedly keep the best remaining
/// detection, discard same-class detections overlapping it above the
/// threshold. Output is sorted by descending confidence.
std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold);

struct WindowDetections {
    double offset = 0.0;  // window start on the video timeline
    std::vector<Detection> dets;
};

/// Shifts per-window detections onto the video timeline, concatenates, and
/// runs video-level suppression.
std::vector<Detection> stitch_windows(const std::vector<WindowDetections>& windows,
                                      double nms_iou);

}  // namespace a2net
