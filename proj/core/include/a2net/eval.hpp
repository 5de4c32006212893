#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "a2net/geometry.hpp"
#include "a2net/inference.hpp"

namespace a2net {

/// Duration buckets in seconds: ES (0,1.5), S [1.5,2.5), M [2.5,4.2),
/// L [4.2,6.9), EL [6.9, inf).
struct DurationBuckets {
    std::array<double, 4> edges{1.5, 2.5, 4.2, 6.9};

    static constexpr std::size_t count = 5;
    static const std::array<const char*, count>& names();
    std::size_t bucket_of(double duration_sec) const;
};

struct ClassAp {
    long label = 0;
    double ap = 0.0;
    long num_gt = 0;
};

struct EvalReport {
    std::vector<double> thresholds;
    std::vector<std::vector<ClassAp>> per_class;  // one list per threshold
    std::vector<double> map_per_threshold;
    double average_map = 0.0;  // mean of mAP across the threshold list

    double bucket_threshold = 0.5;
    std::array<double, DurationBuckets::count> bucket_map{};  // -1 marks an empty bucket
    std::array<long, DurationBuckets::count> bucket_gt{};

    std::vector<std::string> unknown_videos;  // detection ids with no ground truth entry

    std::string to_json() const;
    std::string to_table() const;
    std::string to_csv() const;
};

/// Single-class AP: detections are ranked by confidence, each greedily
/// claims the highest-IoU unmatched ground truth at or above the threshold,
/// and the TP/FP sequence is integrated under the interpolated
/// precision-recall curve (full envelope; `eleven_point` switches to the
/// 11-point average). No ground truth with detections present scores 0.
double average_precision(const std::vector<Detection>& dets, const std::vector<Segment>& gts,
                         double iou_threshold, bool eleven_point = false);

/// Full report over videos: per-class AP at every threshold, mAP, average
/// mAP, and duration-bucket mAP at `bucket_threshold`. Classes with no
/// ground truth anywhere are excluded from means. Detections and ground
/// truth are in seconds.
EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& dets_by_video,
                    const std::map<std::string, std::vector<Segment>>& gts_by_video,
                    const std::vector<double>& thresholds, double bucket_threshold = 0.5,
                    const DurationBuckets& buckets = {}, bool eleven_point = false);

}  // namespace a2net
