#include "a2net/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace a2net {

namespace {

struct RankedDet {
    double score = 0.0;
    double start = 0.0;
    double end = 0.0;
    std::size_t video = 0;  // index into the video order
    bool tp = false;
    std::size_t gt_index = 0;  // within (video, class), valid when tp
};

// Confidence-descending with deterministic tie-breaks.
void rank(std::vector<RankedDet>& dets) {
    std::stable_sort(dets.begin(), dets.end(), [](const RankedDet& a, const RankedDet& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.start < b.start;
    });
}

/// Greedy matching in rank order: each detection claims the unmatched
/// ground truth with the highest IoU at or above the threshold.
void match_greedy(std::vector<RankedDet>& dets,
                  const std::vector<std::vector<Segment>>& gts_per_video,
                  double iou_threshold) {
    std::vector<std::vector<bool>> taken(gts_per_video.size());
    for (std::size_t v = 0; v < gts_per_video.size(); ++v) {
        taken[v].assign(gts_per_video[v].size(), false);
    }
    for (RankedDet& d : dets) {
        const auto& gts = gts_per_video[d.video];
        double best = 0.0;
        std::size_t best_idx = gts.size();
        const Segment dseg{d.start, d.end, 1, d.score};
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[d.video][g]) continue;
            const double v = iou(dseg, gts[g]);
            if (v >= iou_threshold && v > best) {
                best = v;
                best_idx = g;
            }
        }
        if (best_idx < gts.size()) {
            taken[d.video][best_idx] = true;
            d.tp = true;
            d.gt_index = best_idx;
        }
    }
}

/// Area under the interpolated precision-recall curve given the ranked
/// TP/FP sequence.
double ap_from_flags(const std::vector<bool>& tp_in_rank_order, long num_gt,
                     bool eleven_point) {
    if (num_gt <= 0) return 0.0;
    const std::size_t n = tp_in_rank_order.size();
    if (n == 0) return 0.0;
    std::vector<double> precision(n), recall(n);
    long tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += tp_in_rank_order[i] ? 1 : 0;
        precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
        recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    }
    for (std::size_t i = n - 1; i-- > 0;) {
        precision[i] = std::max(precision[i], precision[i + 1]);
    }
    if (eleven_point) {
        double acc = 0.0;
        for (int k = 0; k <= 10; ++k) {
            const double r = k / 10.0;
            double best = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (recall[i] >= r) {
                    best = precision[i];
                    break;
                }
            }
            acc += best;
        }
        return acc / 11.0;
    }
    double area = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        area += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return area;
}

std::vector<bool> tp_flags(const std::vector<RankedDet>& dets) {
    std::vector<bool> flags;
    flags.reserve(dets.size());
    for (const auto& d : dets) flags.push_back(d.tp);
    return flags;
}

}  // namespace

const std::array<const char*, DurationBuckets::count>& DurationBuckets::names() {
    static const std::array<const char*, count> n{"ES", "S", "M", "L", "EL"};
    return n;
}

std::size_t DurationBuckets::bucket_of(double duration_sec) const {
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (duration_sec < edges[i]) return i;
    }
    return edges.size();
}

double average_precision(const std::vector<Detection>& dets, const std::vector<Segment>& gts,
                         double iou_threshold, bool eleven_point) {
    std::vector<RankedDet> ranked;
    ranked.reserve(dets.size());
    for (const Detection& d : dets) {
        ranked.push_back({d.score, d.start, d.end, 0, false, 0});
    }
    rank(ranked);
    const std::vector<std::vector<Segment>> groups{gts};
    match_greedy(ranked, groups, iou_threshold);
    return ap_from_flags(tp_flags(ranked), static_cast<long>(gts.size()), eleven_point);
}

EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& dets_by_video,
                    const std::map<std::string, std::vector<Segment>>& gts_by_video,
                    const std::vector<double>& thresholds, double bucket_threshold,
                    const DurationBuckets& buckets, bool eleven_point) {
    if (thresholds.empty()) {
        throw std::invalid_argument("need at least one IoU threshold");
    }

    EvalReport report;
    report.thresholds = thresholds;
    report.bucket_threshold = bucket_threshold;

    // Stable video order, plus the set of classes that actually occur.
    std::vector<std::string> video_order;
    std::set<long> classes;
    for (const auto& [vid, gts] : gts_by_video) {
        video_order.push_back(vid);
        for (const Segment& g : gts) {
            if (g.label < 1) {
                throw std::invalid_argument("ground truth in video '" + vid +
                                            "' carries background label");
            }
            classes.insert(g.label);
        }
    }
    for (const auto& [vid, dets] : dets_by_video) {
        if (gts_by_video.find(vid) == gts_by_video.end()) {
            report.unknown_videos.push_back(vid);
        }
    }

    // (video index, class) -> ground truths; detections likewise.
    auto video_index = [&](const std::string& vid) {
        return static_cast<std::size_t>(
            std::lower_bound(video_order.begin(), video_order.end(), vid) -
            video_order.begin());
    };

    auto gts_of_class = [&](long label) {
        std::vector<std::vector<Segment>> out(video_order.size());
        for (const auto& [vid, gts] : gts_by_video) {
            auto& slot = out[video_index(vid)];
            for (const Segment& g : gts) {
                if (g.label == label) slot.push_back(g);
            }
        }
        return out;
    };

    auto dets_of_class = [&](long label) {
        std::vector<RankedDet> out;
        for (const auto& [vid, dets] : dets_by_video) {
            const auto it = gts_by_video.find(vid);
            if (it == gts_by_video.end()) continue;
            const std::size_t v = video_index(vid);
            for (const Detection& d : dets) {
                if (d.label != label) continue;
                if (!(d.end > d.start)) {
                    throw std::invalid_argument("degenerate detection in video '" + vid + "'");
                }
                out.push_back({d.score, d.start, d.end, v, false, 0});
            }
        }
        rank(out);
        return out;
    };

    for (double thr : thresholds) {
        std::vector<ClassAp> row;
        for (long label : classes) {
            const auto gts = gts_of_class(label);
            long num_gt = 0;
            for (const auto& g : gts) num_gt += static_cast<long>(g.size());
            auto dets = dets_of_class(label);
            match_greedy(dets, gts, thr);
            ClassAp entry;
            entry.label = label;
            entry.num_gt = num_gt;
            entry.ap = ap_from_flags(tp_flags(dets), num_gt, eleven_point);
            row.push_back(entry);
        }
        double mean = 0.0;
        for (const auto& e : row) mean += e.ap;
        report.map_per_threshold.push_back(row.empty() ? 0.0
                                                       : mean / static_cast<double>(row.size()));
        report.per_class.push_back(std::move(row));
    }
    report.average_map =
        std::accumulate(report.map_per_threshold.begin(), report.map_per_threshold.end(), 0.0) /
        static_cast<double>(report.map_per_threshold.size());

    // Duration buckets: match once at the bucket threshold, then assign
    // each detection to its matched ground truth's bucket (true positives)
    // or to the bucket of its own predicted duration (false positives).
    report.bucket_gt.fill(0);
    std::array<std::vector<double>, DurationBuckets::count> bucket_aps;
    for (long label : classes) {
        const auto gts = gts_of_class(label);
        auto dets = dets_of_class(label);
        match_greedy(dets, gts, bucket_threshold);

        std::array<long, DurationBuckets::count> gt_count{};
        for (const auto& vid_gts : gts) {
            for (const Segment& g : vid_gts) {
                ++gt_count[buckets.bucket_of(g.length())];
            }
        }
        std::array<std::vector<bool>, DurationBuckets::count> flags;
        for (const auto& d : dets) {
            const double duration =
                d.tp ? gts[d.video][d.gt_index].length() : d.end - d.start;
            flags[buckets.bucket_of(duration)].push_back(d.tp);
        }
        for (std::size_t bkt = 0; bkt < DurationBuckets::count; ++bkt) {
            report.bucket_gt[bkt] += gt_count[bkt];
            if (gt_count[bkt] > 0) {
                bucket_aps[bkt].push_back(
                    ap_from_flags(flags[bkt], gt_count[bkt], eleven_point));
            }
        }
    }
    for (std::size_t bkt = 0; bkt < DurationBuckets::count; ++bkt) {
        if (bucket_aps[bkt].empty()) {
            report.bucket_map[bkt] = -1.0;
        } else {
            report.bucket_map[bkt] =
                std::accumulate(bucket_aps[bkt].begin(), bucket_aps[bkt].end(), 0.0) /
                static_cast<double>(bucket_aps[bkt].size());
        }
    }
    return report;
}

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"thresholds\":[";
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        os << (i ? "," : "") << thresholds[i];
    }
    os << "],\"map\":[";
    for (std::size_t i = 0; i < map_per_threshold.size(); ++i) {
        os << (i ? "," : "") << map_per_threshold[i];
    }
    os << "],\"average_map\":" << average_map << ",\"per_class\":[";
    for (std::size_t t = 0; t < per_class.size(); ++t) {
        os << (t ? "," : "") << "[";
        for (std::size_t c = 0; c < per_class[t].size(); ++c) {
            const auto& e = per_class[t][c];
            os << (c ? "," : "") << "{\"label\":" << e.label << ",\"ap\":" << e.ap
               << ",\"num_gt\":" << e.num_gt << "}";
        }
        os << "]";
    }
    os << "],\"bucket_threshold\":" << bucket_threshold << ",\"buckets\":{";
    const auto& names = DurationBuckets::names();
    for (std::size_t b = 0; b < DurationBuckets::count; ++b) {
        os << (b ? "," : "") << "\"" << names[b] << "\":{\"map\":" << bucket_map[b]
           << ",\"num_gt\":" << bucket_gt[b] << "}";
    }
    os << "},\"unknown_videos\":[";
    for (std::size_t i = 0; i < unknown_videos.size(); ++i) {
        os << (i ? "," : "") << "\"" << unknown_videos[i] << "\"";
    }
    os << "]}";
    return os.str();
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << "mAP by IoU threshold\n";
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "  %4.2f  %7.4f\n", thresholds[i],
                      map_per_threshold[i]);
        os << buf;
    }
    char avg[64];
    std::snprintf(avg, sizeof(avg), "  avg   %7.4f\n", average_map);
    os << avg;
    os << "\nDuration buckets (mAP@" << bucket_threshold << ")\n";
    const auto& names = DurationBuckets::names();
    os << " ";
    for (auto* n : names) {
        char cell[16];
        std::snprintf(cell, sizeof(cell), " %8s", n);
        os << cell;
    }
    os << "\n ";
    for (std::size_t b = 0; b < DurationBuckets::count; ++b) {
        char cell[16];
        if (bucket_map[b] < 0.0) {
            std::snprintf(cell, sizeof(cell), " %8s", "-");
        } else {
            std::snprintf(cell, sizeof(cell), " %8.4f", bucket_map[b]);
        }
        os << cell;
    }
    os << "\n";
    return os.str();
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "metric,key,value\n";
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        os << "map," << thresholds[i] << "," << map_per_threshold[i] << "\n";
    }
    os << "average_map,," << average_map << "\n";
    const auto& names = DurationBuckets::names();
    for (std::size_t b = 0; b < DurationBuckets::count; ++b) {
        os << "bucket_map," << names[b] << "," << bucket_map[b] << "\n";
    }
    return os.str();
}

}  // namespace a2net
