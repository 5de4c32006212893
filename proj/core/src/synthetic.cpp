#include "a2net/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "a2net/rng.hpp"

namespace a2net {

namespace {

// Seed salt 0 feeds the template stream; video i uses salt i + 1.
constexpr std::uint64_t kTemplateStream = 0;

}  // namespace

void SynthSpec::validate() const {
    if (num_videos < 1 || num_classes < 1 || feature_dim < 1 || video_steps < 1 ||
        actions_per_video < 0) {
        throw std::invalid_argument("synthetic spec has non-positive sizes");
    }
    if (num_classes > feature_dim) {
        throw std::invalid_argument("orthogonal templates need feature_dim >= num_classes");
    }
    if (fps <= 0.0 || frames_per_feature <= 0.0 || snr < 0.0) {
        throw std::invalid_argument("synthetic spec has invalid rates");
    }
    double total = 0.0;
    for (double w : mixture) {
        if (w < 0.0) {
            throw std::invalid_argument("mixture weights must be non-negative");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("mixture weights must sum to 1, got " +
                                    std::to_string(total));
    }
    if (!(min_es_sec > 0.0 && min_es_sec < 1.5)) {
        throw std::invalid_argument("min_es_sec must lie in (0, 1.5)");
    }
    if (max_el_sec <= 6.9) {
        throw std::invalid_argument("max_el_sec must exceed 6.9");
    }
}

Tensor class_templates(long num_classes, long feature_dim, std::uint64_t seed) {
    if (num_classes > feature_dim) {
        throw std::invalid_argument("cannot orthonormalize " + std::to_string(num_classes) +
                                    " templates in dimension " + std::to_string(feature_dim));
    }
    Rng rng(seed);
    Tensor t({num_classes, feature_dim});
    for (long c = 0; c < num_classes; ++c) {
        double* row = t.data() + c * feature_dim;
        for (long d = 0; d < feature_dim; ++d) {
            row[d] = rng.gaussian();
        }
        // Gram-Schmidt against earlier rows, retrying on near-degeneracy.
        for (long prev = 0; prev < c; ++prev) {
            const double* p = t.data() + prev * feature_dim;
            double dot = 0.0;
            for (long d = 0; d < feature_dim; ++d) dot += row[d] * p[d];
            for (long d = 0; d < feature_dim; ++d) row[d] -= dot * p[d];
        }
        double norm = 0.0;
        for (long d = 0; d < feature_dim; ++d) norm += row[d] * row[d];
        norm = std::sqrt(norm);
        if (norm < 1e-8) {
            --c;  // astronomically unlikely; resample the row
            continue;
        }
        for (long d = 0; d < feature_dim; ++d) row[d] /= norm;
    }
    return t;
}

SynthResult generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    const double feature_fps = spec.fps / spec.frames_per_feature;
    const Tensor templates =
        class_templates(spec.num_classes, spec.feature_dim, mix_seed(spec.seed, kTemplateStream));

    // Duration ranges in seconds per bucket.
    const double lo[5] = {spec.min_es_sec, 1.5, 2.5, 4.2, 6.9};
    const double hi[5] = {1.5, 2.5, 4.2, 6.9, spec.max_el_sec};

    SynthResult result;
    result.dataset.num_classes = spec.num_classes;

    for (long vi = 0; vi < spec.num_videos; ++vi) {
        Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(vi) + 1));
        VideoRecord video;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "synth_%04ld", vi);
        video.video_id = idbuf;
        video.fps = spec.fps;
        video.frames_per_feature = spec.frames_per_feature;
        video.features = Tensor({spec.feature_dim, spec.video_steps});
        for (double& v : video.features.values()) {
            v = rng.gaussian();
        }

        // Sample and place actions; a placement that cannot avoid overlap
        // after bounded retries is skipped.
        std::vector<Segment> placed;  // feature steps
        const double gap_steps = spec.gap_sec * feature_fps;
        for (long a = 0; a < spec.actions_per_video; ++a) {
            ++result.requested_actions;
            const double u = rng.uniform();
            std::size_t bucket = 0;
            double acc = 0.0;
            for (std::size_t b = 0; b < 5; ++b) {
                acc += spec.mixture[b];
                if (u < acc) {
                    bucket = b;
                    break;
                }
                bucket = b;
            }
            const double dur_sec = rng.uniform(lo[bucket], hi[bucket]);
            const double dur_steps = dur_sec * feature_fps;
            if (dur_steps >= static_cast<double>(spec.video_steps)) continue;
            const long label = rng.uniform_int(1, spec.num_classes + 1);

            bool ok = false;
            Segment seg;
            for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
                const double start =
                    rng.uniform(0.0, static_cast<double>(spec.video_steps) - dur_steps);
                seg = Segment{start, start + dur_steps, label, 1.0};
                ok = true;
                for (const Segment& other : placed) {
                    if (seg.start < other.end + gap_steps &&
                        other.start < seg.end + gap_steps) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) continue;
            placed.push_back(seg);
            ++result.placed_actions;

            // Inject the class template, scaling edge steps by their
            // fractional coverage.
            const double* tmpl = templates.data() + (label - 1) * spec.feature_dim;
            const long first = static_cast<long>(std::floor(seg.start));
            const long last = std::min(spec.video_steps - 1,
                                       static_cast<long>(std::ceil(seg.end)) - 1);
            for (long t = std::max<long>(0, first); t <= last; ++t) {
                const double cover = std::min(seg.end, static_cast<double>(t + 1)) -
                                     std::max(seg.start, static_cast<double>(t));
                if (cover <= 0.0) continue;
                const double amp = spec.snr * std::min(1.0, cover);
                for (long d = 0; d < spec.feature_dim; ++d) {
                    video.features.data()[d * spec.video_steps + t] += amp * tmpl[d];
                }
            }
        }

        std::sort(placed.begin(), placed.end(),
                  [](const Segment& a, const Segment& b) { return a.start < b.start; });
        for (const Segment& s : placed) {
            video.annotations.push_back(
                Segment{s.start / feature_fps, s.end / feature_fps, s.label, 1.0});
        }
        result.dataset.videos.push_back(std::move(video));
    }
    return result;
}

}  // namespace a2net
