#pragma once

#include <array>
#include <cstdint>

#include "a2net/data.hpp"

namespace a2net {

/// Recipe for a deterministic synthetic corpus: background noise with
/// class-specific orthonormal templates injected over sampled action
/// intervals, duration mixture over the five bucket ranges.
struct SynthSpec {
    long num_videos = 20;
    long num_classes = 5;
    long feature_dim = 32;
    long video_steps = 512;
    double fps = 30.0;
    double frames_per_feature = 4.0;
    long actions_per_video = 8;
    std::array<double, 5> mixture{0.2, 0.2, 0.2, 0.2, 0.2};  // ES, S, M, L, EL
    double snr = 2.0;           // template amplitude over unit noise
    double min_es_sec = 0.3;    // shortest sampled duration
    double max_el_sec = 13.0;   // longest sampled duration
    double gap_sec = 0.4;       // minimum spacing between actions
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthResult {
    Dataset dataset;
    long requested_actions = 0;
    long placed_actions = 0;  // lower when placement retries ran out
};

SynthResult generate_synthetic(const SynthSpec& spec);

/// Pairwise-orthonormal class templates in feature space (rows), seeded.
Tensor class_templates(long num_classes, long feature_dim, std::uint64_t seed);

}  // namespace a2net
