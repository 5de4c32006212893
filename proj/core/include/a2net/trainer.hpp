#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "a2net/checkpoint.hpp"
#include "a2net/config.hpp"
#include "a2net/data.hpp"
#include "a2net/network.hpp"
#include "a2net/optim.hpp"

namespace a2net {

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::vector<double> epoch_mean_loss;  // mean total loss per epoch, 1-based order
    long steps = 0;
};

/// End-to-end seeded training: windows the dataset, runs the epoch loop
/// with the configured schedule, streams one JSON line per step into
/// run_dir/train_log.jsonl, snapshots checkpoints, and writes the resolved
/// config. Passing `resume_from` continues an interrupted run and
/// reproduces the uninterrupted loss sequence exactly (all randomness is
/// keyed by (seed, epoch, window), never by consumed state).
/// A non-finite loss aborts with NumericalError; checkpoints already on
/// disk stay put.
TrainResult run_training(const ExperimentConfig& cfg, const Dataset& data,
                         std::ostream& info, const std::filesystem::path& resume_from = {});

/// Checkpoint plumbing shared by training and inference.
Checkpoint make_checkpoint(const Network& net, const Adam& adam, const ExperimentConfig& cfg,
                           long completed_epochs);

struct CheckpointInfo {
    ModelConfig model;
    std::string branch_mode;
    long completed_epochs = 0;
    std::uint64_t seed = 0;
};

CheckpointInfo parse_checkpoint_meta(const std::string& meta_json);
void load_network(Network& net, const Checkpoint& ckpt);
void load_adam(Adam& adam, const Network& net, const Checkpoint& ckpt);

/// Training windows for one video under the configured data mode;
/// validates that frame-based window geometry lands on whole steps
/// matching the model length.
std::vector<WindowSample> windows_for_training(const ExperimentConfig& cfg,
                                               const VideoRecord& video);
std::vector<WindowSample> windows_for_inference(const ExperimentConfig& cfg,
                                                const VideoRecord& video);

}  // namespace a2net
