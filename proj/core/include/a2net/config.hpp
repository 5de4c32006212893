#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "a2net/inference.hpp"
#include "a2net/losses.hpp"
#include "a2net/network.hpp"

namespace a2net {

/// Everything a run needs, resolved from defaults + config file + command
/// line overrides. Defaults follow the reference training recipe.
struct ExperimentConfig {
    ModelConfig model;
    LossWeights weights;

    double lr = 1e-4;
    long batch_size = 32;
    long epochs = 45;
    long decay_epoch = 30;    // learning rate x decay_factor entering this epoch
    long decay_epoch2 = 40;   // second decay; 0 disables
    double decay_factor = 0.1;

    std::string train_manifest;
    std::string eval_manifest;
    std::string data_mode = "sliding";  // sliding | resize
    long window_frames = 512;           // raw video frames per window
    long train_stride_frames = 128;
    long eval_stride_frames = 256;
    double min_keep_fraction = 0.75;

    InferenceConfig inference;

    std::string branch_mode = "joint";
    std::uint64_t seed = 1;
    long checkpoint_every = 0;  // epochs between snapshots; 0 = final only
    std::string run_dir;

    BranchMode mode() const { return parse_branch_mode(branch_mode); }
    void validate() const;  // throws UsageError
};

ExperimentConfig default_config();

/// One key=value assignment (also how applied overrides are echoed back).
struct ConfigEntry {
    std::string key;
    std::string value;
};

/// Sets a single field by key; unknown keys and unparsable values raise
/// UsageError naming the key.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Reads `key = value` lines ('#' comments, blank lines allowed) and
/// applies them over `cfg`. Returns the entries applied, in file order.
std::vector<ConfigEntry> apply_config_file(ExperimentConfig& cfg,
                                           const std::filesystem::path& path);

/// Every key with its current value, in schema order; parses back
/// losslessly through apply_override.
std::vector<ConfigEntry> config_entries(const ExperimentConfig& cfg);

/// Resolved config as a key=value document.
std::string serialize_config(const ExperimentConfig& cfg);

/// Human-readable schema: every key, default, and description.
std::string config_schema();

}  // namespace a2net
