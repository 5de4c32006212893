#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "a2net/tensor.hpp"

namespace a2net {

/// On-disk snapshot: a free-form JSON metadata blob plus an ordered list of
/// named tensors (parameters first, then optimizer moments by convention).
/// The binary layout is fixed little-endian, so saving the same snapshot
/// twice produces byte-identical files.
struct Checkpoint {
    std::string meta_json;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws DataError on missing file, foreign magic, version skew,
/// or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace a2net
