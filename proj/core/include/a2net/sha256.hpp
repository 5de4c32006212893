#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

namespace a2net {

/// Incremental SHA-256. Feed bytes with update(), read the digest once with
/// hex_digest(); further updates after finalization are rejected.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* block);

    std::uint32_t state_[8];
    std::uint8_t buffer_[64];
    std::size_t buffered_ = 0;
    std::uint64_t total_bytes_ = 0;
    bool finalized_ = false;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& text);

/// Streams the file through the hash; throws DataError when unreadable.
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace a2net
