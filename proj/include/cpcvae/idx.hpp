#pragma once

// Reader for the big-endian IDX array format used by MNIST.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cpcvae {

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> data;
};

/// Parses an unsigned-byte IDX buffer: two zero bytes, type code 0x08, rank,
/// then one big-endian u32 per dimension and the payload. Any deviation
/// raises FormatError naming the byte offset.
IdxArray parse_idx(std::span<const std::uint8_t> bytes);
IdxArray load_idx(const std::filesystem::path& path);

}  // namespace cpcvae
