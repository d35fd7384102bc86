#include "cpcvae/idx.hpp"

#include <fstream>
#include <iterator>

#include "cpcvae/errors.hpp"

namespace cpcvae {

namespace {

[[noreturn]] void fail(const std::string& what, std::size_t offset) {
  throw FormatError("IDX: " + what + " at byte offset " + std::to_string(offset));
}

}  // namespace

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) fail("truncated magic number", bytes.size());
  if (bytes[0] != 0 || bytes[1] != 0) fail("magic must start with two zero bytes", 0);
  if (bytes[2] != 0x08) fail("unsupported element type code " + std::to_string(bytes[2]), 2);
  const std::size_t rank = bytes[3];
  if (rank == 0) fail("rank must be positive", 3);
  IdxArray out;
  std::size_t offset = 4, count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    if (bytes.size() < offset + 4) fail("truncated dimension header", bytes.size());
    const std::size_t n = (std::size_t{bytes[offset]} << 24) | (std::size_t{bytes[offset + 1]} << 16) |
                          (std::size_t{bytes[offset + 2]} << 8) | std::size_t{bytes[offset + 3]};
    out.dims.push_back(n);
    count *= n;
    offset += 4;
  }
  if (bytes.size() < offset + count)
    fail("truncated payload: expected " + std::to_string(offset + count) + " bytes, found " +
             std::to_string(bytes.size()),
         bytes.size());
  if (bytes.size() > offset + count) fail("trailing bytes after payload", offset + count);
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return out;
}

IdxArray load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("IDX: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

}  // namespace cpcvae
