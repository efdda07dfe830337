#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "nits/model.hpp"

namespace nits::checkpoint {

/// Checkpoint layout:
///
///   "NITS1\n"
///   key=value lines (UTF-8): dims, pnn_widths, hidden_dim, residual_blocks,
///     dropout, masking, seed, bounds.<i>=lo,hi, shift.<i>, scale.<i>,
///     param_count; reals are shortest round-trip decimal float64
///   "\n"
///   param_count IEEE-754 little-endian float64 values of phi, in layout order
///   8-byte little-endian CRC-64/XZ of every preceding byte
inline constexpr std::string_view kMagic = "NITS1\n";

std::string serialize(const NitsModel& model);
/// Throws FormatError on a bad magic string, a malformed header, a short
/// payload or a CRC mismatch.
NitsModel deserialize(std::string_view bytes);

void save(const NitsModel& model, const std::filesystem::path& path);
NitsModel load(const std::filesystem::path& path);

/// CRC-64/XZ (ECMA-182 polynomial, reflected, all-ones init and xor-out).
std::uint64_t crc64(std::span<const unsigned char> bytes) noexcept;

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace nits::checkpoint
