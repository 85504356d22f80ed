#pragma once

#include "hrf/models.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace hrf::nn {

/**
 * Flat binary checkpoint:
 *   magic "HRFCKPT\x01"
 *   u32 name length, name bytes
 *   u64 FNV-1a digest of config_string()
 *   u64 tensor count, u64 scalar count
 *   scalar count little-endian IEEE doubles, in parameters() order
 * All integers little-endian.
 */
void write_checkpoint(std::ostream& out, const ForecastModel& model);
void save_checkpoint(const std::filesystem::path& path, const ForecastModel& model);

/// Loads into an already constructed model. Throws InputError when the file is
/// malformed or was written by a different model or configuration.
void read_checkpoint(std::istream& in, ForecastModel& model);
void load_checkpoint(const std::filesystem::path& path, ForecastModel& model);

/// 64-bit FNV-1a.
[[nodiscard]] std::uint64_t fnv1a(std::string_view text) noexcept;
[[nodiscard]] std::uint64_t config_digest(const ForecastModel& model);

}  // namespace hrf::nn
