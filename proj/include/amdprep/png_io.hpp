#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "amdprep/raster.hpp"

namespace amdprep {

/// Decodes 8-bit grayscale or RGB PNG data. Palette images are expanded to
/// RGB; images with an alpha channel or 16-bit samples are rejected with
/// Error(InvalidImage).
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);

/// Deterministic encoding: fixed zlib level and filter set, no timestamp
/// chunk, so equal pixels give equal bytes.
std::vector<std::uint8_t> encode_png(const ImageBuffer& img);

ImageBuffer read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const ImageBuffer& img);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace amdprep
