#pragma once

// Minimal zip container for set bundles. Writes uncompressed ("stored")
// entries with a fixed timestamp so equal content yields equal archives;
// reads stored and deflated entries and verifies CRC-32.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace amdprep {

struct ZipEntry {
  std::string name;
  std::vector<std::uint8_t> data;
};

std::vector<std::uint8_t> write_zip(std::span<const ZipEntry> entries);

/// Throws Error(ValidationFailed, invariant "bundle must be a valid zip
/// archive") on malformed input.
std::vector<ZipEntry> read_zip(std::span<const std::uint8_t> archive);

}  // namespace amdprep
