#pragma once

// Training-set triplets (RGB + aligned contrast + lesion mask) and the local
// on-disk store. One directory per set:
//
//   <store>/<id>/rgb.png contrast.png mask.png alignment.json manifest.json
//
// Sets are written into a hidden temporary directory and swapped in with a
// single rename, so a reader sees either the old set or the new one.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amdprep/geometry.hpp"
#include "amdprep/raster.hpp"

namespace amdprep {

inline constexpr int kSetSize = 512;

inline constexpr std::string_view kRgbFile = "rgb.png";
inline constexpr std::string_view kContrastFile = "contrast.png";
inline constexpr std::string_view kMaskFile = "mask.png";
inline constexpr std::string_view kAlignmentFile = "alignment.json";
inline constexpr std::string_view kManifestFile = "manifest.json";

/// The five set files in canonical order.
const std::vector<std::string>& set_file_names();

enum class Label { Amd, Healthy };

std::string_view label_name(Label label) noexcept;
/// "amd" | "healthy"; anything else -> Error(InvalidArgument).
Label parse_label(std::string_view text);

struct TrainingSet {
  std::string id;
  ImageBuffer rgb;       // 3 channels, 512x512
  ImageBuffer contrast;  // 1 or 3 channels, 512x512, in the RGB frame
  ImageBuffer mask;      // grayscale {0, 255}, 512x512
  SimilarityTransform transform;
  std::vector<PointPair> point_pairs;
  std::int64_t revision = 1;
  Label label = Label::Amd;

  friend bool operator==(const TrainingSet&, const TrainingSet&) = default;
};

struct SetManifest {
  std::string id;
  std::int64_t revision = 1;
  Label label = Label::Amd;
  std::string created_at;  // RFC 3339, UTC
  double residual_max_px = 0.0;
  double residual_mean_px = 0.0;
  std::map<std::string, std::string> checksums;  // file name -> sha256 hex

  friend bool operator==(const SetManifest&, const SetManifest&) = default;
};

/// File name -> raw bytes, exactly as stored.
using SetFiles = std::map<std::string, std::vector<std::uint8_t>>;

/// Ids are 1-64 characters from [A-Za-z0-9_-].
bool valid_set_id(std::string_view id) noexcept;

/// Normalises the RGB image to 512x512, fits the contrast->RGB similarity in
/// the normalised frame (pair targets are mapped through the normalisation),
/// warps the contrast image into that frame and stores the mask as {0, 255}.
/// Without an explicit id, one is derived from the content.
TrainingSet assemble_set(const ImageBuffer& rgb_raw, const ImageBuffer& contrast_raw,
                         const std::vector<PointPair>& pairs, const BinaryMask& mask,
                         Label label = Label::Amd, std::optional<std::string> id = std::nullopt);

/// Healthy control: no contrast study exists, so the contrast slot holds a
/// black frame, the transform is the identity and the mask is empty.
TrainingSet assemble_healthy_set(const ImageBuffer& rgb_raw, std::optional<std::string> id = std::nullopt);

/// Throws Error(ValidationFailed, invariant) when a set breaks the format
/// rules (sizes, channel counts, mask binarity, revision, id).
void validate_set(const TrainingSet& set);

std::string current_timestamp_utc();

/// Encodes all five files. `created_at` defaults to now.
SetFiles encode_set_files(const TrainingSet& set, std::optional<std::string> created_at = std::nullopt);

struct DecodedSet {
  TrainingSet set;
  SetManifest manifest;
};

/// Full validation of a file collection. Failures raise Error(CorruptSet)
/// whose invariant() names the broken rule.
DecodedSet decode_set_files(const SetFiles& files, std::optional<std::string_view> expected_id = std::nullopt);

SetManifest parse_manifest(std::string_view text);
std::string render_manifest(const SetManifest& manifest);

struct SaveOptions {
  std::optional<std::string> created_at;
  /// Called after each file lands in the staging directory. Throwing from
  /// it simulates a crash mid-write.
  std::function<void(std::string_view file_name)> after_file_written;
};

SetManifest save_set(const TrainingSet& set, const std::filesystem::path& store_root,
                     const SaveOptions& options = {});

/// Errors: NotFound, CorruptSet.
TrainingSet load_set(const std::filesystem::path& store_root, std::string_view id);
DecodedSet load_set_with_manifest(const std::filesystem::path& store_root, std::string_view id);

SetFiles read_set_files(const std::filesystem::path& store_root, std::string_view id);

/// Validates and atomically installs raw set files under store_root/<id>.
SetManifest store_set_files(const SetFiles& files, const std::filesystem::path& store_root,
                            const SaveOptions& options = {});

struct CorruptEntry {
  std::string id;
  std::string invariant;
  std::string message;
};

struct SetListing {
  std::vector<SetManifest> manifests;  // sorted by id
  std::vector<CorruptEntry> corrupt;   // sorted by id
};

SetListing list_sets(const std::filesystem::path& store_root);

/// Zip of the five set files as stored.
std::vector<std::uint8_t> pack_bundle(const SetFiles& files);
std::vector<std::uint8_t> pack_bundle(const std::filesystem::path& store_root, std::string_view id);
/// Splits a bundle into files, requiring exactly the five set file names.
SetFiles unpack_bundle(std::span<const std::uint8_t> bundle);

}  // namespace amdprep
