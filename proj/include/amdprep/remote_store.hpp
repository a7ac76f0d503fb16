#pragma once

// Server-side set database. Bundles are kept as content-addressed zip files
// (blobs/<sha256>.zip) and an index maps each id to its latest accepted
// revision. Bundles are validated in full before they can become visible.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "amdprep/dataset.hpp"
#include "json.hpp"

namespace amdprep {

struct RemoteSetRecord {
  std::string id;
  std::int64_t revision = 0;  // server revision, strictly increasing per id
  SetManifest manifest;       // manifest.json of the stored bundle
  std::string location;       // blob path relative to the data directory
  std::string uploaded_at;    // RFC 3339, UTC

  friend bool operator==(const RemoteSetRecord&, const RemoteSetRecord&) = default;
};

nlohmann::json record_to_json(const RemoteSetRecord& record);
RemoteSetRecord record_from_json(const nlohmann::json& j);

inline constexpr std::size_t kDefaultMaxBundleBytes = 64u << 20;

class RemoteStore {
public:
  explicit RemoteStore(std::filesystem::path data_dir, std::size_t max_bundle_bytes = kDefaultMaxBundleBytes);

  RemoteStore(const RemoteStore&) = delete;
  RemoteStore& operator=(const RemoteStore&) = delete;

  /// Validates and stores a bundle for `id`. With `expected_revision`, the
  /// upload only succeeds if it equals the current revision (0 = absent).
  /// Errors: ValidationFailed (invariant named), RevisionConflict,
  /// PayloadTooLarge.
  RemoteSetRecord upload(std::string_view id, std::span<const std::uint8_t> bundle,
                         std::optional<std::int64_t> expected_revision = std::nullopt);

  struct Download {
    RemoteSetRecord record;
    std::vector<std::uint8_t> bundle;
  };

  /// Latest complete revision. Error(NotFound) for unknown ids.
  Download download(std::string_view id) const;

  std::optional<RemoteSetRecord> find(std::string_view id) const;

  /// Sorted by id.
  std::vector<RemoteSetRecord> list() const;

  /// Replaces mask.png of the latest revision with `mask_png`, producing a
  /// new server-authored revision. Without `expected_revision` the revision
  /// read at the start is used, so a concurrent update still conflicts.
  RemoteSetRecord replace_mask(std::string_view id, std::span<const std::uint8_t> mask_png,
                               std::optional<std::int64_t> expected_revision = std::nullopt);

  const std::filesystem::path& data_dir() const noexcept { return root_; }
  std::size_t max_bundle_bytes() const noexcept { return max_bundle_bytes_; }

private:
  RemoteSetRecord commit(std::string_view id, std::span<const std::uint8_t> bundle, const SetManifest& manifest,
                         std::optional<std::int64_t> expected_revision);
  void persist_index() const;  // caller holds the write lock

  std::filesystem::path root_;
  std::size_t max_bundle_bytes_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, RemoteSetRecord, std::less<>> index_;
};

}  // namespace amdprep
