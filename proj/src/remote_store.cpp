#include "amdprep/remote_store.hpp"

#include <mutex>

#include "amdprep/digest.hpp"
#include "amdprep/error.hpp"
#include "amdprep/png_io.hpp"

namespace amdprep {

namespace fs = std::filesystem;

namespace {

nlohmann::json manifest_to_json(const SetManifest& m) { return nlohmann::json::parse(render_manifest(m)); }

/// Unpacks and fully validates a bundle, reporting problems as ValidationFailed.
DecodedSet validate_bundle(std::span<const std::uint8_t> bundle, std::optional<std::string_view> id) {
  try {
    return decode_set_files(unpack_bundle(bundle), id);
  } catch (const Error& e) {
    if (e.code() == Errc::CorruptSet) throw Error(Errc::ValidationFailed, e.what(), e.invariant());
    throw;
  }
}

}  // namespace

nlohmann::json record_to_json(const RemoteSetRecord& r) {
  return {{"id", r.id},
          {"revision", r.revision},
          {"manifest", manifest_to_json(r.manifest)},
          {"location", r.location},
          {"uploaded_at", r.uploaded_at}};
}

RemoteSetRecord record_from_json(const nlohmann::json& j) {
  try {
    return {.id = j.at("id").get<std::string>(),
            .revision = j.at("revision").get<std::int64_t>(),
            .manifest = parse_manifest(j.at("manifest").dump()),
            .location = j.at("location").get<std::string>(),
            .uploaded_at = j.at("uploaded_at").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ValidationFailed, std::string("malformed set record: ") + e.what(), "set record must be valid");
  }
}

RemoteStore::RemoteStore(fs::path data_dir, std::size_t max_bundle_bytes)
    : root_(std::move(data_dir)), max_bundle_bytes_(max_bundle_bytes) {
  std::error_code ec;
  fs::create_directories(root_ / "blobs", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + (root_ / "blobs").string() + ": " + ec.message());
  const fs::path index_path = root_ / "index.json";
  if (!fs::exists(index_path)) return;
  const auto bytes = read_file(index_path);
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    for (const auto& item : j.at("sets")) {
      auto record = record_from_json(item);
      index_.emplace(record.id, std::move(record));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, "corrupt server index " + index_path.string() + ": " + e.what());
  }
}

void RemoteStore::persist_index() const {
  nlohmann::json sets = nlohmann::json::array();
  for (const auto& [id, record] : index_) sets.push_back(record_to_json(record));
  write_text_atomic(root_ / "index.json", nlohmann::json{{"sets", sets}}.dump(2) + "\n");
}

RemoteSetRecord RemoteStore::commit(std::string_view id, std::span<const std::uint8_t> bundle,
                                    const SetManifest& manifest, std::optional<std::int64_t> expected_revision) {
  // Blobs are immutable and content-addressed, so they can be written
  // before taking the lock; readers only reach them through the index.
  const std::string digest = sha256_hex(bundle);
  const std::string location = "blobs/" + digest + ".zip";
  if (!fs::exists(root_ / location)) write_file_atomic(root_ / location, bundle);

  std::unique_lock lock(mutex_);
  const auto it = index_.find(id);
  const std::int64_t current = it == index_.end() ? 0 : it->second.revision;
  if (expected_revision && *expected_revision != current) throw RevisionConflict(current, expected_revision);
  std::optional<RemoteSetRecord> previous;
  if (it != index_.end()) previous = it->second;

  RemoteSetRecord record{.id = std::string(id),
                         .revision = current + 1,
                         .manifest = manifest,
                         .location = location,
                         .uploaded_at = current_timestamp_utc()};
  index_.insert_or_assign(record.id, record);
  try {
    persist_index();
  } catch (...) {
    if (previous) {
      index_.insert_or_assign(record.id, *previous);
    } else {
      index_.erase(record.id);
    }
    throw;
  }
  return record;
}

RemoteSetRecord RemoteStore::upload(std::string_view id, std::span<const std::uint8_t> bundle,
                                    std::optional<std::int64_t> expected_revision) {
  if (bundle.size() > max_bundle_bytes_) {
    throw Error(Errc::PayloadTooLarge, "bundle of " + std::to_string(bundle.size()) + " bytes exceeds the limit of " +
                                           std::to_string(max_bundle_bytes_));
  }
  if (!valid_set_id(id)) {
    throw Error(Errc::ValidationFailed, "set id must match [A-Za-z0-9_-]{1,64}", "set id must match [A-Za-z0-9_-]{1,64}");
  }
  const DecodedSet decoded = validate_bundle(bundle, std::nullopt);
  if (decoded.manifest.id != id) {
    throw Error(Errc::ValidationFailed, "bundle id '" + decoded.manifest.id + "' does not match '" + std::string(id) + "'",
                "bundle id must match request id");
  }
  return commit(id, bundle, decoded.manifest, expected_revision);
}

std::optional<RemoteSetRecord> RemoteStore::find(std::string_view id) const {
  std::shared_lock lock(mutex_);
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

RemoteStore::Download RemoteStore::download(std::string_view id) const {
  auto record = find(id);
  if (!record) throw Error(Errc::NotFound, "no set with id '" + std::string(id) + "'");
  auto bytes = read_file(root_ / record->location);
  return {std::move(*record), std::move(bytes)};
}

std::vector<RemoteSetRecord> RemoteStore::list() const {
  std::shared_lock lock(mutex_);
  std::vector<RemoteSetRecord> out;
  out.reserve(index_.size());
  for (const auto& [id, record] : index_) out.push_back(record);
  return out;
}

RemoteSetRecord RemoteStore::replace_mask(std::string_view id, std::span<const std::uint8_t> mask_png,
                                          std::optional<std::int64_t> expected_revision) {
  const Download current = download(id);
  const std::int64_t base = expected_revision.value_or(current.record.revision);
  if (base != current.record.revision) throw RevisionConflict(current.record.revision, expected_revision);

  SetFiles files = unpack_bundle(current.bundle);
  files[std::string(kMaskFile)].assign(mask_png.begin(), mask_png.end());

  SetManifest manifest = parse_manifest(std::string(files.at(std::string(kManifestFile)).begin(),
                                                    files.at(std::string(kManifestFile)).end()));
  manifest.revision = base + 1;
  manifest.checksums[std::string(kMaskFile)] = sha256_hex(mask_png);
  const std::string text = render_manifest(manifest);
  files[std::string(kManifestFile)].assign(text.begin(), text.end());

  const auto bundle = pack_bundle(files);
  const DecodedSet decoded = validate_bundle(bundle, id);
  return commit(id, bundle, decoded.manifest, base);
}

}  // namespace amdprep
