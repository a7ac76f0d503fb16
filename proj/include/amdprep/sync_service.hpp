#pragma once

// HTTP front end for RemoteStore plus the matching client.
//
//   GET  /healthz
//   GET  /api/sets                          -> [record, ...]
//   GET  /api/sets/{id}                     -> bundle (application/zip)
//   PUT  /api/sets/{id}?expected_revision=N -> 201 new / 200 updated,
//                                              409 conflict, 422 invalid
//   GET  /api/sets/{id}/{file}              -> one set file
//   POST /api/sets/{id}/transform           -> fit + residuals + preview
//   PUT  /api/sets/{id}/mask                -> new revision with this mask
//
// No authentication: bind to localhost unless the network is trusted.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "amdprep/remote_store.hpp"

namespace amdprep {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path ui_dir;  // static annotator assets served at "/", optional
  unsigned threads = 8;
};

class SyncService {
public:
  SyncService(RemoteStore& store, ServiceOptions options);
  ~SyncService();

  SyncService(const SyncService&) = delete;
  SyncService& operator=(const SyncService&) = delete;

  /// Throws Error(IoError) if the address cannot be bound.
  void bind();
  int port() const noexcept { return port_; }

  /// Blocks serving requests until stop().
  void serve();
  /// bind() + serve() on a background thread.
  void start();
  void stop();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  RemoteStore& store_;
  ServiceOptions options_;
  int port_ = 0;
  std::thread thread_;
};

struct TransformPreview {
  SimilarityTransform transform;
  std::vector<double> residuals;
  std::vector<std::uint8_t> preview_png;
};

/// Maps HTTP failures back onto Error codes (404 NotFound, 409
/// RevisionConflict, 413 PayloadTooLarge, 422 ValidationFailed, else
/// IoError).
class SyncClient {
public:
  SyncClient(std::string host, int port);
  ~SyncClient();

  bool healthy();
  std::vector<RemoteSetRecord> list();
  RemoteSetRecord upload(std::string_view id, std::span<const std::uint8_t> bundle,
                         std::optional<std::int64_t> expected_revision = std::nullopt);
  RemoteStore::Download download(std::string_view id);
  std::vector<std::uint8_t> fetch_file(std::string_view id, std::string_view file);
  TransformPreview fit_transform(std::string_view id, const std::vector<PointPair>& pairs);
  RemoteSetRecord put_mask(std::string_view id, std::span<const std::uint8_t> mask_png,
                           std::optional<std::int64_t> expected_revision = std::nullopt);

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port"; Error(InvalidArgument) when malformed.
std::pair<std::string, int> parse_bind_address(std::string_view text);

}  // namespace amdprep
