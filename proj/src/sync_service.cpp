#include "amdprep/sync_service.hpp"

#include <charconv>

#include "amdprep/digest.hpp"
#include "amdprep/error.hpp"
#include "amdprep/json_codec.hpp"
#include "amdprep/png_io.hpp"
#include "httplib.h"

namespace amdprep {

namespace {

constexpr const char* kJson = "application/json";
constexpr const char* kZip = "application/zip";
constexpr const char* kIdPattern = "([A-Za-z0-9_-]{1,64})";

int status_for(Errc code) {
  switch (code) {
    case Errc::NotFound: return 404;
    case Errc::RevisionConflict: return 409;
    case Errc::PayloadTooLarge: return 413;
    case Errc::ValidationFailed:
    case Errc::CorruptSet:
    case Errc::TooFewPairs:
    case Errc::DegenerateConfiguration:
    case Errc::NonFinite:
    case Errc::InvalidImage:
      return 422;
    case Errc::InvalidArgument: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, const Error& e) {
  nlohmann::json body{{"error", errc_name(e.code())}, {"message", e.what()}};
  if (const auto* conflict = dynamic_cast<const RevisionConflict*>(&e)) {
    body["current_revision"] = conflict->current_revision();
  }
  if (status_for(e.code()) == 422) body["invariant"] = e.invariant().empty() ? std::string(e.what()) : e.invariant();
  send_json(res, status_for(e.code()), body);
}

std::optional<std::int64_t> expected_revision(const httplib::Request& req) {
  if (!req.has_param("expected_revision")) return std::nullopt;
  const std::string text = req.get_param_value("expected_revision");
  std::int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value < 0) {
    throw Error(Errc::InvalidArgument, "expected_revision must be a non-negative integer");
  }
  return value;
}

std::span<const std::uint8_t> body_bytes(const httplib::Request& req) {
  return {reinterpret_cast<const std::uint8_t*>(req.body.data()), req.body.size()};
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
    }
  };
}

void set_revision_headers(httplib::Response& res, const RemoteSetRecord& record) {
  res.set_header("X-Set-Revision", std::to_string(record.revision));
  res.set_header("ETag", "\"" + record.id + "-" + std::to_string(record.revision) + "\"");
}

}  // namespace

struct SyncService::Impl {
  httplib::Server server;
};

SyncService::SyncService(RemoteStore& store, ServiceOptions options)
    : impl_(std::make_unique<Impl>()), store_(store), options_(std::move(options)) {
  auto& svr = impl_->server;
  const unsigned threads = std::max(1u, options_.threads);
  svr.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  svr.set_payload_max_length(store_.max_bundle_bytes());
  // httplib's default also sets SO_REUSEPORT, which would let a second
  // server share the port instead of failing to bind.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });

  svr.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  svr.Get("/api/sets", guarded([this](const httplib::Request&, httplib::Response& res) {
            nlohmann::json out = nlohmann::json::array();
            for (const auto& r : store_.list()) out.push_back(record_to_json(r));
            send_json(res, 200, out);
          }));

  svr.Get(std::string("/api/sets/") + kIdPattern, guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto dl = store_.download(req.matches[1].str());
            set_revision_headers(res, dl.record);
            res.status = 200;
            res.set_content(std::string(dl.bundle.begin(), dl.bundle.end()), kZip);
          }));

  svr.Put(std::string("/api/sets/") + kIdPattern, guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto record = store_.upload(req.matches[1].str(), body_bytes(req), expected_revision(req));
            set_revision_headers(res, record);
            send_json(res, record.revision == 1 ? 201 : 200, record_to_json(record));
          }));

  svr.Get(std::string("/api/sets/") + kIdPattern +
              R"(/(rgb\.png|contrast\.png|mask\.png|alignment\.json|manifest\.json))",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto dl = store_.download(req.matches[1].str());
            const SetFiles files = unpack_bundle(dl.bundle);
            const std::string name = req.matches[2].str();
            const auto& bytes = files.at(name);
            set_revision_headers(res, dl.record);
            res.status = 200;
            res.set_content(std::string(bytes.begin(), bytes.end()), name.ends_with(".png") ? "image/png" : kJson);
          }));

  svr.Post(std::string("/api/sets/") + kIdPattern + "/transform",
           guarded([this](const httplib::Request& req, httplib::Response& res) {
             const auto body = parse_json(req.body, "transform request");
             const auto pairs = pairs_from_json(body.is_object() && body.contains("pairs") ? body.at("pairs") : body);
             const auto transform = estimate_similarity(pairs);
             const auto res_px = residuals(transform, pairs);
             const auto summary = summarize_residuals(res_px);

             const auto dl = store_.download(req.matches[1].str());
             const SetFiles files = unpack_bundle(dl.bundle);
             const ImageBuffer contrast = decode_png(files.at(std::string(kContrastFile)));
             const auto preview = encode_png(warp(contrast, transform, kSetSize, kSetSize));
             send_json(res, 200,
                       {{"transform", transform_to_json(transform)},
                        {"residuals", res_px},
                        {"residual_max_px", summary.max_px},
                        {"residual_mean_px", summary.mean_px},
                        {"preview_png_base64", base64_encode(preview)}});
           }));

  svr.Put(std::string("/api/sets/") + kIdPattern + "/mask",
          guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto record = store_.replace_mask(req.matches[1].str(), body_bytes(req), expected_revision(req));
            set_revision_headers(res, record);
            send_json(res, 200, record_to_json(record));
          }));

  if (!options_.ui_dir.empty() && !svr.set_mount_point("/", options_.ui_dir.string())) {
    throw Error(Errc::IoError, "UI directory " + options_.ui_dir.string() + " does not exist");
  }
}

SyncService::~SyncService() { stop(); }

void SyncService::bind() {
  auto& svr = impl_->server;
  if (options_.port == 0) {
    port_ = svr.bind_to_any_port(options_.host);
    if (port_ <= 0) throw Error(Errc::IoError, "cannot bind " + options_.host + " to any port");
  } else {
    if (!svr.bind_to_port(options_.host, options_.port)) {
      throw Error(Errc::IoError, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
}

void SyncService::serve() { impl_->server.listen_after_bind(); }

void SyncService::start() {
  bind();
  thread_ = std::thread([this] { serve(); });
  impl_->server.wait_until_ready();
}

void SyncService::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::pair<std::string, int> parse_bind_address(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(Errc::InvalidArgument, "bind address must look like host:port, got '" + std::string(text) + "'");
  }
  int port = -1;
  const auto digits = text.substr(colon + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || port < 0 || port > 65535) {
    throw Error(Errc::InvalidArgument, "invalid port in '" + std::string(text) + "'");
  }
  return {std::string(text.substr(0, colon)), port};
}

// --- client ----------------------------------------------------------------

struct SyncClient::Impl {
  httplib::Client client;
  Impl(const std::string& host, int port) : client(host, port) {
    client.set_connection_timeout(5);
    client.set_read_timeout(60);
    client.set_write_timeout(60);
  }
};

namespace {

[[noreturn]] void raise_for(const httplib::Result& result, std::string_view what) {
  if (!result) {
    throw Error(Errc::IoError, std::string(what) + ": " + httplib::to_string(result.error()));
  }
  const auto& res = *result;
  nlohmann::json body = nlohmann::json::parse(res.body, nullptr, false);
  const std::string message =
      body.is_object() && body.contains("message") ? body["message"].get<std::string>() : res.body;
  const std::string invariant =
      body.is_object() && body.contains("invariant") ? body["invariant"].get<std::string>() : std::string{};
  switch (res.status) {
    case 404: throw Error(Errc::NotFound, message);
    case 409: {
      const std::int64_t current =
          body.is_object() && body.contains("current_revision") ? body["current_revision"].get<std::int64_t>() : -1;
      throw RevisionConflict(current, std::nullopt);
    }
    case 413: throw Error(Errc::PayloadTooLarge, message);
    case 422: throw Error(Errc::ValidationFailed, message, invariant);
    case 400: throw Error(Errc::InvalidArgument, message);
    default: throw Error(Errc::IoError, std::string(what) + ": HTTP " + std::to_string(res.status) + " " + message);
  }
}

std::string set_path(std::string_view id) { return "/api/sets/" + std::string(id); }

std::string revision_query(std::optional<std::int64_t> expected) {
  return expected ? "?expected_revision=" + std::to_string(*expected) : std::string{};
}

}  // namespace

SyncClient::SyncClient(std::string host, int port) : impl_(std::make_unique<Impl>(host, port)) {}
SyncClient::~SyncClient() = default;

bool SyncClient::healthy() {
  const auto res = impl_->client.Get("/healthz");
  return res && res->status == 200;
}

std::vector<RemoteSetRecord> SyncClient::list() {
  const auto res = impl_->client.Get("/api/sets");
  if (!res || res->status != 200) raise_for(res, "list sets");
  std::vector<RemoteSetRecord> out;
  for (const auto& item : nlohmann::json::parse(res->body)) out.push_back(record_from_json(item));
  return out;
}

RemoteSetRecord SyncClient::upload(std::string_view id, std::span<const std::uint8_t> bundle,
                                   std::optional<std::int64_t> expected_revision) {
  const auto res = impl_->client.Put(set_path(id) + revision_query(expected_revision),
                                     std::string(bundle.begin(), bundle.end()), kZip);
  if (!res || (res->status != 200 && res->status != 201)) raise_for(res, "upload");
  return record_from_json(nlohmann::json::parse(res->body));
}

RemoteStore::Download SyncClient::download(std::string_view id) {
  const auto res = impl_->client.Get(set_path(id));
  if (!res || res->status != 200) raise_for(res, "download");
  std::vector<std::uint8_t> bytes(res->body.begin(), res->body.end());
  const SetManifest manifest = decode_set_files(unpack_bundle(bytes)).manifest;
  RemoteSetRecord record{.id = std::string(id),
                         .revision = res->has_header("X-Set-Revision") ? std::stoll(res->get_header_value("X-Set-Revision")) : 0,
                         .manifest = manifest,
                         .location = {},
                         .uploaded_at = {}};
  return {std::move(record), std::move(bytes)};
}

std::vector<std::uint8_t> SyncClient::fetch_file(std::string_view id, std::string_view file) {
  const auto res = impl_->client.Get(set_path(id) + "/" + std::string(file));
  if (!res || res->status != 200) raise_for(res, "fetch file");
  return {res->body.begin(), res->body.end()};
}

TransformPreview SyncClient::fit_transform(std::string_view id, const std::vector<PointPair>& pairs) {
  const nlohmann::json body{{"pairs", pairs_to_json(pairs)}};
  const auto res = impl_->client.Post(set_path(id) + "/transform", body.dump(), kJson);
  if (!res || res->status != 200) raise_for(res, "fit transform");
  const auto j = nlohmann::json::parse(res->body);
  return {transform_from_json(j.at("transform")), j.at("residuals").get<std::vector<double>>(),
          base64_decode(j.at("preview_png_base64").get<std::string>())};
}

RemoteSetRecord SyncClient::put_mask(std::string_view id, std::span<const std::uint8_t> mask_png,
                                     std::optional<std::int64_t> expected_revision) {
  const auto res = impl_->client.Put(set_path(id) + "/mask" + revision_query(expected_revision),
                                     std::string(mask_png.begin(), mask_png.end()), "image/png");
  if (!res || res->status != 200) raise_for(res, "put mask");
  return record_from_json(nlohmann::json::parse(res->body));
}

}  // namespace amdprep
