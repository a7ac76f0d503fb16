#include "amdprep/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <set>
#include <sstream>

#include <fcntl.h>
#include <unistd.h>

#include "amdprep/digest.hpp"
#include "amdprep/error.hpp"
#include "amdprep/json_codec.hpp"
#include "amdprep/png_io.hpp"
#include "amdprep/zip_archive.hpp"

namespace amdprep {

namespace fs = std::filesystem;

namespace {

std::string size_rule(std::string_view file) {
  std::string name(file.substr(0, file.find('.')));
  return name + " must be " + std::to_string(kSetSize) + "x" + std::to_string(kSetSize);
}

void check_images(const ImageBuffer& rgb, const ImageBuffer& contrast, const ImageBuffer& mask, Errc code) {
  auto fail = [code](const std::string& rule) { throw Error(code, rule, rule); };
  const auto sized = [](const ImageBuffer& img) {
    return img.width() == kSetSize && img.height() == kSetSize;
  };
  if (!sized(rgb)) fail(size_rule(kRgbFile));
  if (!sized(contrast)) fail(size_rule(kContrastFile));
  if (!sized(mask)) fail(size_rule(kMaskFile));
  if (rgb.channels() != 3) fail("rgb must have 3 channels");
  if (mask.channels() != 1) fail("mask must be grayscale");
  for (auto v : mask.data()) {
    if (v != 0 && v != 255) fail("mask values must be 0 or 255");
  }
}

void check_manifest_fields(std::string_view id, std::int64_t revision, Errc code) {
  if (!valid_set_id(id)) {
    throw Error(code, "set id must match [A-Za-z0-9_-]{1,64}", "set id must match [A-Za-z0-9_-]{1,64}");
  }
  if (revision < 1) throw Error(code, "revision must be >= 1", "revision must be >= 1");
}

std::string derive_id(const ImageBuffer& rgb, const ImageBuffer& contrast, const ImageBuffer& mask,
                      const std::vector<PointPair>& pairs) {
  std::vector<std::uint8_t> blob;
  for (const auto* img : {&rgb, &contrast, &mask}) {
    blob.insert(blob.end(), img->data().begin(), img->data().end());
  }
  const std::string pairs_text = pairs_to_json(pairs).dump();
  blob.insert(blob.end(), pairs_text.begin(), pairs_text.end());
  return sha256_hex(blob).substr(0, 16);
}

std::vector<std::uint8_t> to_bytes(std::string_view s) { return {s.begin(), s.end()}; }

std::string to_text(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

[[noreturn]] void corrupt(const std::string& rule, const std::string& detail = {}) {
  throw Error(Errc::CorruptSet, detail.empty() ? rule : rule + ": " + detail, rule);
}

fs::path staging_dir(const fs::path& root, std::string_view id) {
  static std::atomic<unsigned> counter{0};
  return root / (".tmp-" + std::string(id) + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
}

/// Moves `staged` to `target`; an existing target is swapped out atomically
/// and then removed.
void install_dir(const fs::path& staged, const fs::path& target) {
  if (::renameat2(AT_FDCWD, staged.c_str(), AT_FDCWD, target.c_str(), RENAME_NOREPLACE) == 0) return;
  if (errno == EEXIST) {
    if (::renameat2(AT_FDCWD, staged.c_str(), AT_FDCWD, target.c_str(), RENAME_EXCHANGE) == 0) {
      fs::remove_all(staged);  // now holds the previous revision
      return;
    }
  }
  // Filesystems without renameat2 flags: move the old set aside first.
  std::error_code ec;
  if (fs::exists(target)) {
    const fs::path aside = fs::path(staged).concat(".old");
    fs::rename(target, aside, ec);
    if (ec) throw Error(Errc::IoError, "cannot replace " + target.string() + ": " + ec.message());
    fs::rename(staged, target, ec);
    fs::remove_all(aside);
  } else {
    fs::rename(staged, target, ec);
  }
  if (ec) throw Error(Errc::IoError, "cannot install " + target.string() + ": " + ec.message());
}

}  // namespace

const std::vector<std::string>& set_file_names() {
  static const std::vector<std::string> names{std::string(kRgbFile), std::string(kContrastFile),
                                              std::string(kMaskFile), std::string(kAlignmentFile),
                                              std::string(kManifestFile)};
  return names;
}

std::string_view label_name(Label label) noexcept { return label == Label::Amd ? "amd" : "healthy"; }

Label parse_label(std::string_view text) {
  if (text == "amd") return Label::Amd;
  if (text == "healthy") return Label::Healthy;
  throw Error(Errc::InvalidArgument, "label must be 'amd' or 'healthy', got '" + std::string(text) + "'");
}

bool valid_set_id(std::string_view id) noexcept {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

TrainingSet assemble_set(const ImageBuffer& rgb_raw, const ImageBuffer& contrast_raw,
                         const std::vector<PointPair>& pairs, const BinaryMask& mask, Label label,
                         std::optional<std::string> id) {
  if (mask.width() != kSetSize || mask.height() != kSetSize) {
    throw Error(Errc::MaskDimensionMismatch,
                "mask must be " + std::to_string(kSetSize) + "x" + std::to_string(kSetSize) + ", got " +
                    std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
  }
  if (rgb_raw.channels() != 3) throw Error(Errc::InvalidImage, "rgb image must have 3 channels");

  const SimilarityTransform norm = normalization_transform(rgb_raw.width(), rgb_raw.height(), kSetSize, kSetSize);
  std::vector<PointPair> normalized;
  normalized.reserve(pairs.size());
  for (const auto& p : pairs) normalized.push_back({p.source, apply_point(norm, p.target)});

  const SimilarityTransform transform = estimate_similarity(normalized);

  TrainingSet set{
      .id = {},
      .rgb = warp(rgb_raw, norm, kSetSize, kSetSize),
      .contrast = warp(contrast_raw, transform, kSetSize, kSetSize),
      .mask = mask.to_gray(),
      .transform = transform,
      .point_pairs = std::move(normalized),
      .revision = 1,
      .label = label,
  };
  set.id = id ? std::move(*id) : derive_id(set.rgb, set.contrast, set.mask, set.point_pairs);
  validate_set(set);
  return set;
}

TrainingSet assemble_healthy_set(const ImageBuffer& rgb_raw, std::optional<std::string> id) {
  if (rgb_raw.channels() != 3) throw Error(Errc::InvalidImage, "rgb image must have 3 channels");
  TrainingSet set{
      .id = {},
      .rgb = center_crop_scale(rgb_raw, kSetSize, kSetSize),
      .contrast = ImageBuffer(kSetSize, kSetSize, 1),
      .mask = ImageBuffer(kSetSize, kSetSize, 1),
      .transform = SimilarityTransform::identity(),
      .point_pairs = {},
      .revision = 1,
      .label = Label::Healthy,
  };
  set.id = id ? std::move(*id) : derive_id(set.rgb, set.contrast, set.mask, set.point_pairs);
  validate_set(set);
  return set;
}

void validate_set(const TrainingSet& set) {
  check_manifest_fields(set.id, set.revision, Errc::ValidationFailed);
  check_images(set.rgb, set.contrast, set.mask, Errc::ValidationFailed);
}

std::string current_timestamp_utc() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string render_manifest(const SetManifest& m) {
  nlohmann::json j{{"id", m.id},
                   {"revision", m.revision},
                   {"label", label_name(m.label)},
                   {"created_at", m.created_at},
                   {"residual_max_px", m.residual_max_px},
                   {"residual_mean_px", m.residual_mean_px},
                   {"checksums", m.checksums}};
  return j.dump(2) + "\n";
}

SetManifest parse_manifest(std::string_view text) {
  const char* rule = "manifest.json must be valid";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    corrupt(rule, e.what());
  }
  try {
    SetManifest m;
    m.id = j.at("id").get<std::string>();
    m.revision = j.at("revision").get<std::int64_t>();
    m.label = parse_label(j.at("label").get<std::string>());
    m.created_at = j.at("created_at").get<std::string>();
    m.residual_max_px = j.at("residual_max_px").get<double>();
    m.residual_mean_px = j.at("residual_mean_px").get<double>();
    m.checksums = j.at("checksums").get<std::map<std::string, std::string>>();
    check_manifest_fields(m.id, m.revision, Errc::CorruptSet);
    return m;
  } catch (const nlohmann::json::exception& e) {
    corrupt(rule, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::CorruptSet) throw;
    corrupt(rule, e.what());
  }
}

SetFiles encode_set_files(const TrainingSet& set, std::optional<std::string> created_at) {
  validate_set(set);
  SetFiles files;
  files[std::string(kRgbFile)] = encode_png(set.rgb);
  files[std::string(kContrastFile)] = encode_png(set.contrast);
  files[std::string(kMaskFile)] = encode_png(set.mask);
  const nlohmann::json alignment{{"transform", transform_to_json(set.transform)},
                                 {"pairs", pairs_to_json(set.point_pairs)}};
  files[std::string(kAlignmentFile)] = to_bytes(alignment.dump(2) + "\n");

  const auto res = residuals(set.transform, set.point_pairs);
  const auto summary = summarize_residuals(res);
  SetManifest m{.id = set.id,
                .revision = set.revision,
                .label = set.label,
                .created_at = created_at ? *created_at : current_timestamp_utc(),
                .residual_max_px = summary.max_px,
                .residual_mean_px = summary.mean_px,
                .checksums = {}};
  for (const auto& [name, bytes] : files) m.checksums[name] = sha256_hex(bytes);
  files[std::string(kManifestFile)] = to_bytes(render_manifest(m));
  return files;
}

DecodedSet decode_set_files(const SetFiles& files, std::optional<std::string_view> expected_id) {
  const auto& names = set_file_names();
  for (const auto& name : names) {
    if (!files.contains(name)) corrupt("set must contain " + name);
  }
  if (files.size() != names.size()) {
    corrupt("set must contain exactly rgb.png, contrast.png, mask.png, alignment.json, manifest.json");
  }

  SetManifest manifest = parse_manifest(to_text(files.at(std::string(kManifestFile))));
  if (expected_id && manifest.id != *expected_id) {
    corrupt("manifest id must match set location",
            "'" + manifest.id + "' vs '" + std::string(*expected_id) + "'");
  }
  for (const auto& name : names) {
    if (name == kManifestFile) continue;
    const auto it = manifest.checksums.find(name);
    if (it == manifest.checksums.end() || it->second != sha256_hex(files.at(name))) {
      corrupt("checksum mismatch for " + name);
    }
  }
  if (manifest.checksums.size() != names.size() - 1) corrupt("manifest.json must be valid", "unexpected checksum entries");

  auto decode = [&files](std::string_view name) {
    try {
      return decode_png(files.at(std::string(name)));
    } catch (const Error& e) {
      corrupt(std::string(name) + " must be an 8-bit grayscale or RGB PNG", e.what());
    }
  };
  ImageBuffer rgb = decode(kRgbFile);
  ImageBuffer contrast = decode(kContrastFile);
  ImageBuffer mask = decode(kMaskFile);
  check_images(rgb, contrast, mask, Errc::CorruptSet);

  const char* alignment_rule = "alignment.json must hold a transform and point pairs";
  SimilarityTransform transform;
  std::vector<PointPair> pairs;
  try {
    const auto j = nlohmann::json::parse(to_text(files.at(std::string(kAlignmentFile))));
    transform = transform_from_json(j.at("transform"));
    pairs = pairs_from_json(j.at("pairs"));
  } catch (const nlohmann::json::exception& e) {
    corrupt(alignment_rule, e.what());
  } catch (const Error& e) {
    corrupt(alignment_rule, e.what());
  }

  TrainingSet set{.id = manifest.id,
                  .rgb = std::move(rgb),
                  .contrast = std::move(contrast),
                  .mask = std::move(mask),
                  .transform = transform,
                  .point_pairs = std::move(pairs),
                  .revision = manifest.revision,
                  .label = manifest.label};
  return {std::move(set), std::move(manifest)};
}

SetFiles read_set_files(const fs::path& store_root, std::string_view id) {
  if (!valid_set_id(id)) throw Error(Errc::NotFound, "no set with id '" + std::string(id) + "'");
  const fs::path dir = store_root / std::string(id);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw Error(Errc::NotFound, "no set with id '" + std::string(id) + "'");
  SetFiles files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    files[entry.path().filename().string()] = read_file(entry.path());
  }
  return files;
}

DecodedSet load_set_with_manifest(const fs::path& store_root, std::string_view id) {
  return decode_set_files(read_set_files(store_root, id), id);
}

TrainingSet load_set(const fs::path& store_root, std::string_view id) {
  return load_set_with_manifest(store_root, id).set;
}

SetManifest store_set_files(const SetFiles& files, const fs::path& store_root, const SaveOptions& options) {
  const SetManifest manifest = decode_set_files(files).manifest;
  std::error_code ec;
  fs::create_directories(store_root, ec);
  if (ec) throw Error(Errc::IoError, "cannot create store " + store_root.string() + ": " + ec.message());

  const fs::path staged = staging_dir(store_root, manifest.id);
  try {
    fs::create_directory(staged);
    for (const auto& name : set_file_names()) {
      const auto& bytes = files.at(name);
      write_file_atomic(staged / name, bytes);
      if (options.after_file_written) options.after_file_written(name);
    }
    install_dir(staged, store_root / manifest.id);
  } catch (...) {
    fs::remove_all(staged, ec);
    throw;
  }
  return manifest;
}

SetManifest save_set(const TrainingSet& set, const fs::path& store_root, const SaveOptions& options) {
  return store_set_files(encode_set_files(set, options.created_at), store_root, options);
}

SetListing list_sets(const fs::path& store_root) {
  std::error_code ec;
  if (!fs::is_directory(store_root, ec)) {
    throw Error(Errc::IoError, "store root " + store_root.string() + " is not a directory");
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(store_root)) {
    const std::string name = entry.path().filename().string();
    if (!entry.is_directory() || name.starts_with('.')) continue;
    ids.push_back(name);
  }
  std::sort(ids.begin(), ids.end());

  SetListing listing;
  for (const auto& id : ids) {
    if (!valid_set_id(id)) {
      listing.corrupt.push_back({id, "set id must match [A-Za-z0-9_-]{1,64}", "invalid directory name"});
      continue;
    }
    try {
      listing.manifests.push_back(load_set_with_manifest(store_root, id).manifest);
    } catch (const Error& e) {
      listing.corrupt.push_back({id, e.invariant(), e.what()});
    }
  }
  return listing;
}

std::vector<std::uint8_t> pack_bundle(const SetFiles& files) {
  std::vector<ZipEntry> entries;
  for (const auto& name : set_file_names()) {
    const auto it = files.find(name);
    if (it == files.end()) throw Error(Errc::InvalidArgument, "bundle is missing " + name);
    entries.push_back({name, it->second});
  }
  return write_zip(entries);
}

std::vector<std::uint8_t> pack_bundle(const fs::path& store_root, std::string_view id) {
  auto files = read_set_files(store_root, id);
  decode_set_files(files, id);
  return pack_bundle(files);
}

SetFiles unpack_bundle(std::span<const std::uint8_t> bundle) {
  SetFiles files;
  for (auto& entry : read_zip(bundle)) files[entry.name] = std::move(entry.data);
  return files;
}

}  // namespace amdprep
