#include "amdprep/cli.hpp"

#include <csignal>
#include <iostream>
#include <sstream>

#include <pthread.h>

#include "CLI11.hpp"
#include "amdprep/dataset.hpp"
#include "amdprep/error.hpp"
#include "amdprep/evaluation.hpp"
#include "amdprep/json_codec.hpp"
#include "amdprep/pipeline.hpp"
#include "amdprep/png_io.hpp"
#include "amdprep/remote_store.hpp"
#include "amdprep/sync_service.hpp"

namespace amdprep {

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::IoError:
    case Errc::NotFound:
    case Errc::RevisionConflict:
    case Errc::PayloadTooLarge:
      return kExitRuntime;
    default:
      return kExitUsage;
  }
}

struct CliConfig {
  bool json_errors = false;
  int verbosity = 0;

  // register / pack
  std::string rgb, contrast, points, mask, out_transform, out_warped, store, label = "amd", id;
  // equalize / normalize
  std::string in, out;
  int size = kSetSize;
  // evaluate
  std::string pred_dir, truth_dir, format = "csv", model, aggregate = "micro";
  std::vector<double> thresholds{kDefaultThresholds.begin(), kDefaultThresholds.end()};
  // pipeline
  std::string manifest, out_dir;
  double gate = 0.5;
  double seg_threshold = 0.05;
  unsigned threads = 1;
  // serve / push / pull
  std::string bind = "127.0.0.1:8080", server, ui_dir;
  std::int64_t expected_revision = -1;
  std::size_t max_bundle_mb = kDefaultMaxBundleBytes >> 20;
};

class Console {
public:
  Console(std::ostream& out, std::ostream& err, const CliConfig& cfg) : out_(out), err_(err), cfg_(cfg) {}

  std::ostream& out() { return out_; }

  void log(int level, const std::string& line) {
    if (cfg_.verbosity >= level) err_ << line << '\n';
  }

  int fail(int code, std::string_view kind, const std::string& message, const std::string& invariant = {}) {
    if (cfg_.json_errors) {
      nlohmann::json j{{"error", kind}, {"message", message}, {"exit_code", code}};
      if (!invariant.empty()) j["invariant"] = invariant;
      err_ << j.dump() << '\n';
    } else {
      err_ << "error: " << message << '\n';
    }
    return code;
  }

private:
  std::ostream& out_;
  std::ostream& err_;
  const CliConfig& cfg_;
};

std::vector<PointPair> read_pairs(const std::string& path) {
  const auto bytes = read_file(path);
  return pairs_from_json(parse_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                    "points file"));
}

std::string format_px(double v) {
  std::ostringstream s;
  s.precision(6);
  s << std::fixed << v;
  return s.str();
}

int cmd_register(const CliConfig& cfg, Console& con) {
  const auto pairs = read_pairs(cfg.points);
  const ImageBuffer rgb = read_png(cfg.rgb);
  const ImageBuffer contrast = read_png(cfg.contrast);
  const SimilarityTransform t = estimate_similarity(pairs);
  const auto res = residuals(t, pairs);
  const auto summary = summarize_residuals(res);

  write_text_atomic(cfg.out_transform, transform_to_json(t).dump(2) + "\n");
  write_png(cfg.out_warped, warp(contrast, t, rgb.width(), rgb.height()));

  for (std::size_t i = 0; i < res.size(); ++i) con.out() << "pair " << i << " residual_px " << format_px(res[i]) << '\n';
  con.out() << "residual_max_px " << format_px(summary.max_px) << '\n';
  con.out() << "residual_mean_px " << format_px(summary.mean_px) << '\n';
  return 0;
}

int cmd_pack(const CliConfig& cfg, Console& con) {
  const Label label = parse_label(cfg.label);
  const ImageBuffer rgb = read_png(cfg.rgb);
  TrainingSet set = [&] {
    if (label == Label::Healthy && cfg.contrast.empty()) {
      return assemble_healthy_set(rgb, cfg.id.empty() ? std::nullopt : std::optional(cfg.id));
    }
    if (cfg.contrast.empty() || cfg.points.empty() || cfg.mask.empty()) {
      throw Error(Errc::InvalidArgument, "--contrast, --points and --mask are required for amd sets");
    }
    const ImageBuffer contrast = read_png(cfg.contrast);
    const auto pairs = read_pairs(cfg.points);
    const BinaryMask mask = BinaryMask::from_gray(read_png(cfg.mask));
    return assemble_set(rgb, contrast, pairs, mask, label, cfg.id.empty() ? std::nullopt : std::optional(cfg.id));
  }();
  const SetManifest m = save_set(set, cfg.store);
  con.out() << "set " << m.id << " revision " << m.revision << " -> " << (fs::path(cfg.store) / m.id).string() << '\n';
  con.out() << "residual_max_px " << format_px(m.residual_max_px) << '\n';
  con.out() << "residual_mean_px " << format_px(m.residual_mean_px) << '\n';
  return 0;
}

int cmd_equalize(const CliConfig& cfg, Console&) {
  write_png(cfg.out, equalize_histogram(read_png(cfg.in)));
  return 0;
}

int cmd_normalize(const CliConfig& cfg, Console&) {
  write_png(cfg.out, center_crop_scale(read_png(cfg.in), cfg.size, cfg.size));
  return 0;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

int cmd_evaluate(const CliConfig& cfg, Console& con) {
  const fs::path truth_dir(cfg.truth_dir);
  const fs::path pred_dir(cfg.pred_dir);
  if (!fs::is_directory(truth_dir)) throw Error(Errc::IoError, "truth directory " + truth_dir.string() + " not found");
  if (!fs::is_directory(pred_dir)) throw Error(Errc::IoError, "prediction directory " + pred_dir.string() + " not found");

  const auto truth_files = png_files(truth_dir);
  if (truth_files.empty()) throw Error(Errc::EmptyCorpus, "no ground-truth PNGs in " + truth_dir.string());

  std::vector<BinaryMask> truths;
  for (const auto& f : truth_files) {
    try {
      truths.push_back(BinaryMask::from_gray(read_png(f)));
    } catch (const Error& e) {
      throw Error(Errc::ValidationFailed, f.string() + ": " + e.what(), e.invariant());
    }
  }

  std::vector<std::pair<std::string, fs::path>> models;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.is_directory()) models.emplace_back(e.path().filename().string(), e.path());
  }
  std::sort(models.begin(), models.end());
  if (models.empty()) {
    std::string name = cfg.model.empty() ? fs::absolute(pred_dir).lexically_normal().filename().string() : cfg.model;
    if (name.empty()) name = fs::absolute(pred_dir).lexically_normal().parent_path().filename().string();
    models.emplace_back(name, pred_dir);
  }

  std::vector<ModelPredictions> predictions;
  for (const auto& [name, dir] : models) {
    ModelPredictions mp{name, {}};
    for (std::size_t i = 0; i < truth_files.size(); ++i) {
      const fs::path file = dir / truth_files[i].filename();
      if (!fs::exists(file)) {
        throw Error(Errc::ValidationFailed, "missing prediction " + file.string(), "every truth mask needs a prediction");
      }
      ProbabilityMap map = [&] {
        try {
          return ProbabilityMap::from_gray(read_png(file));
        } catch (const Error& e) {
          throw Error(Errc::ValidationFailed, e.what(), e.invariant());
        }
      }();
      if (map.width() != truths[i].width() || map.height() != truths[i].height()) {
        throw Error(Errc::DimensionMismatch, file.string() + " is " + std::to_string(map.width()) + "x" +
                                                 std::to_string(map.height()) + " but " + truth_files[i].string() +
                                                 " is " + std::to_string(truths[i].width()) + "x" +
                                                 std::to_string(truths[i].height()));
      }
      mp.maps.push_back(std::move(map));
    }
    con.log(1, "model " + name + ": " + std::to_string(mp.maps.size()) + " maps");
    predictions.push_back(std::move(mp));
  }

  const auto rows = sweep(predictions, truths, cfg.thresholds,
                          cfg.aggregate == "macro" ? Aggregation::Macro : Aggregation::Micro);
  const std::string report = render_report(rows, cfg.format == "markdown" ? ReportFormat::Markdown : ReportFormat::Csv);
  if (cfg.out.empty()) {
    con.out() << report;
  } else {
    write_text_atomic(cfg.out, report);
  }
  return 0;
}

int cmd_pipeline(const CliConfig& cfg, Console& con) {
  PipelineOptions options;
  options.gate = cfg.gate;
  options.seg_threshold = cfg.seg_threshold;
  const BatchReport report = run_batch(fs::path(cfg.manifest), fs::path(cfg.out_dir), options, cfg.threads);
  for (const auto& c : report.cases) {
    if (!c.result) con.out() << "case " << c.id << " failed: " << c.error << '\n';
  }
  con.out() << "cases " << report.cases.size() << " positives " << report.positives << " negatives "
            << report.negatives << " failures " << report.failures << '\n';
  return report.failures == 0 ? 0 : kExitRuntime;
}

int cmd_serve(const CliConfig& cfg, Console& con) {
  const auto [host, port] = parse_bind_address(cfg.bind);
  RemoteStore store(cfg.store, cfg.max_bundle_mb << 20);
  ServiceOptions options{.host = host, .port = port, .ui_dir = cfg.ui_dir, .threads = 8};
  SyncService service(store, options);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service.bind();
  con.out() << "listening on " << host << ":" << service.port() << std::endl;

  std::jthread waiter([&service, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  service.serve();
  con.log(1, "server stopped");
  pthread_kill(waiter.native_handle(), SIGTERM);  // release sigwait if serve ended on its own
  return 0;
}

int cmd_push(const CliConfig& cfg, Console& con) {
  const auto [host, port] = parse_bind_address(cfg.server);
  SyncClient client(host, port);
  const auto bundle = pack_bundle(cfg.store, cfg.id);
  const auto record = client.upload(cfg.id, bundle, cfg.expected_revision >= 0
                                                        ? std::optional<std::int64_t>(cfg.expected_revision)
                                                        : std::nullopt);
  con.out() << record_to_json(record).dump() << '\n';
  return 0;
}

int cmd_pull(const CliConfig& cfg, Console& con) {
  const auto [host, port] = parse_bind_address(cfg.server);
  SyncClient client(host, port);
  const auto dl = client.download(cfg.id);
  const SetManifest m = store_set_files(unpack_bundle(dl.bundle), cfg.store);
  con.out() << "set " << m.id << " server revision " << dl.record.revision << " -> "
            << (fs::path(cfg.store) / m.id).string() << '\n';
  return 0;
}

int cmd_list(const CliConfig& cfg, Console& con) {
  const auto listing = list_sets(cfg.store);
  for (const auto& m : listing.manifests) {
    con.out() << m.id << " revision " << m.revision << " " << label_name(m.label) << " residual_max_px "
              << format_px(m.residual_max_px) << '\n';
  }
  for (const auto& c : listing.corrupt) con.out() << c.id << " CORRUPT " << c.invariant << '\n';
  return listing.corrupt.empty() ? 0 : kExitRuntime;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CliConfig cfg;
  CLI::App app{"Fundus dataset preparation and segmentation evaluation toolkit", "amdprep"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value configuration file overriding defaults");
  app.add_flag("--json", cfg.json_errors, "Print errors on stderr as single-line JSON");
  app.add_flag("-v,--verbose", cfg.verbosity, "Increase log verbosity");

  auto unit = CLI::Range(0.0, 1.0);

  auto* reg = app.add_subcommand("register", "Fit the contrast->RGB similarity from point pairs and warp");
  reg->add_option("--rgb", cfg.rgb, "RGB fundus PNG")->required();
  reg->add_option("--contrast", cfg.contrast, "Contrast (angiography) PNG")->required();
  reg->add_option("--points", cfg.points, "Point pairs JSON")->required();
  reg->add_option("--out-transform", cfg.out_transform, "Output transform JSON")->required();
  reg->add_option("--out-warped", cfg.out_warped, "Output warped contrast PNG")->required();

  auto* pack = app.add_subcommand("pack", "Assemble a 512x512 training set and save it to a store");
  pack->add_option("--rgb", cfg.rgb, "RGB fundus PNG")->required();
  pack->add_option("--contrast", cfg.contrast, "Contrast PNG");
  pack->add_option("--points", cfg.points, "Point pairs JSON (RGB targets in raw coordinates)");
  pack->add_option("--mask", cfg.mask, "512x512 {0,255} lesion mask PNG");
  pack->add_option("--store", cfg.store, "Store root directory")->required();
  pack->add_option("--label", cfg.label, "amd | healthy")->check(CLI::IsMember({"amd", "healthy"}));
  pack->add_option("--id", cfg.id, "Set id (default: derived from content)");

  auto* eq = app.add_subcommand("equalize", "Per-channel histogram equalization");
  eq->add_option("--in", cfg.in, "Input PNG")->required();
  eq->add_option("--out", cfg.out, "Output PNG")->required();

  auto* norm = app.add_subcommand("normalize", "Scale, center and crop to a square");
  norm->add_option("--in", cfg.in, "Input PNG")->required();
  norm->add_option("--out", cfg.out, "Output PNG")->required();
  norm->add_option("--size", cfg.size, "Output side length")->check(CLI::Range(1, 65535))->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "Threshold-sweep confusion metrics report");
  ev->add_option("--pred-dir", cfg.pred_dir, "Probability maps (one subdirectory per model, or one model)")->required();
  ev->add_option("--truth-dir", cfg.truth_dir, "Ground-truth {0,255} masks")->required();
  ev->add_option("--thresholds", cfg.thresholds, "Comma-separated binarization thresholds")
      ->delimiter(',')
      ->check(unit)
      ->capture_default_str();
  ev->add_option("--format", cfg.format, "csv | markdown")->check(CLI::IsMember({"csv", "markdown"}))->capture_default_str();
  ev->add_option("--aggregate", cfg.aggregate, "micro | macro")->check(CLI::IsMember({"micro", "macro"}))->capture_default_str();
  ev->add_option("--model", cfg.model, "Model name when --pred-dir holds a single model");
  ev->add_option("--out", cfg.out, "Report file (default: stdout)");

  auto* pipe = app.add_subcommand("pipeline", "Classifier-gated segmentation over a case manifest");
  pipe->add_option("--manifest", cfg.manifest, "Case manifest JSON")->required();
  pipe->add_option("--out-dir", cfg.out_dir, "Output directory")->required();
  pipe->add_option("--gate", cfg.gate, "Classifier score gate")->check(unit)->capture_default_str();
  pipe->add_option("--seg-threshold", cfg.seg_threshold, "Segmentation binarization threshold")
      ->check(unit)
      ->capture_default_str();
  pipe->add_option("--threads", cfg.threads, "Worker threads")->check(CLI::Range(1u, 256u))->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Run the set sync service");
  serve->add_option("--store", cfg.store, "Server data directory")->required();
  serve->add_option("--bind", cfg.bind, "host:port (port 0 picks a free one)")->capture_default_str();
  serve->add_option("--ui-dir", cfg.ui_dir, "Static annotator assets served at /");
  serve->add_option("--max-bundle-mb", cfg.max_bundle_mb, "Upload size limit in MiB")->capture_default_str();

  auto* push = app.add_subcommand("push", "Upload a stored set to the sync service");
  push->add_option("--store", cfg.store, "Local store root")->required();
  push->add_option("--id", cfg.id, "Set id")->required();
  push->add_option("--server", cfg.server, "host:port")->required();
  push->add_option("--expected-revision", cfg.expected_revision, "Fail unless the server holds this revision")
      ->check(CLI::NonNegativeNumber);

  auto* pull = app.add_subcommand("pull", "Download a set from the sync service into a local store");
  pull->add_option("--store", cfg.store, "Local store root")->required();
  pull->add_option("--id", cfg.id, "Set id")->required();
  pull->add_option("--server", cfg.server, "host:port")->required();

  auto* list = app.add_subcommand("list", "List sets in a local store");
  list->add_option("--store", cfg.store, "Store root")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : kExitUsage;
  }

  Console con(out, err, cfg);
  try {
    if (*reg) return cmd_register(cfg, con);
    if (*pack) return cmd_pack(cfg, con);
    if (*eq) return cmd_equalize(cfg, con);
    if (*norm) return cmd_normalize(cfg, con);
    if (*ev) return cmd_evaluate(cfg, con);
    if (*pipe) return cmd_pipeline(cfg, con);
    if (*serve) return cmd_serve(cfg, con);
    if (*push) return cmd_push(cfg, con);
    if (*pull) return cmd_pull(cfg, con);
    if (*list) return cmd_list(cfg, con);
  } catch (const Error& e) {
    return con.fail(exit_code_for(e.code()), errc_name(e.code()), e.what(), e.invariant());
  } catch (const fs::filesystem_error& e) {
    return con.fail(kExitRuntime, "IoError", e.what());
  } catch (const std::exception& e) {
    return con.fail(kExitRuntime, "Internal", e.what());
  }
  return kExitUsage;
}

}  // namespace amdprep
