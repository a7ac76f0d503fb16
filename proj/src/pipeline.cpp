#include "amdprep/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include <unistd.h>

#include "amdprep/dataset.hpp"
#include "amdprep/error.hpp"
#include "amdprep/png_io.hpp"
#include "json.hpp"

namespace amdprep {

namespace fs = std::filesystem;

namespace {

void write_case(const fs::path& out_dir, const std::string& id, const EvaluationResult& r) {
  static std::atomic<unsigned> counter{0};
  const fs::path staged = out_dir / (".tmp-" + id + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::error_code ec;
  try {
    fs::create_directories(staged);
    const nlohmann::json j{{"id", id}, {"score", r.score}, {"decision", r.decision}};
    write_text_atomic(staged / "result.json", j.dump(2) + "\n");
    if (r.decision) {
      write_png(staged / "mask.png", r.mask->to_gray());
      write_png(staged / "overlay.png", *r.overlay);
    }
    const fs::path target = out_dir / id;
    fs::remove_all(target, ec);
    fs::rename(staged, target, ec);
    if (ec) throw Error(Errc::IoError, "cannot install " + target.string() + ": " + ec.message());
  } catch (...) {
    fs::remove_all(staged, ec);
    throw;
  }
}

CaseOutcome process(const CaseSpec& spec, const fs::path& out_dir, const PipelineOptions& options) {
  CaseOutcome outcome{.id = spec.id, .result = std::nullopt, .error = {}};
  try {
    if (!spec.problem.empty()) throw Error(Errc::ValidationFailed, spec.problem);
    if (!valid_set_id(spec.id)) throw Error(Errc::ValidationFailed, "case id must match [A-Za-z0-9_-]{1,64}");
    const ImageBuffer rgb = read_png(spec.rgb);
    std::optional<ProbabilityMap> seg;
    const bool positive = spec.score >= options.gate;
    if (positive && spec.seg_map) seg = ProbabilityMap::from_gray(read_png(*spec.seg_map));
    EvaluationResult result = run_case(rgb, spec.score, seg, options);
    write_case(out_dir, spec.id, result);
    outcome.result = std::move(result);
  } catch (const std::exception& e) {
    outcome.error = e.what();
  }
  return outcome;
}

}  // namespace

EvaluationResult run_case(const ImageBuffer& rgb, double score, const std::optional<ProbabilityMap>& seg_map,
                          const PipelineOptions& options) {
  if (!(score >= 0.0 && score <= 1.0)) {
    throw Error(Errc::InvalidArgument, "classifier score must lie in [0, 1], got " + std::to_string(score));
  }
  if (!(options.gate >= 0.0 && options.gate <= 1.0)) {
    throw Error(Errc::InvalidArgument, "gate must lie in [0, 1]");
  }
  EvaluationResult result{.score = score, .decision = score >= options.gate, .mask = {}, .overlay = {}};
  if (!result.decision) return result;

  if (!seg_map) {
    throw Error(Errc::MissingSegmentationMap, "score " + std::to_string(score) +
                                                  " passes the gate but no segmentation map was supplied");
  }
  if (seg_map->width() != rgb.width() || seg_map->height() != rgb.height()) {
    throw Error(Errc::DimensionMismatch, "segmentation map is " + std::to_string(seg_map->width()) + "x" +
                                             std::to_string(seg_map->height()) + " but the image is " +
                                             std::to_string(rgb.width()) + "x" + std::to_string(rgb.height()));
  }
  BinaryMask mask = binarize(*seg_map, options.seg_threshold);
  result.overlay = overlay(to_rgb(rgb), mask, options.tint, options.alpha);
  result.mask = std::move(mask);
  return result;
}

std::vector<CaseSpec> parse_case_manifest(std::string_view text, const fs::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ValidationFailed, std::string("case manifest is not valid JSON: ") + e.what(),
                "case manifest must be a JSON array");
  }
  if (!doc.is_array()) {
    throw Error(Errc::ValidationFailed, "case manifest must be a JSON array", "case manifest must be a JSON array");
  }
  auto resolve = [&base_dir](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  std::vector<CaseSpec> cases;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    CaseSpec spec;
    spec.id = item.is_object() && item.contains("id") && item["id"].is_string() ? item["id"].get<std::string>()
                                                                                 : "#" + std::to_string(i);
    std::string& problem = spec.problem;
    if (!item.is_object()) {
      problem = "case must be a JSON object";
    } else if (!item.contains("id") || !item["id"].is_string()) {
      problem = "case needs a string 'id'";
    } else if (!item.contains("rgb") || !item["rgb"].is_string()) {
      problem = "case needs a string 'rgb' path";
    } else if (!item.contains("score") || !item["score"].is_number()) {
      problem = "case needs a numeric 'score'";
    } else if (item.contains("seg_map") && !item["seg_map"].is_null() && !item["seg_map"].is_string()) {
      problem = "'seg_map' must be a path string";
    }
    if (!problem.empty()) {
      cases.push_back(std::move(spec));
      continue;
    }
    spec.rgb = resolve(item["rgb"].get<std::string>());
    spec.score = item["score"].get<double>();
    if (item.contains("seg_map") && item["seg_map"].is_string()) {
      spec.seg_map = resolve(item["seg_map"].get<std::string>());
    }
    cases.push_back(std::move(spec));
  }
  return cases;
}

BatchReport run_batch(std::span<const CaseSpec> cases, const fs::path& out_dir, const PipelineOptions& options,
                      unsigned threads) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string() + ": " + ec.message());

  BatchReport report;
  report.cases.resize(cases.size());

  // Duplicate ids would race on one output directory; later duplicates fail.
  std::set<std::string> seen;
  std::vector<bool> duplicate(cases.size(), false);
  for (std::size_t i = 0; i < cases.size(); ++i) duplicate[i] = !seen.insert(cases[i].id).second;

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cases.size(); i = next++) {
      if (duplicate[i]) {
        report.cases[i] = {.id = cases[i].id, .result = std::nullopt, .error = "duplicate case id"};
      } else {
        report.cases[i] = process(cases[i], out_dir, options);
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(cases.size(), 1))));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }

  nlohmann::json failed = nlohmann::json::array();
  for (const auto& c : report.cases) {
    if (!c.result) {
      ++report.failures;
      failed.push_back({{"id", c.id}, {"error", c.error}});
    } else if (c.result->decision) {
      ++report.positives;
    } else {
      ++report.negatives;
    }
  }
  const nlohmann::json summary{{"cases", cases.size()},
                               {"positives", report.positives},
                               {"negatives", report.negatives},
                               {"failures", failed}};
  write_text_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  return report;
}

BatchReport run_batch(const fs::path& manifest_path, const fs::path& out_dir, const PipelineOptions& options,
                      unsigned threads) {
  const auto bytes = read_file(manifest_path);
  const auto cases = parse_case_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                                         manifest_path.parent_path());
  return run_batch(cases, out_dir, options, threads);
}

}  // namespace amdprep
