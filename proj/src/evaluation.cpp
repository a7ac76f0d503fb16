#include "amdprep/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "amdprep/error.hpp"

namespace amdprep {

namespace {

constexpr const char* kUndefined = "—";

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::vector<const MetricsRow*> ordered(std::span<const MetricsRow> rows) {
  std::map<std::string, std::size_t> group;
  for (const auto& r : rows) group.try_emplace(r.model, group.size());
  std::vector<const MetricsRow*> out;
  for (const auto& r : rows) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [&group](const MetricsRow* a, const MetricsRow* b) {
    const auto ga = group.at(a->model);
    const auto gb = group.at(b->model);
    if (ga != gb) return ga < gb;
    return a->threshold < b->threshold;
  });
  return out;
}

Metrics macro_average(std::span<const ConfusionCounts> per_image, std::size_t& empty_images) {
  double sens = 0.0, spec = 0.0, acc = 0.0, dice = 0.0;
  std::size_t n_sens = 0, n_spec = 0, n_dice = 0;
  empty_images = 0;
  for (const auto& c : per_image) {
    const Metrics m = metrics_from_counts(c);
    if (m.sensitivity) {
      sens += *m.sensitivity;
      ++n_sens;
    }
    if (m.specificity) {
      spec += *m.specificity;
      ++n_spec;
    }
    acc += m.accuracy;
    if (m.dice_both_empty) {
      ++empty_images;
    } else {
      dice += m.dice;
      ++n_dice;
    }
  }
  Metrics out;
  if (n_sens > 0) out.sensitivity = sens / static_cast<double>(n_sens);
  if (n_spec > 0) out.specificity = spec / static_cast<double>(n_spec);
  out.accuracy = acc / static_cast<double>(per_image.size());
  if (n_dice > 0) {
    out.dice = dice / static_cast<double>(n_dice);
  } else {
    out.dice = 1.0;
    out.dice_both_empty = true;
  }
  return out;
}

}  // namespace

ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& truth) {
  if (pred.width() != truth.width() || pred.height() != truth.height()) {
    throw Error(Errc::DimensionMismatch,
                "prediction is " + std::to_string(pred.width()) + "x" + std::to_string(pred.height()) +
                    " but ground truth is " + std::to_string(truth.width()) + "x" + std::to_string(truth.height()));
  }
  // Index by 2*pred + truth: 0 tn, 1 fn, 2 fp, 3 tp.
  std::array<std::uint64_t, 4> bins{};
  const auto p = pred.bits();
  const auto t = truth.bits();
  for (std::size_t i = 0; i < p.size(); ++i) ++bins[2u * p[i] + t[i]];
  return {.tp = bins[3], .fp = bins[2], .tn = bins[0], .fn = bins[1]};
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error(Errc::InvalidArgument, "metrics need at least one counted sample");
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  Metrics m;
  if (c.tp + c.fn > 0) m.sensitivity = d(c.tp) / d(c.tp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = d(c.tn) / d(c.tn + c.fp);
  m.accuracy = d(c.tp + c.tn) / d(c.total());
  const std::uint64_t dice_den = 2 * c.tp + c.fp + c.fn;
  if (dice_den > 0) {
    m.dice = 2.0 * d(c.tp) / d(dice_den);
  } else {
    m.dice = 1.0;
    m.dice_both_empty = true;
  }
  return m;
}

ConfusionCounts classification_counts(std::span<const double> scores, std::span<const bool> truth, double gate) {
  if (scores.size() != truth.size()) {
    throw Error(Errc::DimensionMismatch, "scores and labels differ in length");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= gate;
    if (predicted && truth[i]) ++c.tp;
    else if (predicted) ++c.fp;
    else if (truth[i]) ++c.fn;
    else ++c.tn;
  }
  return c;
}

std::vector<MetricsRow> sweep(std::span<const ModelPredictions> predictions, std::span<const BinaryMask> truths,
                              std::span<const double> thresholds, Aggregation aggregation) {
  if (predictions.empty() || truths.empty()) throw Error(Errc::EmptyCorpus, "nothing to evaluate");
  if (thresholds.empty()) throw Error(Errc::InvalidArgument, "at least one threshold is required");
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw Error(Errc::InvalidThreshold, "threshold must lie in [0, 1], got " + std::to_string(t));
    }
  }

  std::vector<MetricsRow> rows;
  for (const auto& model : predictions) {
    if (model.maps.size() != truths.size()) {
      throw Error(Errc::InvalidArgument, "model '" + model.model + "' has " + std::to_string(model.maps.size()) +
                                             " maps for " + std::to_string(truths.size()) + " ground-truth masks");
    }
    for (double threshold : thresholds) {
      std::vector<ConfusionCounts> per_image;
      per_image.reserve(truths.size());
      MetricsRow row;
      row.model = model.model;
      row.threshold = threshold;
      for (std::size_t i = 0; i < truths.size(); ++i) {
        per_image.push_back(confusion(binarize(model.maps[i], threshold), truths[i]));
        row.counts += per_image.back();
        if (per_image.back().tp + per_image.back().fp + per_image.back().fn == 0) ++row.empty_images;
      }
      row.images = truths.size();
      if (aggregation == Aggregation::Micro) {
        row.metrics = metrics_from_counts(row.counts);
      } else {
        row.metrics = macro_average(per_image, row.empty_images);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string render_report(std::span<const MetricsRow> rows, ReportFormat format) {
  if (rows.empty()) throw Error(Errc::InvalidArgument, "report needs at least one row");
  std::ostringstream out;
  const auto sorted = ordered(rows);

  if (format == ReportFormat::Csv) {
    auto ratio = [](const std::optional<double>& v) { return v ? fixed(*v, 6) : std::string(kUndefined); };
    out << "model,threshold,tp,fp,tn,fn,sensitivity,specificity,accuracy,dice\n";
    for (const MetricsRow* r : sorted) {
      out << csv_field(r->model) << ',' << shortest(r->threshold) << ',' << r->counts.tp << ',' << r->counts.fp << ','
          << r->counts.tn << ',' << r->counts.fn << ',' << ratio(r->metrics.sensitivity) << ','
          << ratio(r->metrics.specificity) << ',' << fixed(r->metrics.accuracy, 6) << ','
          << fixed(r->metrics.dice, 6) << '\n';
    }
    return out.str();
  }

  auto pct = [](const std::optional<double>& v) { return v ? fixed(*v * 100.0, 2) : std::string(kUndefined); };
  bool any_flagged = false;
  out << "| Network model | Threshold | Sensitivity | Specificity | Accuracy | Dice |\n";
  out << "|---|---:|---:|---:|---:|---:|\n";
  const std::string* previous = nullptr;
  for (const MetricsRow* r : sorted) {
    const bool first = previous == nullptr || *previous != r->model;
    previous = &r->model;
    std::string dice = fixed(r->metrics.dice * 100.0, 2);
    if (r->metrics.dice_both_empty) {
      dice += "*";
      any_flagged = true;
    }
    out << "| " << (first ? md_cell(r->model) : std::string()) << " | " << shortest(r->threshold) << " | "
        << pct(r->metrics.sensitivity) << " | " << pct(r->metrics.specificity) << " | "
        << fixed(r->metrics.accuracy * 100.0, 2) << " | " << dice << " |\n";
  }
  if (any_flagged) {
    out << "\n\\* Dice set to 100.00 because prediction and ground truth are both empty.\n";
  }
  return out.str();
}

}  // namespace amdprep
